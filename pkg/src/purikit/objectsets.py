"""Quantum object sets: positive operators fixed by a linear projector and
bounded in trace.

A set is described by a :class:`SpaceLayout`, a normalisation constant
``gamma`` and a :class:`ProjectorSpec`.  Built-in projector kinds cover
states, channels (any number of input and output factors), causally ordered
combs, and the extension of any of these by an unconstrained auxiliary
output.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError
from .linalg import (
    Factor,
    SpaceLayout,
    dagger,
    embed_identity,
    haar_isometry,
    link_vectors,
    max_abs,
    partial_trace,
    permute_vector,
    trace_replace,
)

KINDS = ("state", "channel", "comb", "extended")


@dataclass(frozen=True)
class ProjectorSpec:
    kind: str
    inputs: tuple[str, ...] = ()
    outputs: tuple[str, ...] = ()
    slots: tuple[tuple[str, str], ...] = ()
    base: "ProjectorSpec | None" = None
    aux: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DimensionError(f"unknown projector kind {self.kind!r}")

    @classmethod
    def state(cls):
        return cls("state")

    @classmethod
    def channel(cls, inputs, outputs):
        return cls("channel", inputs=tuple(inputs), outputs=tuple(outputs))

    @classmethod
    def comb(cls, slots):
        return cls("comb", slots=tuple((str(i), str(o)) for i, o in slots))

    @classmethod
    def extended(cls, base, aux):
        return cls("extended", base=base, aux=aux)

    def labels(self) -> tuple[str, ...]:
        """Labels this projector constrains, in canonical order."""
        if self.kind == "channel":
            return self.inputs + self.outputs
        if self.kind == "comb":
            return tuple(lab for slot in self.slots for lab in slot)
        if self.kind == "extended":
            return (self.aux,) + self.base.labels()
        return ()

    def input_labels(self) -> tuple[str, ...]:
        if self.kind == "channel":
            return self.inputs
        if self.kind == "comb":
            return tuple(i for i, _ in self.slots)
        if self.kind == "extended":
            return self.base.input_labels()
        return ()


@dataclass(frozen=True)
class QuantumObjectSet:
    """Operators ``X >= 0`` with ``P(X) = X`` and ``Tr X <= gamma``."""

    layout: SpaceLayout
    projector: ProjectorSpec
    gamma: float = field(default=None)

    def __post_init__(self):
        if self.projector.kind != "state":
            want = set(self.projector.labels())
            have = set(self.layout.labels)
            if want != have:
                raise DimensionError(
                    f"projector labels {sorted(want)} do not cover the layout {sorted(have)}"
                )
        if self.gamma is None:
            object.__setattr__(self, "gamma", float(default_gamma(self.layout, self.projector)))

    @property
    def dim(self) -> int:
        return self.layout.dim


def default_gamma(layout: SpaceLayout, projector: ProjectorSpec) -> int:
    if projector.kind == "state":
        return 1
    return layout.dim_of(projector.input_labels())


def state_set(dim: int, label: str = "S") -> QuantumObjectSet:
    return QuantumObjectSet(SpaceLayout.of((label, dim, "output")), ProjectorSpec.state())


def channel_set(d_in: int, d_out: int, labels=("I", "O")) -> QuantumObjectSet:
    """Choi operators of channels ``d_in -> d_out``; ``d_out = 1`` gives effects."""
    i, o = labels
    factors = []
    if d_in is not None:
        factors.append((i, d_in, "input"))
    if d_out is not None:
        factors.append((o, d_out, "output"))
    layout = SpaceLayout.of(*factors)
    return QuantumObjectSet(layout, ProjectorSpec.channel(layout.with_role("input"), layout.with_role("output")))


def measurement_set(d_in: int, label: str = "I") -> QuantumObjectSet:
    """Choi operators of maps with trivial output, i.e. transposed POVM elements."""
    layout = SpaceLayout.of((label, d_in, "input"))
    return QuantumObjectSet(layout, ProjectorSpec.channel((label,), ()))


def comb_set(dims, labels=None) -> QuantumObjectSet:
    """Combs with teeth ``(I1, O1), ..., (Ik, Ok)`` of the given dimensions.

    ``dims`` is a flat list ``[dI1, dO1, dI2, dO2, ...]``.
    """
    if len(dims) % 2:
        raise DimensionError("comb dimensions come in (input, output) pairs")
    k = len(dims) // 2
    if labels is None:
        labels = [f"{p}{j + 1}" for j in range(k) for p in ("I", "O")]
    factors = [(lab, d, "input" if n % 2 == 0 else "output") for n, (lab, d) in enumerate(zip(labels, dims))]
    slots = [(labels[2 * j], labels[2 * j + 1]) for j in range(k)]
    return QuantumObjectSet(SpaceLayout.of(*factors), ProjectorSpec.comb(slots))


def _channel_project(x, layout, inputs, outputs):
    return x - trace_replace(x, layout, outputs) + trace_replace(x, layout, inputs + outputs)


def _comb_project(x, layout, slots):
    if not slots:
        return x
    i, o = slots[-1]
    y = x - trace_replace(x, layout, [o]) + trace_replace(x, layout, [i, o])
    reduced = partial_trace(y, layout, [i, o])
    rest = layout.without([i, o])
    q = _comb_project(reduced, rest, slots[:-1])
    return y - trace_replace(y, layout, [i, o]) + embed_identity(q, layout, [i, o])


def _project(x, layout: SpaceLayout, spec: ProjectorSpec):
    if spec.kind == "state":
        return x
    if spec.kind == "channel":
        return _channel_project(x, layout, list(spec.inputs), list(spec.outputs))
    if spec.kind == "comb":
        return _comb_project(x, layout, list(spec.slots))
    # P'(W) = W + 1_A/d_A (x) (P(Tr_A W) - Tr_A W)
    t = partial_trace(x, layout, [spec.aux])
    base_layout = layout.without([spec.aux])
    correction = _project(t, base_layout, spec.base) - t
    return x + embed_identity(correction, layout, [spec.aux])


def project(objset: QuantumObjectSet, x: np.ndarray) -> np.ndarray:
    """Apply the projector of ``objset`` to ``x``."""
    x = np.asarray(x)
    if x.shape != (objset.dim, objset.dim):
        raise DimensionError(f"matrix of shape {x.shape} does not match set dimension {objset.dim}")
    return _project(x, objset.layout, objset.projector)


@dataclass(frozen=True)
class ValidityReport:
    psd: bool
    structural: bool
    normalized: bool
    min_eigenvalue: float
    projector_deviation: float
    trace_excess: float

    @property
    def valid(self) -> bool:
        return self.psd and self.structural and self.normalized


def is_valid_object(objset: QuantumObjectSet, x: np.ndarray, tol: float = 1e-9) -> ValidityReport:
    x = np.asarray(x)
    herm = (x + dagger(x)) / 2
    min_eig = float(np.linalg.eigvalsh(herm)[0])
    dev = max_abs(project(objset, x) - x)
    excess = float(np.trace(x).real - objset.gamma)
    return ValidityReport(
        psd=min_eig >= -tol,
        structural=dev <= tol,
        normalized=excess <= tol,
        min_eigenvalue=min_eig,
        projector_deviation=dev,
        trace_excess=excess,
    )


def _fresh_label(layout: SpaceLayout, label: str) -> str:
    if label not in layout:
        return label
    n = 1
    while f"{label}{n}" in layout:
        n += 1
    return f"{label}{n}"


def extend_set(objset: QuantumObjectSet, aux_dim: int, label: str = "A") -> QuantumObjectSet:
    """Prepend an unconstrained auxiliary factor of dimension ``aux_dim``."""
    if aux_dim < 1:
        raise DimensionError("auxiliary dimension must be at least 1")
    base = objset.projector
    if base.kind == "state":
        # The extended projector of the identity is the identity on the larger space.
        base = ProjectorSpec.channel((), objset.layout.labels)
    aux = _fresh_label(objset.layout, label)
    layout = SpaceLayout((Factor(aux, aux_dim, "auxiliary"),) + objset.layout.factors)
    return QuantumObjectSet(layout, ProjectorSpec.extended(base, aux), objset.gamma)


def base_layout(objset: QuantumObjectSet) -> SpaceLayout:
    """Layout of the set an extended set was built from."""
    return objset.layout.without([objset.projector.aux])


def _teeth(objset: QuantumObjectSet):
    spec = objset.projector
    if spec.kind == "channel":
        return [(list(spec.inputs), list(spec.outputs))]
    if spec.kind == "comb":
        return [([i], [o]) for i, o in spec.slots]
    raise DimensionError(f"no causal teeth for projector kind {spec.kind!r}")


def min_aux_dim(objset: QuantumObjectSet) -> int:
    """Smallest auxiliary dimension :func:`random_pure_object` accepts."""
    if objset.projector.kind == "state":
        return 1
    lay = objset.layout
    memory = 1
    teeth = _teeth(objset)
    for ins, outs in teeth[:-1]:
        memory *= lay.dim_of(ins) * lay.dim_of(outs)
    ins, outs = teeth[-1]
    need = lay.dim_of(ins) * memory
    return -(-need // lay.dim_of(outs))


def random_pure_object(objset: QuantumObjectSet, aux_dim: int, rng: np.random.Generator) -> np.ndarray:
    """Random vector ``w`` on ``A (x) H`` with ``Tr_A |w><w|`` a normalised object.

    States draw a Gaussian vector.  Channels and combs chain Haar isometries
    through a memory register, ending with the auxiliary factor as an extra
    output of the last tooth.  The vector is ordered as ``[A] + layout``.
    """
    lay = objset.layout
    if objset.projector.kind == "state":
        g = rng.standard_normal(aux_dim * lay.dim) + 1j * rng.standard_normal(aux_dim * lay.dim)
        return g / np.linalg.norm(g) * np.sqrt(objset.gamma)
    if aux_dim < min_aux_dim(objset):
        raise DimensionError(f"auxiliary dimension {aux_dim} is below the minimum {min_aux_dim(objset)}")
    teeth = _teeth(objset)
    acc = np.ones(1, dtype=complex)
    acc_layout = SpaceLayout(())
    mem_label, mem_dim = None, 1
    for n, (ins, outs) in enumerate(teeth):
        last = n == len(teeth) - 1
        d_in = lay.dim_of(ins)
        d_out = lay.dim_of(outs)
        new_mem = aux_dim if last else mem_dim * d_in * d_out
        v = haar_isometry(d_in * mem_dim, d_out * new_mem, rng)
        # Pure Choi vector of v with input order (ins, mem) and output order (outs, new mem).
        vec = v.reshape(d_out * new_mem, d_in * mem_dim).T.reshape(-1)
        new_label = "__aux__" if last else f"__mem{n}__"
        factors = [lay.factor(lab) for lab in ins]
        if mem_label is not None:
            factors.append(Factor(mem_label, mem_dim, "wire"))
        factors += [lay.factor(lab) for lab in outs]
        factors.append(Factor(new_label, new_mem, "wire"))
        vlayout = SpaceLayout(tuple(factors))
        shared = [mem_label] if mem_label is not None else []
        acc, acc_layout = link_vectors(acc, acc_layout, vec, vlayout, shared)
        mem_label, mem_dim = new_label, new_mem
    acc, _ = permute_vector(acc, acc_layout, ["__aux__"] + list(lay.labels))
    return acc
