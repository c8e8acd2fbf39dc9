"""Communication scenarios built from assemblages, and their Bell models.

A :class:`Scenario` is a set of nodes, each holding an assemblage of Choi
operators, joined by quantum wires (output factor of one node to input
factor of another), or placed into a process matrix.  Direct evaluation
contracts the chosen members along the wires with the link product.  The
``bell_from_*`` builders purify every node, contract the pure dilations
instead, and return a shared state plus local POVMs whose statistics match
direct evaluation.
"""

from __future__ import annotations

import heapq
import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .assemblages import DEFAULT_TOL, Assemblage, random_non_signalling
from .errors import DimensionError, SignallingError
from .linalg import (
    DEFAULT_TAU,
    Factor,
    SpaceLayout,
    _check_capacity,
    dagger,
    link_batched,
    link_product,
    link_vectors,
    max_abs,
    permute,
    permute_vector,
    random_channel_choi,
    random_density,
)
from .objectsets import (
    ProjectorSpec,
    QuantumObjectSet,
    channel_set,
    comb_set,
    measurement_set,
)
from .purification import purify_instrument_kraus, purify_object, purify_states

NODE_ROLES = ("source", "transform", "measure", "comb-player")


@dataclass(frozen=True)
class Node:
    id: str
    assemblage: Assemblage
    role: str = "transform"

    def __post_init__(self):
        if self.role not in NODE_ROLES:
            raise DimensionError(f"node {self.id!r} has unknown role {self.role!r}")
        if "." in self.id:
            raise DimensionError(f"node id {self.id!r} may not contain '.'")

    @property
    def layout(self) -> SpaceLayout:
        return self.assemblage.object_set.layout


@dataclass(frozen=True)
class Wire:
    src: str
    src_label: str
    dst: str
    dst_label: str
    dim: int

    @classmethod
    def between(cls, src: str, dst: str, dim: int) -> "Wire":
        """``Wire.between("P1.out", "P2.in", 2)``."""
        s_node, s_lab = src.split(".", 1)
        d_node, d_lab = dst.split(".", 1)
        return cls(s_node, s_lab, d_node, d_lab, int(dim))


@dataclass(frozen=True)
class ProcessMatrixSpec:
    """Process matrix ``w`` whose factor labels are ``"party.label"``."""

    w: np.ndarray = field(repr=False)
    layout: SpaceLayout
    rounds: int = 1

    def __post_init__(self):
        w = np.asarray(self.w, dtype=complex)
        if w.shape != (self.layout.dim, self.layout.dim):
            raise DimensionError("process matrix does not match its layout")
        object.__setattr__(self, "w", w)
        if self.rounds < 1:
            raise DimensionError("rounds must be at least 1")


@dataclass(frozen=True)
class Scenario:
    nodes: tuple[Node, ...]
    wires: tuple[Wire, ...] = ()
    network: ProcessMatrixSpec | None = None
    acyclic: bool = True

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "wires", tuple(self.wires))
        _validate_scenario(self)

    def node(self, node_id: str) -> Node:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise DimensionError(f"unknown node {node_id!r}")

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(n.id for n in self.nodes)


def _validate_scenario(s: Scenario) -> None:
    ids = [n.id for n in s.nodes]
    if len(set(ids)) != len(ids):
        raise DimensionError(f"duplicate node ids: {ids}")
    used = {}
    for w in s.wires:
        ends = []
        for node_id, label, want in ((w.src, w.src_label, "output"), (w.dst, w.dst_label, "input")):
            lay = s.node(node_id).layout
            if label not in lay:
                raise DimensionError(f"wire end {node_id}.{label} does not exist")
            f = lay.factor(label)
            if f.role != want:
                raise DimensionError(f"wire end {node_id}.{label} has role {f.role}, expected {want}")
            ends.append(f"{node_id}.{label} (dim {f.dim})")
            key = (node_id, label)
            if key in used:
                raise DimensionError(f"{node_id}.{label} is connected twice")
            used[key] = w
        d_src = s.node(w.src).layout.factor(w.src_label).dim
        d_dst = s.node(w.dst).layout.factor(w.dst_label).dim
        if not d_src == d_dst == w.dim:
            raise DimensionError(f"wire dimension {w.dim} mismatch between {ends[0]} and {ends[1]}")
    if s.network is None:
        for n in s.nodes:
            for f in n.layout.factors:
                if f.dim > 1 and (n.id, f.label) not in used:
                    raise DimensionError(f"factor {n.id}.{f.label} is not connected")
        if s.acyclic:
            cycle = _find_cycle(s)
            if cycle:
                raise DimensionError("wiring has a cycle: " + " -> ".join(cycle))
    else:
        want = {}
        for n in s.nodes:
            for f in n.layout.factors:
                want[f"{n.id}.{f.label}"] = f.dim
        have = dict(zip(s.network.layout.labels, s.network.layout.dims))
        if want != have:
            raise DimensionError(
                f"process matrix factors {sorted(have)} do not match the parties' factors {sorted(want)}"
            )


def _edges(s: Scenario):
    out = {n.id: [] for n in s.nodes}
    for w in s.wires:
        out[w.src].append(w.dst)
    return out


def _find_cycle(s: Scenario):
    edges = _edges(s)
    state = {}
    stack = []

    def visit(u):
        state[u] = 1
        stack.append(u)
        for v in edges[u]:
            if state.get(v) == 1:
                return stack[stack.index(v):] + [v]
            if v not in state:
                found = visit(v)
                if found:
                    return found
        stack.pop()
        state[u] = 2
        return None

    for n in s.nodes:
        if n.id not in state:
            found = visit(n.id)
            if found:
                return found
    return None


def topological_order(s: Scenario, key=None) -> list[str]:
    """Kahn's algorithm; ready nodes are taken in order of ``key`` (node id by default)."""
    key = key or (lambda node_id: node_id)
    edges = _edges(s)
    indeg = {n.id: 0 for n in s.nodes}
    for w in s.wires:
        indeg[w.dst] += 1
    ready = [(key(u), u) for u, d in indeg.items() if d == 0]
    heapq.heapify(ready)
    order = []
    while ready:
        _, u = heapq.heappop(ready)
        order.append(u)
        for v in edges[u]:
            indeg[v] -= 1
            if indeg[v] == 0:
                heapq.heappush(ready, (key(v), v))
    if len(order) != len(s.nodes):
        raise DimensionError("wiring has a cycle: " + " -> ".join(_find_cycle(s) or []))
    return order


def global_layouts(s: Scenario) -> dict[str, SpaceLayout]:
    """Per-node layouts with labels ``"node.label"``; wired inputs take the
    label of the output feeding them."""
    feed = {(w.dst, w.dst_label): f"{w.src}.{w.src_label}" for w in s.wires}
    out = {}
    for n in s.nodes:
        mapping = {f.label: feed.get((n.id, f.label), f"{n.id}.{f.label}") for f in n.layout.factors}
        out[n.id] = n.layout.renamed(mapping)
    return out


# Correlations


@dataclass(frozen=True)
class Correlations:
    """``p[x_1, ..., x_k, a_1, ..., a_k]`` with explicit labels per axis."""

    parties: tuple[str, ...]
    settings: tuple[tuple[str, ...], ...]
    outcomes: tuple[tuple[str, ...], ...]
    p: np.ndarray = field(repr=False)
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        shape = tuple(len(x) for x in self.settings) + tuple(len(a) for a in self.outcomes)
        if self.p.shape != shape:
            raise DimensionError(f"probability tensor shape {self.p.shape} != {shape}")

    @property
    def k(self) -> int:
        return len(self.parties)

    def normalization_deviation(self) -> float:
        k = self.k
        sums = self.p.sum(axis=tuple(range(k, 2 * k)))
        return max_abs(sums - 1.0)

    def min_probability(self) -> float:
        return float(self.p.min())

    def signalling_deviation(self) -> float:
        """Largest change of any party's marginal under a change of another party's setting."""
        k = self.k
        dev = 0.0
        for j in range(k):
            others = tuple(k + i for i in range(k) if i != j)
            marg = self.p.sum(axis=others)  # axes: x_1..x_k, a_j
            for i in range(k):
                if i == j:
                    continue
                spread = marg.max(axis=i) - marg.min(axis=i)
                dev = max(dev, float(np.abs(spread).max()))
        return dev

    def squeezed(self) -> "Correlations":
        """Drop parties with a single setting and a single outcome."""
        keep = [j for j in range(self.k) if len(self.settings[j]) > 1 or len(self.outcomes[j]) > 1]
        drop = [j for j in range(self.k) if j not in keep]
        p = self.p.reshape(
            tuple(len(self.settings[j]) for j in range(self.k))
            + tuple(len(self.outcomes[j]) for j in range(self.k))
        )
        p = p.sum(axis=tuple(self.k + j for j in drop)).sum(axis=tuple(drop)) if drop else p
        return Correlations(
            tuple(self.parties[j] for j in keep),
            tuple(self.settings[j] for j in keep),
            tuple(self.outcomes[j] for j in keep),
            p,
            dict(self.diagnostics),
        )

    def max_difference(self, other: "Correlations") -> float:
        if self.p.shape != other.p.shape:
            raise DimensionError(f"correlation shapes differ: {self.p.shape} vs {other.p.shape}")
        return max_abs(self.p - other.p)


def _party_axes(asms: Sequence[Assemblage]):
    settings = tuple(tuple(a.settings) for a in asms)
    outcomes = tuple(tuple(a.all_outcomes) for a in asms)
    return settings, outcomes


def _padded_stack(asm: Assemblage, x: str, outcomes: Sequence[str], transform=None) -> np.ndarray:
    d = asm.object_set.dim
    out = np.zeros((len(outcomes), d, d), dtype=complex)
    for a in asm.outcomes(x):
        m = asm[(x, a)]
        out[outcomes.index(a)] = transform(m) if transform else m
    return out


def _fill(parties, asms, slice_fn, jobs: int = 1, diagnostics=None) -> Correlations:
    settings, outcomes = _party_axes(asms)
    tuples = list(itertools.product(*[range(len(x)) for x in settings]))
    shape = tuple(len(x) for x in settings) + tuple(len(a) for a in outcomes)
    p = np.zeros(shape)

    def one(idx):
        return slice_fn(tuple(settings[j][i] for j, i in enumerate(idx)))

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(one, tuples))
    else:
        results = [one(idx) for idx in tuples]
    for idx, r in zip(tuples, results):
        p[idx] = r
    return Correlations(tuple(parties), settings, outcomes, p, dict(diagnostics or {}))


def _contract(parts) -> np.ndarray:
    """Contract ``[(stack, layout), ...]`` to a tensor of scalars indexed by
    one axis per stack."""
    acc = np.ones((1, 1, 1), dtype=complex)
    lay = SpaceLayout(())
    sizes = []
    for stack, layout in parts:
        shared = set(lay.labels) & set(layout.labels)
        r, lay = link_batched(acc, lay, stack, layout, shared)
        acc = r.reshape(-1, lay.dim, lay.dim)
        sizes.append(stack.shape[0])
    if lay.dim != 1:
        raise DimensionError(f"network leaves open factors {lay.labels}")
    return acc[:, 0, 0].reshape(sizes)


def eval_direct(s: Scenario, inputs: Sequence[str]) -> np.ndarray:
    """Outcome probabilities for one setting tuple (one setting per node, in node order).

    Members are contracted along the wires in topological order, or against
    the process matrix when the scenario has one.  The returned array has
    one axis per node over that node's full outcome list.
    """
    if len(inputs) != len(s.nodes):
        raise DimensionError(f"expected {len(s.nodes)} settings, got {len(inputs)}")
    settings = dict(zip(s.ids, (str(x) for x in inputs)))
    for n in s.nodes:
        if settings[n.id] not in n.assemblage.settings:
            raise DimensionError(f"setting {settings[n.id]!r} out of range for node {n.id}")
    if s.network is not None:
        return _eval_network(s.network, {n.id: n.assemblage for n in s.nodes}, settings)
    layouts = global_layouts(s)
    order = topological_order(s) if s.acyclic else list(s.ids)
    parts = []
    for node_id in order:
        asm = s.node(node_id).assemblage
        parts.append((_padded_stack(asm, settings[node_id], asm.all_outcomes), layouts[node_id]))
    p = _contract(parts).real
    return np.transpose(p, [order.index(i) for i in s.ids])


def direct_correlations(s: Scenario, jobs: int = 1) -> Correlations:
    """:func:`eval_direct` over every setting tuple."""
    asms = [n.assemblage for n in s.nodes]
    return _fill(s.ids, asms, lambda xs: eval_direct(s, xs), jobs)


# Process matrices


def _party_global(party: str, asm: Assemblage) -> SpaceLayout:
    return asm.object_set.layout.renamed({lab: f"{party}.{lab}" for lab in asm.object_set.layout.labels})


def _eval_network(w: ProcessMatrixSpec, parties: Mapping[str, Assemblage], settings: Mapping[str, str]):
    want = {}
    for party, asm in parties.items():
        for f in _party_global(party, asm).factors:
            want[f.label] = f.dim
    if want != dict(zip(w.layout.labels, w.layout.dims)):
        raise DimensionError("party layouts do not match the process matrix layout")
    # Tr[W (x)_j C_j] is the full link of W^T with the party operators.
    parts = [(w.w.T[None], w.layout)]
    for party, asm in parties.items():
        parts.append((_padded_stack(asm, settings[party], asm.all_outcomes), _party_global(party, asm)))
    p = _contract(parts)
    return p.reshape(p.shape[1:]).real


def eval_process_matrix(w: ProcessMatrixSpec, parties: Mapping[str, Assemblage], inputs: Sequence[str]) -> np.ndarray:
    """Born-rule probabilities ``Tr[W (C_1[a_1|x_1] (x) ... )]`` for one setting tuple."""
    names = list(parties)
    if len(inputs) != len(names):
        raise DimensionError(f"expected {len(names)} settings, got {len(inputs)}")
    return _eval_network(w, parties, dict(zip(names, (str(x) for x in inputs))))


def process_matrix_correlations(w: ProcessMatrixSpec, parties: Mapping[str, Assemblage], jobs: int = 1) -> Correlations:
    """Full correlation tensor with normalisation and no-signalling diagnostics."""
    c = _fill(list(parties), list(parties.values()), lambda xs: eval_process_matrix(w, parties, xs), jobs)
    c.diagnostics.update(
        normalization_deviation=c.normalization_deviation(),
        signalling_deviation=c.signalling_deviation(),
    )
    return c


def identity_choi(d: int) -> np.ndarray:
    v = np.eye(d).reshape(-1)
    return np.outer(v, v).astype(complex)


def causal_process_matrix(
    parties: Sequence[tuple[str, int, int]],
    state: np.ndarray | None = None,
    channels: Sequence[np.ndarray | None] | None = None,
) -> ProcessMatrixSpec:
    """Process matrix of a fixed causal order ``P1 -> P2 -> ... -> Pn``.

    ``parties`` lists ``(name, d_in, d_out)``; party names become the label
    prefixes ``name.I`` and ``name.O``.  ``state`` enters the first party,
    ``channels[j]`` (a Choi operator, identity by default) carries the output
    of party ``j`` to the input of party ``j + 1``, and the last output is
    discarded.
    """
    parties = list(parties)
    factors, blocks = [], []
    name0, d_in0, _ = parties[0]
    if state is None:
        state = np.zeros((d_in0, d_in0), dtype=complex)
        state[0, 0] = 1
    blocks.append(np.asarray(state, dtype=complex))
    channels = list(channels) if channels is not None else [None] * (len(parties) - 1)
    for j, (name, d_in, d_out) in enumerate(parties):
        factors.append(Factor(f"{name}.I", d_in, "input"))
        factors.append(Factor(f"{name}.O", d_out, "output"))
        if j + 1 < len(parties):
            d_next = parties[j + 1][1]
            ch = channels[j]
            if ch is None:
                if d_out != d_next:
                    raise DimensionError(f"identity wire needs equal dims, got {d_out} and {d_next}")
                ch = identity_choi(d_out)
            blocks.append(np.asarray(ch, dtype=complex))
        else:
            blocks.append(np.eye(d_out, dtype=complex))
    env = blocks[0]
    for b in blocks[1:]:
        env = np.kron(env, b)
    return ProcessMatrixSpec(env.T, SpaceLayout(tuple(factors)))


def network_process_matrix(components: Sequence[tuple[np.ndarray, SpaceLayout]], rounds: int = 1) -> ProcessMatrixSpec:
    """Process matrix of a network of fixed operations.

    ``components`` are Choi operators of the environment (states, channels,
    discards) on labels ``"party.label"`` plus any internal memory labels,
    which are contracted wherever two components share them.
    """
    env = np.ones((1, 1), dtype=complex)
    lay = SpaceLayout(())
    for m, layout in components:
        shared = set(lay.labels) & set(layout.labels)
        env, lay = link_product(env, lay, np.asarray(m, dtype=complex), layout, shared)
    return ProcessMatrixSpec(env.T, lay, rounds)


# Bell models


@dataclass(frozen=True)
class BellModel:
    """Shared state on one factor per party and local POVMs.

    ``shared_state`` is a vector, or a density matrix when the model came
    from a mixed process matrix.
    """

    parties: tuple[str, ...]
    shared_state: np.ndarray = field(repr=False)
    party_povms: tuple[dict, ...] = field(repr=False)
    party_layout: SpaceLayout
    party_factors: dict = field(default_factory=dict)

    @property
    def is_pure(self) -> bool:
        return self.shared_state.ndim == 1

    def norm_deviation(self) -> float:
        if self.is_pure:
            return abs(float(np.vdot(self.shared_state, self.shared_state).real) - 1.0)
        return abs(float(np.trace(self.shared_state).real) - 1.0)

    def completeness_deviation(self) -> float:
        dev = 0.0
        for povms, d in zip(self.party_povms, self.party_layout.dims):
            for x in dict.fromkeys(k[0] for k in povms):
                total = sum(m for (y, _), m in povms.items() if y == x)
                dev = max(dev, max_abs(total - np.eye(d)))
        return dev

    def axes(self):
        settings = tuple(tuple(dict.fromkeys(x for x, _ in pv)) for pv in self.party_povms)
        outcomes = tuple(tuple(dict.fromkeys(a for _, a in pv)) for pv in self.party_povms)
        return settings, outcomes


def _bell_slice(m: BellModel, xs, outcomes) -> np.ndarray:
    k = len(m.parties)
    dims = m.party_layout.dims
    if m.is_pure:
        psi = m.shared_state.reshape(dims)
        t = psi
    else:
        t = m.shared_state.reshape(dims + dims)
    # Apply each party's outcome stack to its row index; outcome axes collect in front.
    for j in range(k):
        d = dims[j]
        stack = np.zeros((len(outcomes[j]), d, d), dtype=complex)
        for (x, a), e in m.party_povms[j].items():
            if x == xs[j]:
                stack[outcomes[j].index(a)] = e
        t = np.moveaxis(np.tensordot(stack, t, axes=([2], [2 * j])), [0, 1], [j, 2 * j + 1])
    rows = list(range(k, 2 * k))
    if m.is_pure:
        p = np.tensordot(t, psi.conj(), axes=(rows, list(range(k))))
    else:
        sub = list(range(k)) + rows + rows
        p = np.einsum(t, sub, list(range(k)))
    return p.real


def eval_bell(m: BellModel, jobs: int = 1) -> Correlations:
    """``p(a|x) = <Psi| (x)_j M_j[a_j|x_j] |Psi>`` (or the trace form for mixed states)."""
    settings, outcomes = m.axes()
    tuples = list(itertools.product(*[range(len(x)) for x in settings]))
    shape = tuple(len(x) for x in settings) + tuple(len(a) for a in outcomes)
    p = np.zeros(shape)

    def one(idx):
        return _bell_slice(m, tuple(settings[j][i] for j, i in enumerate(idx)), outcomes)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(one, tuples))
    else:
        results = [one(idx) for idx in tuples]
    for idx, r in zip(tuples, results):
        p[idx] = r
    return Correlations(m.parties, settings, outcomes, p)


def _purify_node(node: Node, tol, tau):
    try:
        return purify_object(node.assemblage, tol, tau)
    except SignallingError as exc:
        raise SignallingError(f"node {node.id}: {exc}", exc.report) from None


def _measure_povms(asm: Assemblage) -> dict:
    # A measurement's Choi operator is the transpose of its POVM element.
    return {key: m.T for key, m in asm.members.items()}


def _finish_model(s: Scenario, state, state_layout, povms_by_node, factors_by_node) -> BellModel:
    # Unwired trivial factors carry no information.
    trivial = [f.label for f in state_layout.factors if f.dim == 1 and not any(
        f.label in labs for labs in factors_by_node.values())]
    order = [lab for node_id in s.ids for lab in factors_by_node[node_id]]
    state, lay = permute_vector(state, state_layout, order + trivial)
    state = state.reshape(-1)
    party_layout = SpaceLayout(
        tuple(Factor(node_id, lay.dim_of(factors_by_node[node_id]) if factors_by_node[node_id] else 1, "auxiliary")
              for node_id in s.ids)
    )
    return BellModel(
        s.ids,
        state,
        tuple(povms_by_node[node_id] for node_id in s.ids),
        party_layout,
        {node_id: tuple(factors_by_node[node_id]) for node_id in s.ids},
    )


def _bell_from_network(s: Scenario, order, tol, tau) -> BellModel:
    layouts = global_layouts(s)
    state = np.ones(1, dtype=complex)
    lay = SpaceLayout(())
    povms, factors = {}, {}
    for node_id in order:
        node = s.node(node_id)
        if node.role == "measure":
            if any(f.dim > 1 for f in node.layout.factors if f.role != "input"):
                raise DimensionError(f"measurement node {node_id} has non-trivial outputs")
            povms[node_id] = _measure_povms(node.assemblage)
            factors[node_id] = list(layouts[node_id].labels)
            continue
        p = _purify_node(node, tol, tau)
        aux = f"{node_id}.{p.aux_label}"
        vlay = SpaceLayout((Factor(aux, p.aux_dim, "auxiliary"),)) + layouts[node_id]
        shared = set(lay.labels) & set(vlay.labels)
        state, lay = link_vectors(state, lay, p.omega, vlay, shared)
        povms[node_id] = dict(p.povms)
        factors[node_id] = [aux]
    return _finish_model(s, state, lay, povms, factors)


def bell_from_dag(s: Scenario, order: Sequence[str] | None = None, tol: float = DEFAULT_TOL, tau: float = DEFAULT_TAU) -> BellModel:
    """Bell model of an acyclic scenario.

    Every node except measurements is purified to a pure dilation whose
    auxiliary factor goes to that node's party; dilations are contracted
    along the wires in ``order`` (topological by default).  Measurement
    nodes keep their terminal wires and measure them with their own POVMs.
    """
    if s.network is not None:
        raise DimensionError("scenario uses a process matrix; use bell_from_process_matrix")
    if not s.acyclic or _find_cycle(s):
        raise DimensionError("bell_from_dag needs an acyclic scenario")
    if order is None:
        order = topological_order(s)
    elif sorted(order) != sorted(s.ids):
        raise DimensionError("order must list every node once")
    return _bell_from_network(s, list(order), tol, tau)


def is_chain(s: Scenario) -> bool:
    if s.network is not None or len(s.nodes) < 2 or len(s.wires) != len(s.nodes) - 1:
        return False
    try:
        order = topological_order(s)
    except DimensionError:
        return False
    links = {(w.src, w.dst) for w in s.wires}
    if any((order[j], order[j + 1]) not in links for j in range(len(order) - 1)):
        return False
    first, last = s.node(order[0]), s.node(order[-1])
    return (
        first.role == "source"
        and last.role == "measure"
        and all(s.node(i).role == "transform" for i in order[1:-1])
        and all(len(s.node(i).layout.with_role("input")) == 1 for i in order[1:])
        and all(len(s.node(i).layout.with_role("output")) == 1 for i in order[:-1])
    )


def bell_from_chain(s: Scenario, tol: float = DEFAULT_TOL, tau: float = DEFAULT_TAU) -> BellModel:
    """Bell model of a sequential chain source -> transforms -> measurement.

    The source is purified by the square-root construction and each
    transform by its Stinespring dilation; the dilations are applied to the
    source in turn, delaying every measurement to the auxiliary registers.
    """
    if not is_chain(s):
        raise DimensionError("scenario is not a source -> transform* -> measure chain")
    order = topological_order(s)
    layouts = global_layouts(s)
    source = s.node(order[0])
    try:
        if source.assemblage.object_set.projector.kind == "state":
            p = purify_states(source.assemblage, tol, tau)
        else:
            p = purify_object(source.assemblage, tol, tau)
    except SignallingError as exc:
        raise SignallingError(f"node {source.id}: {exc}", exc.report) from None
    aux = f"{source.id}.A"
    state = p.omega
    lay = SpaceLayout((Factor(aux, p.aux_dim, "auxiliary"),)) + layouts[source.id]
    povms = {source.id: dict(p.povms)}
    factors = {source.id: [aux]}
    for node_id in order[1:-1]:
        node = s.node(node_id)
        try:
            dil = purify_instrument_kraus(node.assemblage, tol, tau)
        except SignallingError as exc:
            raise SignallingError(f"node {node_id}: {exc}", exc.report) from None
        g = layouts[node_id]
        (w_in,) = g.with_role("input")
        (w_out,) = g.with_role("output")
        aux = f"{node_id}.A"
        r, d_out, d_in = dil.aux_dim, dil.kraus.d_out, dil.kraus.d_in
        # Pure Choi vector of V with factors (input, A, output).
        vec = dil.isometry.reshape(r * d_out, d_in).T.reshape(-1)
        vlay = SpaceLayout.of((w_in, d_in, "input"), (aux, r, "auxiliary"), (w_out, d_out, "output"))
        state, lay = link_vectors(state, lay, vec, vlay, [w_in])
        povms[node_id] = dict(dil.povms)
        factors[node_id] = [aux]
    last = s.node(order[-1])
    povms[last.id] = _measure_povms(last.assemblage)
    factors[last.id] = list(layouts[last.id].labels)
    return _finish_model(s, state, lay, povms, factors)


def bell_from_process_matrix(
    w: ProcessMatrixSpec,
    parties: Mapping[str, Assemblage],
    tol: float = DEFAULT_TOL,
    tau: float = DEFAULT_TAU,
) -> BellModel:
    """Bell model for parties acting on a process matrix.

    Each party's assemblage is purified; contracting ``W`` with all pure
    dilations over the parties' wires leaves a state on the auxiliary
    registers, ``rho_A = Tr_S[(1_A (x) W) (x)_j |w_j><w_j|]``.  A rank-one
    ``rho_A`` is returned as a vector.
    """
    names = list(parties)
    want = {}
    for name in names:
        for f in _party_global(name, parties[name]).factors:
            want[f.label] = f.dim
    if want != dict(zip(w.layout.labels, w.layout.dims)):
        raise DimensionError("party layouts do not match the process matrix layout")
    purs, povms = [], []
    for name in names:
        try:
            p = purify_object(parties[name], tol, tau)
        except SignallingError as exc:
            raise SignallingError(f"party {name}: {exc}", exc.report) from None
        purs.append(p)
        povms.append(dict(p.povms))
    aux_dims = [p.aux_dim for p in purs]
    _check_capacity(int(np.prod(aux_dims)))
    # Group W's factors by party, then contract each dilation into rows and columns in turn.
    order = [lab for name in names for lab in _party_global(name, parties[name]).labels]
    wt, _ = permute(w.w.T, w.layout, order)
    sdims = [parties[name].object_set.dim for name in names]
    k = len(names)
    t = wt.reshape(sdims + sdims)
    for j, p in enumerate(purs):
        om = p.omega.reshape(p.aux_dim, sdims[j])
        t = np.moveaxis(np.tensordot(om, t, axes=([1], [j])), 0, j)
        t = np.moveaxis(np.tensordot(om.conj(), t, axes=([1], [k + j])), 0, k + j)
    d_a = int(np.prod(aux_dims))
    rho = t.reshape(d_a, d_a)
    rho = (rho + dagger(rho)) / 2
    evals, evecs = np.linalg.eigh(rho)
    if evals.size > 1 and evals[-2] <= 1e-10 * evals[-1]:
        shared = evecs[:, -1] * np.sqrt(evals[-1])
    else:
        shared = rho
    party_layout = SpaceLayout(tuple(Factor(name, d, "auxiliary") for name, d in zip(names, aux_dims)))
    return BellModel(tuple(names), shared, tuple(povms), party_layout, {n: (f"{n}.A",) for n in names})


def loop_scenario(comb_asm: Assemblage, inner_asm: Assemblage, comb_id: str = "A", inner_id: str = "B") -> Scenario:
    """Back-and-forth loop: a two-tooth comb whose slot is filled by an instrument.

    The comb's teeth are ``(P, X)`` and ``(Y, F)``; ``X`` feeds the inner
    instrument and its output returns on ``Y``.  ``P`` and ``F`` must be
    trivial so that the scenario is closed.
    """
    spec = comb_asm.object_set.projector
    if spec.kind != "comb" or len(spec.slots) != 2:
        raise DimensionError("the outer assemblage must be a two-tooth comb")
    (p_lab, x_lab), (y_lab, f_lab) = spec.slots
    clay = comb_asm.object_set.layout
    open_ext = [lab for lab in (p_lab, f_lab) if clay.factor(lab).dim != 1]
    if open_ext:
        raise DimensionError(f"external comb wires {open_ext} are open; close them with dimension-1 wires")
    ilay = inner_asm.object_set.layout
    ins, outs = ilay.with_role("input"), ilay.with_role("output")
    if len(ins) != 1 or len(outs) != 1:
        raise DimensionError("the inner assemblage needs exactly one input and one output factor")
    wires = [
        Wire(comb_id, x_lab, inner_id, ins[0], clay.factor(x_lab).dim),
        Wire(inner_id, outs[0], comb_id, y_lab, ilay.factor(outs[0]).dim),
    ]
    nodes = [Node(comb_id, comb_asm, "comb-player"), Node(inner_id, inner_asm, "transform")]
    return Scenario(tuple(nodes), tuple(wires), None, acyclic=False)


def bell_from_loop(comb_asm: Assemblage, inner_asm: Assemblage, tol: float = DEFAULT_TOL, tau: float = DEFAULT_TAU) -> BellModel:
    """Bell model of the loop in :func:`loop_scenario`: purify both players
    and link their pure dilations over the slot wires."""
    s = loop_scenario(comb_asm, inner_asm)
    return _bell_from_network(s, list(s.ids), tol, tau)


def bell_from_scenario(s: Scenario, tol: float = DEFAULT_TOL, tau: float = DEFAULT_TAU) -> BellModel:
    """Pick the matching builder for ``s``."""
    if s.network is not None:
        return bell_from_process_matrix(s.network, {n.id: n.assemblage for n in s.nodes}, tol, tau)
    if is_chain(s):
        return bell_from_chain(s, tol, tau)
    if s.acyclic:
        return bell_from_dag(s, tol=tol, tau=tau)
    return _bell_from_network(s, list(s.ids), tol, tau)


# Local hidden variable models


@dataclass(frozen=True)
class LHVModel:
    """``p(a|x) = sum_l weights[l] prod_j responses[j][l, x_j, a_j]``."""

    parties: tuple[str, ...]
    settings: tuple[tuple[str, ...], ...]
    outcomes: tuple[tuple[str, ...], ...]
    lambda_support: tuple = field(repr=False)
    weights: np.ndarray = field(repr=False)
    responses: tuple[np.ndarray, ...] = field(repr=False)

    def normalization_deviation(self) -> float:
        dev = abs(float(self.weights.sum()) - 1.0)
        for r in self.responses:
            dev = max(dev, max_abs(r.sum(axis=2) - 1.0))
        return dev


def eval_lhv(m: LHVModel) -> Correlations:
    k = len(m.parties)
    lam = 3 * k
    operands = [m.weights, [lam]]
    for j, r in enumerate(m.responses):
        operands += [r, [lam, j, k + j]]
    p = np.einsum(*operands, list(range(2 * k)), optimize=True)
    return Correlations(m.parties, m.settings, m.outcomes, np.asarray(p, dtype=float))


# Builders and random instances


def single_member(object_set: QuantumObjectSet, matrix: np.ndarray) -> Assemblage:
    """Assemblage with one setting and one outcome."""
    return Assemblage(object_set, {("0", "0"): matrix})


def chain_scenario(assemblages: Sequence[Assemblage], ids: Sequence[str] | None = None) -> Scenario:
    """Linear chain; node ``j``'s single output feeds node ``j + 1``'s single input."""
    k = len(assemblages)
    ids = list(ids) if ids is not None else [f"P{j + 1}" for j in range(k)]
    nodes, wires = [], []
    for j, asm in enumerate(assemblages):
        lay = asm.object_set.layout
        has_in, has_out = bool(lay.with_role("input")), bool(lay.with_role("output"))
        role = "source" if not has_in else ("measure" if not has_out else "transform")
        nodes.append(Node(ids[j], asm, role))
        if j:
            prev = assemblages[j - 1].object_set.layout
            (out,) = prev.with_role("output")
            (inp,) = lay.with_role("input")
            wires.append(Wire(ids[j - 1], out, ids[j], inp, prev.factor(out).dim))
    return Scenario(tuple(nodes), tuple(wires))


def _seeds(seed, n):
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(n)]


def _state_set_on(labels, d):
    lay = SpaceLayout.of(*[(lab, d, "output") for lab in labels])
    return QuantumObjectSet(lay, ProjectorSpec.state())


def random_chain(k: int, seed: int, d: int = 2, n_settings: int = 2, n_outcomes: int = 2) -> Scenario:
    """Chain of a random non-signalling state source, ``k - 2`` instrument
    assemblages and a measurement assemblage, all on ``d``-dimensional wires."""
    if k < 2:
        raise DimensionError("a chain needs at least two nodes")
    seeds = _seeds(seed, k)
    asms = [random_non_signalling(_state_set_on(["out"], d), n_settings, n_outcomes, d, seeds[0])]
    for j in range(1, k - 1):
        asms.append(random_non_signalling(channel_set(d, d, ("in", "out")), n_settings, n_outcomes, d * d, seeds[j]))
    asms.append(random_non_signalling(measurement_set(d, "in"), n_settings, n_outcomes, d, seeds[-1]))
    return chain_scenario(asms)


def random_fork(seed: int, d: int = 2, n_settings: int = 2, n_outcomes: int = 2) -> Scenario:
    """One source with two outputs feeding two measurement nodes."""
    s0, s1, s2 = _seeds(seed, 3)
    src = random_non_signalling(_state_set_on(["l", "r"], d), n_settings, n_outcomes, d * d, s0)
    m1 = random_non_signalling(measurement_set(d, "in"), n_settings, n_outcomes, d, s1)
    m2 = random_non_signalling(measurement_set(d, "in"), n_settings, n_outcomes, d, s2)
    nodes = (Node("S", src, "source"), Node("L", m1, "measure"), Node("R", m2, "measure"))
    wires = (Wire("S", "l", "L", "in", d), Wire("S", "r", "R", "in", d))
    return Scenario(nodes, wires)


def random_diamond(seed: int, d: int = 2, n_settings: int = 2, n_outcomes: int = 2) -> Scenario:
    """Source -> two parallel instruments -> joint measurement."""
    s0, s1, s2, s3 = _seeds(seed, 4)
    src = random_non_signalling(_state_set_on(["l", "r"], d), n_settings, n_outcomes, d * d, s0)
    t1 = random_non_signalling(channel_set(d, d, ("in", "out")), n_settings, n_outcomes, d * d, s1)
    t2 = random_non_signalling(channel_set(d, d, ("in", "out")), n_settings, n_outcomes, d * d, s2)
    mlay = SpaceLayout.of(("l", d, "input"), ("r", d, "input"))
    mset = QuantumObjectSet(mlay, ProjectorSpec.channel(("l", "r"), ()))
    m = random_non_signalling(mset, n_settings, n_outcomes, d * d, s3)
    nodes = (Node("S", src, "source"), Node("T1", t1), Node("T2", t2), Node("M", m, "measure"))
    wires = (
        Wire("S", "l", "T1", "in", d),
        Wire("S", "r", "T2", "in", d),
        Wire("T1", "out", "M", "l", d),
        Wire("T2", "out", "M", "r", d),
    )
    return Scenario(nodes, wires)


def loop_comb_set(d: int = 2) -> QuantumObjectSet:
    """Two-tooth comb with trivial external wires: send on ``X``, receive on ``Y``."""
    return comb_set([1, d, d, 1], ["P", "X", "Y", "F"])


def random_loop(seed: int, d: int = 2, n_settings: int = 2, n_outcomes: int = 2):
    """Random ``(comb assemblage, instrument assemblage)`` pair for :func:`bell_from_loop`."""
    s0, s1 = _seeds(seed, 2)
    cset = loop_comb_set(d)
    comb = random_non_signalling(cset, n_settings, n_outcomes, d * d, s0)
    inner = random_non_signalling(channel_set(d, d, ("in", "out")), n_settings, n_outcomes, d * d, s1)
    return comb, inner


def random_causal_network(seed: int, d: int = 2, n_settings: int = 2, n_outcomes: int = 2):
    """Two instrument parties on a random causally ordered process matrix.

    Returns ``(spec, parties, chain)`` where ``chain`` is the same experiment
    written as an explicit wiring: fixed source, party A, fixed channel,
    party B, discard.
    """
    s0, s1, s2 = _seeds(seed, 3)
    rng = np.random.default_rng(s0)
    sigma = random_density(d, rng)
    link = random_channel_choi(d, d, rng)
    a = random_non_signalling(channel_set(d, d), n_settings, n_outcomes, d * d, s1)
    b = random_non_signalling(channel_set(d, d), n_settings, n_outcomes, d * d, s2)
    spec = causal_process_matrix([("A", d, d), ("B", d, d)], sigma, [link])
    chain = chain_scenario(
        [
            single_member(_state_set_on(["O"], d), sigma),
            a,
            single_member(channel_set(d, d), link),
            b,
            single_member(measurement_set(d), np.eye(d)),
        ],
        ["src", "A", "ch", "B", "end"],
    )
    return spec, {"A": a, "B": b}, chain
