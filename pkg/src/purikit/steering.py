"""Unsteerable decompositions and their classical composition.

An assemblage is unsteerable when ``O[a|x] = sum_l p(l) p(a|x,l) W_l`` for
normalised objects ``W_l``.  :func:`find_unsteerable` searches for such a
decomposition over deterministic responses with Dykstra's alternating
projections; :func:`compose_classical` turns decompositions of every node in
a scenario into a local hidden variable model of its correlations.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .assemblages import Assemblage, reduce_with_povm
from .errors import CapacityError, DimensionError, InconsistencyError
from .linalg import max_abs
from .objectsets import QuantumObjectSet, is_valid_object, min_aux_dim, project, random_pure_object, state_set
from .scenarios import LHVModel, Scenario, _contract, global_layouts, topological_order

MAX_SUPPORT = 256


@dataclass(frozen=True)
class UnsteerableDecomposition:
    """Weights ``p(l)``, responses ``p(a|x,l)`` and normalised objects ``W_l``.

    ``responses[l, x, a]`` is indexed by position in ``settings`` and
    ``outcomes``; ``objects[l]`` is a member of the assemblage's object set
    with trace ``gamma``.
    """

    settings: tuple[str, ...]
    outcomes: tuple[str, ...]
    lambda_support: tuple = field(repr=False)
    weights: np.ndarray = field(repr=False)
    responses: np.ndarray = field(repr=False)
    objects: np.ndarray = field(repr=False)

    def __post_init__(self):
        n = len(self.lambda_support)
        if self.weights.shape != (n,) or self.responses.shape != (n, len(self.settings), len(self.outcomes)):
            raise DimensionError("weights and responses do not match the support")
        if self.objects.shape[0] != n:
            raise DimensionError("one object per support point is required")

    def reconstruct(self, x: str, a: str) -> np.ndarray:
        r = self.responses[:, self.settings.index(x), self.outcomes.index(a)]
        return np.einsum("l,lij->ij", self.weights * r, self.objects)


@dataclass(frozen=True)
class SteeringFailure:
    """No decomposition found.  Evidence of steerability, not a proof."""

    residual: float
    iterations: int
    restarts: int
    trajectory: list = field(repr=False)

    @property
    def success(self) -> bool:
        return False


def _axes(asm: Assemblage):
    return tuple(asm.settings), tuple(asm.all_outcomes)


def verify_unsteerable(asm: Assemblage, d: UnsteerableDecomposition, diagnostics: dict | None = None, tol: float = 1e-9) -> float:
    """Largest deviation between the decomposition and the members.

    Every ``W_l`` is re-validated; problems with the weights, responses or
    objects go into ``diagnostics`` when a dict is given.
    """
    dev = 0.0
    for (x, a), m in asm.members.items():
        if x not in d.settings or a not in d.outcomes:
            raise DimensionError(f"decomposition has no entry for member ({x}, {a})")
        dev = max(dev, max_abs(d.reconstruct(x, a) - m))
    if diagnostics is not None:
        s = asm.object_set
        bad = []
        for lam, w in zip(d.lambda_support, d.objects):
            r = is_valid_object(s, w, tol)
            if not (r.valid and abs(np.trace(w).real - s.gamma) <= tol):
                bad.append(lam)
        diagnostics["invalid_objects"] = bad
        diagnostics["weight_deviation"] = abs(float(d.weights.sum()) - 1.0)
        diagnostics["negative_weight"] = float(min(d.weights.min(), 0.0))
        diagnostics["response_deviation"] = max_abs(d.responses.sum(axis=2) - 1.0)
    return dev


def deterministic_support(asm: Assemblage) -> list[tuple[str, ...]]:
    """All functions ``x -> a`` as tuples of outcomes, one per setting."""
    choices = [asm.outcomes(x) for x in asm.settings]
    size = int(np.prod([len(c) for c in choices]))
    if size > MAX_SUPPORT:
        raise CapacityError(f"{size} deterministic strategies exceed the cap of {MAX_SUPPORT}")
    return list(itertools.product(*choices))


def _strategy_matrix(asm, support):
    keys = list(asm.members)
    dmat = np.zeros((len(keys), len(support)))
    for row, (x, a) in enumerate(keys):
        xi = asm.settings.index(x)
        for col, lam in enumerate(support):
            dmat[row, col] = float(lam[xi] == a)
    return keys, dmat


def _psd_part(stack):
    h = (stack + np.conj(np.swapaxes(stack, -1, -2))) / 2
    vals, vecs = np.linalg.eigh(h)
    vals = np.clip(vals, 0, None)
    return np.einsum("lij,lj,lkj->lik", vecs, vals, vecs.conj())


def find_unsteerable(
    asm: Assemblage,
    max_iters: int = 5000,
    tol: float = 1e-6,
    restarts: int = 1,
    seed: int = 0,
):
    """Search for a decomposition over the deterministic strategies.

    Sub-normalised objects ``s_l = p(l) W_l`` must be positive and satisfy
    ``sum_l D_l(a|x) s_l = O[a|x]`` together with the set's projector.
    Dykstra's algorithm alternates between the positive cone (per ``l``) and
    that affine set.  The first run starts from the least-squares solution,
    which is already feasible for single-setting assemblages; later restarts
    start from random points.  The residual is the largest violation of the
    affine constraints by the positive iterate.

    Returns:
        An :class:`UnsteerableDecomposition` once the residual drops to
        ``tol``, else a :class:`SteeringFailure` holding the smallest
        residual reached and the residual trajectory of the best restart.
    """
    support = deterministic_support(asm)
    keys, dmat = _strategy_matrix(asm, support)
    pinv = np.linalg.pinv(dmat)
    target = np.array([asm.members[k] for k in keys])
    s = asm.object_set
    d = s.dim
    rng = np.random.default_rng(seed)

    def affine(stack):
        y = stack - np.einsum("lk,kij->lij", pinv, np.einsum("kl,lij->kij", dmat, stack) - target)
        if s.projector.kind == "state":
            return y
        return np.array([project(s, m) for m in y])

    def residual(stack):
        return max_abs(np.einsum("kl,lij->kij", dmat, stack) - target)

    best = None
    total = 0
    for r in range(restarts):
        if r == 0:
            x = np.einsum("lk,kij->lij", pinv, target)
        else:
            g = rng.standard_normal((len(support), d, d)) + 1j * rng.standard_normal((len(support), d, d))
            x = np.einsum("lij,lkj->lik", g, g.conj()) * (s.gamma / (d * len(support)))
        p = np.zeros_like(x)
        q = np.zeros_like(x)
        trajectory = []
        res = np.inf
        for it in range(1, max_iters + 1):
            y = affine(x + p)
            p = x + p - y
            x = _psd_part(y + q)
            q = y + q - x
            res = residual(x)
            trajectory.append(res)
            if res <= tol:
                total += it
                return _normalise(asm, support, x)
        total += max_iters
        if best is None or res < best[0]:
            best = (res, trajectory)
    return SteeringFailure(float(best[0]), total, restarts, best[1])


def _normalise(asm, support, sub):
    s = asm.object_set
    settings, outcomes = _axes(asm)
    traces = np.einsum("lii->l", sub).real
    keep = [j for j, t in enumerate(traces) if t > 0]
    weights = traces[keep] / s.gamma
    weights = weights / weights.sum()
    objects = np.array([sub[j] * (s.gamma / traces[j]) for j in keep])
    resp = np.zeros((len(keep), len(settings), len(outcomes)))
    for row, j in enumerate(keep):
        for xi, a in enumerate(support[j]):
            resp[row, xi, outcomes.index(a)] = 1.0
    return UnsteerableDecomposition(settings, outcomes, tuple(support[j] for j in keep), weights, resp, objects)


def single_setting_decomposition(asm: Assemblage) -> UnsteerableDecomposition:
    """Closed form for one setting: ``l = a``, ``p(l) = Tr O[a]/gamma``."""
    if len(asm.settings) != 1:
        raise DimensionError("closed form needs a single setting")
    (x,) = asm.settings
    s = asm.object_set
    outs = asm.outcomes(x)
    traces = np.array([np.trace(asm[(x, a)]).real for a in outs])
    objects = np.array([asm[(x, a)] * (s.gamma / t) for a, t in zip(outs, traces)])
    resp = np.eye(len(outs))[:, None, :]
    return UnsteerableDecomposition((x,), tuple(outs), tuple((a,) for a in outs), traces / s.gamma, resp, objects)


def random_object(object_set: QuantumObjectSet, rng: np.random.Generator) -> np.ndarray:
    """Random normalised member of ``object_set`` (reduced random pure extension)."""
    aux = max(object_set.dim, min_aux_dim(object_set))
    omega = random_pure_object(object_set, aux, rng)
    return reduce_with_povm(omega, aux, np.eye(aux))


def planted_unsteerable(
    object_set: QuantumObjectSet,
    n_settings: int = 2,
    n_outcomes: int = 2,
    n_lambda: int = 3,
    seed: int = 0,
    deterministic: bool = False,
):
    """Sample a decomposition, then assemble the assemblage it explains.

    Returns ``(assemblage, decomposition)``.  Responses are random
    distributions, or random deterministic strategies when
    ``deterministic`` is set.
    """
    rng = np.random.default_rng(seed)
    weights = rng.dirichlet(np.ones(n_lambda))
    if deterministic:
        resp = np.zeros((n_lambda, n_settings, n_outcomes))
        picks = rng.integers(n_outcomes, size=(n_lambda, n_settings))
        for lam in range(n_lambda):
            resp[lam, np.arange(n_settings), picks[lam]] = 1.0
    else:
        resp = rng.dirichlet(np.ones(n_outcomes), size=(n_lambda, n_settings))
    objects = np.array([random_object(object_set, rng) for _ in range(n_lambda)])
    settings = tuple(str(x) for x in range(n_settings))
    outcomes = tuple(str(a) for a in range(n_outcomes))
    dec = UnsteerableDecomposition(settings, outcomes, tuple(range(n_lambda)), weights, resp, objects)
    asm = Assemblage(object_set, {(x, a): dec.reconstruct(x, a) for x in settings for a in outcomes})
    return asm, dec


def bell_xz_assemblage() -> Assemblage:
    """Qubit states steered from a maximally entangled pair by Z (x=0) and X (x=1)."""
    plus = np.array([1, 1]) / np.sqrt(2)
    minus = np.array([1, -1]) / np.sqrt(2)
    vecs = [[np.array([1, 0]), np.array([0, 1])], [plus, minus]]
    nested = [[0.5 * np.outer(v, v.conj()) for v in row] for row in vecs]
    return Assemblage.from_lists(state_set(2), nested)


def compose_classical(
    s: Scenario,
    decompositions: Mapping[str, UnsteerableDecomposition],
    tol: float = 1e-9,
) -> LHVModel:
    """Local hidden variable model for a scenario of unsteerable nodes.

    The global hidden variable is the tuple of local ones.  Its weight is
    ``prod_j p(l_j)`` times the value of the circuit with every node
    replaced by ``W_{l_j}``, which is 1 for normalised objects and keeps
    the weights exact when objects carry sub-normalised branches.  Party
    ``j`` answers with ``p(a_j|x_j, l_j)``.

    Raises:
        InconsistencyError: a decomposition misses its assemblage by more
            than ``tol``.
    """
    if s.network is not None:
        raise DimensionError("compose_classical needs a wired scenario without a process matrix")
    for n in s.nodes:
        if n.id not in decompositions:
            raise DimensionError(f"no decomposition for node {n.id}")
        dev = verify_unsteerable(n.assemblage, decompositions[n.id])
        if dev > tol:
            raise InconsistencyError(f"decomposition of node {n.id} is off by {dev:.3e}")
    layouts = global_layouts(s)
    order = topological_order(s) if s.acyclic else list(s.ids)
    values = _contract([(decompositions[i].objects, layouts[i]) for i in order]).real
    values = np.transpose(values, [order.index(i) for i in s.ids])
    decs = [decompositions[i] for i in s.ids]
    weights = values
    for j, dec in enumerate(decs):
        shape = [1] * len(decs)
        shape[j] = -1
        weights = weights * dec.weights.reshape(shape)
    support = tuple(itertools.product(*[range(len(dec.lambda_support)) for dec in decs]))
    responses = []
    for j, dec in enumerate(decs):
        responses.append(np.array([dec.responses[lam[j]] for lam in support]))
    return LHVModel(
        s.ids,
        tuple(dec.settings for dec in decs),
        tuple(dec.outcomes for dec in decs),
        tuple(tuple(dec.lambda_support[i] for i, dec in zip(lam, decs)) for lam in support),
        weights.reshape(-1),
        tuple(responses),
    )


def random_classical_chain(k: int, seed: int, d: int = 2, n_lambda: int = 3, n_settings: int = 2, n_outcomes: int = 2):
    """Chain of planted unsteerable assemblages.

    Returns ``(scenario, decompositions)``: a state source, ``k - 2``
    instrument nodes and a measurement node, with the decomposition each
    node was assembled from.
    """
    from .objectsets import channel_set, measurement_set
    from .scenarios import _seeds, _state_set_on, chain_scenario

    seeds = _seeds(seed, k)
    sets = [_state_set_on(["out"], d)] + [channel_set(d, d, ("in", "out"))] * (k - 2) + [measurement_set(d, "in")]
    asms, decs = [], []
    for objset, sd in zip(sets, seeds):
        asm, dec = planted_unsteerable(objset, n_settings, n_outcomes, n_lambda, sd)
        asms.append(asm)
        decs.append(dec)
    sc = chain_scenario(asms)
    return sc, dict(zip(sc.ids, decs))


__all__ = [
    "UnsteerableDecomposition",
    "SteeringFailure",
    "verify_unsteerable",
    "deterministic_support",
    "find_unsteerable",
    "single_setting_decomposition",
    "random_object",
    "planted_unsteerable",
    "bell_xz_assemblage",
    "compose_classical",
    "random_classical_chain",
]
