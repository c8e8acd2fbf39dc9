"""Assemblages of quantum objects and the non-signalling test."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .linalg import dagger, haar_unitary, max_abs
from .objectsets import (
    QuantumObjectSet,
    is_valid_object,
    min_aux_dim,
    random_pure_object,
)

DEFAULT_TOL = 1e-9


@dataclass(frozen=True)
class Assemblage:
    """Members ``O[a|x]`` of one object set, keyed by ``(x, a)`` string labels.

    Outcome sets may differ between settings.  Member order is the insertion
    order of ``members``.
    """

    object_set: QuantumObjectSet
    members: Mapping[tuple[str, str], np.ndarray]

    def __post_init__(self):
        members = {}
        for (x, a), m in self.members.items():
            m = np.asarray(m, dtype=complex)
            if m.shape != (self.object_set.dim, self.object_set.dim):
                raise ValueError(
                    f"member ({x}, {a}) has shape {m.shape}, expected dimension {self.object_set.dim}"
                )
            members[(str(x), str(a))] = m
        object.__setattr__(self, "members", members)

    @classmethod
    def from_lists(cls, object_set: QuantumObjectSet, nested) -> "Assemblage":
        """Build from ``nested[x][a]`` with labels ``"0", "1", ...``."""
        return cls(
            object_set,
            {(str(x), str(a)): m for x, row in enumerate(nested) for a, m in enumerate(row)},
        )

    @property
    def settings(self) -> list[str]:
        return list(dict.fromkeys(x for x, _ in self.members))

    def outcomes(self, x: str) -> list[str]:
        return [a for (y, a) in self.members if y == x]

    @property
    def all_outcomes(self) -> list[str]:
        return list(dict.fromkeys(a for _, a in self.members))

    def __getitem__(self, key):
        x, a = key
        return self.members[(str(x), str(a))]

    def setting_sum(self, x: str) -> np.ndarray:
        return sum(self.members[(x, a)] for a in self.outcomes(x))

    def stack(self, x: str) -> np.ndarray:
        """Members for setting ``x`` as an array ``(n_outcomes, d, d)``."""
        return np.array([self.members[(x, a)] for a in self.outcomes(x)])


@dataclass(frozen=True)
class AssemblageReport:
    valid: bool
    member_reports: dict = field(repr=False)
    setting_reports: dict = field(repr=False)
    trace_deviation: dict = field(repr=False)
    offending: list = field(default_factory=list)

    @property
    def max_violation(self) -> float:
        worst = 0.0
        for r in list(self.member_reports.values()) + list(self.setting_reports.values()):
            worst = max(worst, -r.min_eigenvalue, r.trace_excess, 0.0)
        for r in self.setting_reports.values():
            worst = max(worst, r.projector_deviation)
        return max([worst] + [abs(v) for v in self.trace_deviation.values()])


def validate(asm: Assemblage, tol: float = DEFAULT_TOL) -> AssemblageReport:
    """Check members and per-setting sums against the object set.

    Members must be positive with trace at most ``gamma``.  The projector
    condition and the equality ``Tr sum_a O[a|x] = gamma`` are checked on the
    per-setting sums: individual instrument elements are generally not
    fixed points of the channel projector, only their sum is.
    """
    s = asm.object_set
    members = {key: is_valid_object(s, m, tol) for key, m in asm.members.items()}
    settings = {x: is_valid_object(s, asm.setting_sum(x), tol) for x in asm.settings}
    traces = {x: float(np.trace(asm.setting_sum(x)).real - s.gamma) for x in asm.settings}
    offending = []
    for key, r in members.items():
        if not (r.psd and r.normalized):
            offending.append(key)
    for x, r in settings.items():
        if not (r.valid and abs(traces[x]) <= tol):
            offending.append((x, None))
    return AssemblageReport(not offending, members, settings, traces, offending)


@dataclass(frozen=True)
class MarginalReport:
    is_non_signalling: bool
    marginal: np.ndarray = field(repr=False)
    max_deviation: float


def marginals(asm: Assemblage, tol: float = DEFAULT_TOL) -> MarginalReport:
    """Compare the per-setting sums; the canonical marginal is their mean."""
    sums = [asm.setting_sum(x) for x in asm.settings]
    dev = 0.0
    for i in range(len(sums)):
        for j in range(i + 1, len(sums)):
            dev = max(dev, max_abs(sums[i] - sums[j]))
    return MarginalReport(dev <= tol, sum(sums) / len(sums), dev)


def random_povm(aux_dim: int, n_outcomes: int, rng: np.random.Generator) -> list[np.ndarray]:
    """POVM from the first ``aux_dim`` columns of a Haar unitary, split by rows."""
    u = haar_unitary(aux_dim * n_outcomes, rng)[:, :aux_dim]
    blocks = [u[a * aux_dim:(a + 1) * aux_dim] for a in range(n_outcomes)]
    return [dagger(b) @ b for b in blocks]


def reduce_with_povm(omega: np.ndarray, aux_dim: int, povm_element: np.ndarray) -> np.ndarray:
    """``Tr_A[(M (x) 1) |w><w|]`` for ``w`` ordered as ``A (x) H``."""
    w = np.asarray(omega).reshape(aux_dim, -1)
    return w.T @ povm_element.T @ w.conj()


def _outcome_counts(n_settings, n_outcomes):
    if isinstance(n_outcomes, int):
        return [n_outcomes] * n_settings
    counts = list(n_outcomes)
    if len(counts) != n_settings:
        raise ValueError("one outcome count per setting is required")
    return counts


def sample_purified(object_set: QuantumObjectSet, n_settings: int, n_outcomes, aux_dim: int, seed):
    """Random pure extended object and POVMs; returns ``(omega, povms)``.

    ``povms`` maps ``(x, a)`` to an operator on the auxiliary space.
    """
    rng = np.random.default_rng(seed)
    omega = random_pure_object(object_set, aux_dim, rng)
    povms = {}
    for x, n in enumerate(_outcome_counts(n_settings, n_outcomes)):
        for a, m in enumerate(random_povm(aux_dim, n, rng)):
            povms[(str(x), str(a))] = m
    return omega, povms


def assemble(object_set: QuantumObjectSet, omega: np.ndarray, povms: Mapping, aux_dim: int) -> Assemblage:
    """Members ``Tr_A[(M[a|x] (x) 1) |w><w|]`` for every POVM element."""
    return Assemblage(
        object_set, {key: reduce_with_povm(omega, aux_dim, m) for key, m in povms.items()}
    )


def random_non_signalling(
    object_set: QuantumObjectSet,
    n_settings: int,
    n_outcomes,
    aux_dim: int | None = None,
    seed: int = 0,
) -> Assemblage:
    """Seeded random assemblage that is non-signalling by construction.

    ``n_outcomes`` is an int or one count per setting.  ``aux_dim`` defaults
    to the larger of the set dimension and the minimum the sampler needs.
    """
    if aux_dim is None:
        aux_dim = max(object_set.dim, min_aux_dim(object_set))
    omega, povms = sample_purified(object_set, n_settings, n_outcomes, aux_dim, seed)
    return assemble(object_set, omega, povms, aux_dim)


