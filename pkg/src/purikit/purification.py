"""Simultaneous purification of non-signalling assemblages.

Two constructions are provided.  The square-root construction works on the
operators themselves (states, or Choi operators of any object type): for a
marginal ``O`` and members ``O[a|x]``,

    |w> = sum_i |i> (x) O^{1/2} |i>,      M[a|x] = (O^{-1/2} O[a|x] O^{-1/2})^T,

so that ``Tr_A[(M[a|x] (x) 1)|w><w|] = O[a|x]``.  The Kraus construction
dilates an instrument assemblage through the Stinespring isometry of a
minimal Kraus family of the marginal channel.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .assemblages import DEFAULT_TOL, Assemblage, marginals, reduce_with_povm
from .errors import DimensionError, InconsistencyError, SignallingError
from .linalg import (
    DEFAULT_TAU,
    SpaceLayout,
    choi_from_kraus,
    dagger,
    max_abs,
    permute,
    psd_pow,
    support_projector,
    unvec,
)
from .objectsets import QuantumObjectSet, extend_set, project


@dataclass(frozen=True)
class Purification:
    """Pure extended object ``|omega>`` on ``A (x) H`` and POVMs on ``A``."""

    aux_dim: int
    omega: np.ndarray = field(repr=False)
    povms: Mapping[tuple[str, str], np.ndarray] = field(repr=False)
    extended_set: QuantumObjectSet

    @property
    def omega_operator(self) -> np.ndarray:
        return np.outer(self.omega, self.omega.conj())

    @property
    def aux_label(self) -> str:
        return self.extended_set.projector.aux

    def reconstruct(self, x: str, a: str) -> np.ndarray:
        return reduce_with_povm(self.omega, self.aux_dim, self.povms[(x, a)])

    def completeness_deviation(self) -> float:
        eye = np.eye(self.aux_dim)
        dev = 0.0
        for x in dict.fromkeys(k[0] for k in self.povms):
            total = sum(m for (y, _), m in self.povms.items() if y == x)
            dev = max(dev, max_abs(total - eye))
        return dev


def _require_non_signalling(asm: Assemblage, tol: float):
    report = marginals(asm, tol)
    if not report.is_non_signalling:
        raise SignallingError(
            f"assemblage is signalling: per-setting sums differ by {report.max_deviation:.3e} > {tol:.1e}",
            report,
        )
    return report.marginal


def _square_root_construction(asm: Assemblage, marginal: np.ndarray, tau: float):
    d = marginal.shape[0]
    root = psd_pow(marginal, 0.5, tau)
    inv_root = psd_pow(marginal, -0.5, tau)
    # Kernel completion: the raw elements sum to the support projector, so the
    # complement is shared evenly; it is annihilated by |omega>.
    complement = (np.eye(d) - support_projector(marginal, tau)).T
    omega = root.T.reshape(-1)
    povms = {}
    for x in asm.settings:
        outs = asm.outcomes(x)
        for a in outs:
            m = (inv_root @ asm[(x, a)] @ inv_root).T
            m = (m + dagger(m)) / 2 + complement / len(outs)
            povms[(x, a)] = m
    return omega, povms


def purify_states(asm: Assemblage, tol: float = DEFAULT_TOL, tau: float = DEFAULT_TAU) -> Purification:
    """Remote-preparation form of a non-signalling state assemblage.

    The auxiliary space is a copy of the state space.

    Raises:
        SignallingError: the per-setting sums differ by more than ``tol``.
    """
    if asm.object_set.projector.kind != "state":
        raise DimensionError("purify_states expects a state assemblage; use purify_object")
    marginal = _require_non_signalling(asm, tol)
    omega, povms = _square_root_construction(asm, marginal, tau)
    d = asm.object_set.dim
    return Purification(d, omega, povms, extend_set(asm.object_set, d))


def purify_object(asm: Assemblage, tol: float = DEFAULT_TOL, tau: float = DEFAULT_TAU) -> Purification:
    """Purify an assemblage of arbitrary quantum objects through their Choi operators.

    The result lives in the extended set with an auxiliary copy of the
    object space.  Raises :class:`SignallingError` for signalling input and
    :class:`InconsistencyError` if the pure object is not a fixed point of
    the extended projector or exceeds the normalisation.
    """
    marginal = _require_non_signalling(asm, tol)
    omega, povms = _square_root_construction(asm, marginal, tau)
    d = asm.object_set.dim
    ext = extend_set(asm.object_set, d)
    big = np.outer(omega, omega.conj())
    scale = max(1.0, max_abs(big))
    dev = max_abs(project(ext, big) - big)
    if dev > tol * scale:
        raise InconsistencyError(
            f"purified object misses the extended projector by {dev:.3e}; "
            "the marginal is not a valid object of the set"
        )
    trace = float(np.vdot(omega, omega).real)
    if trace > ext.gamma + tol * scale:
        raise InconsistencyError(f"purified object has trace {trace} above gamma = {ext.gamma}")
    return Purification(d, omega, povms, ext)


def verify_purification(asm: Assemblage, p: Purification) -> float:
    """Largest ``max|Tr_A[(M (x) 1) Omega] - O[a|x]|`` over all members."""
    if p.omega.size != p.aux_dim * asm.object_set.dim:
        raise DimensionError("purification and assemblage dimensions disagree")
    dev = 0.0
    for key, member in asm.members.items():
        if key not in p.povms:
            raise DimensionError(f"no POVM element for member {key}")
        dev = max(dev, max_abs(reduce_with_povm(p.omega, p.aux_dim, p.povms[key]) - member))
    return dev


# Kraus route


@dataclass(frozen=True)
class KrausFamily:
    operators: list = field(repr=False)
    rank: int
    d_in: int
    d_out: int
    weights: np.ndarray = field(repr=False, default=None)

    def completeness_deviation(self) -> float:
        total = sum(dagger(k) @ k for k in self.operators)
        return max_abs(total - np.eye(self.d_in))

    def choi(self) -> np.ndarray:
        return choi_from_kraus(self.operators)


def _io_order(layout: SpaceLayout):
    ins = layout.with_role("input")
    outs = [lab for lab in layout.labels if lab not in ins]
    return list(ins), outs


def _canonical_eig(m: np.ndarray, tau: float, absolute: float | None = None):
    """Eigenpairs sorted descending, kernel dropped, phases fixed so the
    largest-magnitude entry of each eigenvector is real positive."""
    w, v = np.linalg.eigh((m + dagger(m)) / 2)
    order = np.argsort(w)[::-1]
    w, v = w[order], v[:, order]
    cut = absolute if absolute is not None else tau * max(w[0], 0.0)
    keep = w > cut
    w, v = w[keep], v[:, keep]
    for k in range(v.shape[1]):
        j = np.argmax(np.abs(v[:, k]))
        v[:, k] *= np.abs(v[j, k]) / v[j, k]
    return w, v


def _kraus_from_choi(choi: np.ndarray, layout: SpaceLayout, tau: float, absolute=None):
    ins, outs = _io_order(layout)
    c, lay = permute(choi, layout, ins + outs)
    d_in = lay.dim_of(ins)
    d_out = lay.dim_of(outs)
    w, v = _canonical_eig(c, tau, absolute)
    ops = [np.sqrt(lam) * unvec(v[:, k], d_in, d_out) for k, lam in enumerate(w)]
    return ops, w, d_in, d_out


def minimal_kraus(choi: np.ndarray, layout: SpaceLayout, tol: float = DEFAULT_TOL, tau: float = DEFAULT_TAU) -> KrausFamily:
    """Minimal Kraus family ``K_i = sqrt(lambda_i) unvec(v_i)`` of a channel Choi operator.

    Operators map the product of the ``"input"`` factors to the product of
    the remaining factors, in layout order.
    """
    ops, w, d_in, d_out = _kraus_from_choi(choi, layout, tau)
    fam = KrausFamily(ops, len(ops), d_in, d_out, w)
    if np.linalg.eigvalsh((choi + dagger(choi)) / 2)[0] < -tol or fam.completeness_deviation() > tol:
        raise InconsistencyError("input is not the Choi operator of a trace-preserving CP map")
    return fam


@dataclass(frozen=True)
class IsometricDilation:
    """Stinespring isometry ``V: H_I -> H_A (x) H_O`` with POVMs on ``H_A``.

    ``coefficients[(x, a)]`` holds the rows ``u_mu`` expressing the member
    Kraus operators ``L_mu = sum_i u[mu, i] K_i``.
    """

    isometry: np.ndarray = field(repr=False)
    povms: Mapping[tuple[str, str], np.ndarray] = field(repr=False)
    kraus: KrausFamily = field(repr=False)
    coefficients: Mapping[tuple[str, str], np.ndarray] = field(repr=False)

    @property
    def aux_dim(self) -> int:
        return self.kraus.rank

    def apply(self, x: str, a: str, rho: np.ndarray) -> np.ndarray:
        """``Tr_A[(M[a|x] (x) 1) V rho V^dag]``."""
        r, d_out = self.aux_dim, self.kraus.d_out
        big = (self.isometry @ rho @ dagger(self.isometry)).reshape(r, d_out, r, d_out)
        return np.einsum("ij,jpiq->pq", self.povms[(x, a)], big)

    def member_choi(self, x: str, a: str) -> np.ndarray:
        """Choi operator of the reconstructed member, in input-then-output order."""
        m = self.povms[(x, a)]
        vecs = np.array([k.T.reshape(-1) for k in self.kraus.operators])
        # sum_ij <j|M|i> |K_i>><<K_j|
        return vecs.T @ m.T @ vecs.conj()

    def isometry_relation_deviation(self) -> float:
        """``max|sum_{a,mu} conj(u[mu,i]) u[mu,j] - delta_ij|`` over settings."""
        r = self.aux_dim
        dev = 0.0
        for x in dict.fromkeys(k[0] for k in self.coefficients):
            u = np.vstack([c for (y, _), c in self.coefficients.items() if y == x])
            dev = max(dev, max_abs(u.conj().T @ u - np.eye(r)))
        return dev

    def completeness_deviation(self) -> float:
        eye = np.eye(self.aux_dim)
        dev = 0.0
        for x in dict.fromkeys(k[0] for k in self.povms):
            total = sum(m for (y, _), m in self.povms.items() if y == x)
            dev = max(dev, max_abs(total - eye))
        return dev


def purify_instrument_kraus(asm: Assemblage, tol: float = DEFAULT_TOL, tau: float = DEFAULT_TAU) -> IsometricDilation:
    """Dilate a non-signalling instrument assemblage via a minimal Kraus family.

    Each member's Kraus operators ``L_mu`` are expanded in the minimal family
    ``K_i`` of the marginal channel by least squares under the
    Hilbert-Schmidt inner product.  With ``|u_mu> = sum_i u[mu, i] |i>`` the
    POVM element is ``sum_mu |conj(u_mu)><conj(u_mu)|``; the conjugate is what
    makes ``Tr_A[(M (x) 1) V rho V^dag]`` equal ``sum_mu L_mu rho L_mu^dag``.

    Raises:
        SignallingError: the per-setting sums differ by more than ``tol``.
        InconsistencyError: some ``L_mu`` lies outside the span of the ``K_i``
            by more than ``tol``.
    """
    marginal = _require_non_signalling(asm, tol)
    layout = asm.object_set.layout
    fam = minimal_kraus(marginal, layout, tol, tau)
    basis = np.array([k.reshape(-1) for k in fam.operators]).T  # columns are vec(K_i)
    gram = dagger(basis) @ basis
    povms, coeffs = {}, {}
    floor = tau * float(np.max(fam.weights))
    for key, member in asm.members.items():
        ops, _, _, _ = _kraus_from_choi(member, layout, tau, absolute=floor)
        if not ops:
            u = np.zeros((0, fam.rank), dtype=complex)
        else:
            targets = np.array([op.reshape(-1) for op in ops]).T
            sol = np.linalg.solve(gram, dagger(basis) @ targets)
            resid = max_abs(basis @ sol - targets)
            if resid > tol:
                raise InconsistencyError(
                    f"member {key} has Kraus operators outside the marginal span (residual {resid:.3e})"
                )
            u = sol.T  # row mu holds u[mu, i]
        coeffs[key] = u
        w = u.conj()
        povms[key] = w.T @ w.conj()  # sum_mu |conj(u_mu)><conj(u_mu)|
    isometry = np.vstack(fam.operators)
    dil = IsometricDilation(isometry, povms, fam, coeffs)
    rel = dil.isometry_relation_deviation()
    if rel > tol:
        raise InconsistencyError(f"coefficients violate the isometry relation by {rel:.3e}")
    return dil


def verify_dilation(asm: Assemblage, dil: IsometricDilation) -> float:
    """Largest deviation between reconstructed and given member Choi operators."""
    layout = asm.object_set.layout
    ins, outs = _io_order(layout)
    dev = 0.0
    for key, member in asm.members.items():
        target, _ = permute(member, layout, ins + outs)
        dev = max(dev, max_abs(dil.member_choi(*key) - target))
    return dev
