"""Dense complex linear algebra with labelled tensor factors.

Matrices are plain ``numpy`` arrays of dtype ``complex128``.  The subsystem
structure lives next to them in a :class:`SpaceLayout`, an ordered tuple of
labelled factors.  The computational basis is ordered row-major with the
first factor varying slowest, which is the convention of :func:`numpy.kron`.

Choi operators follow the unnormalised, input-first convention

    C = sum_ij |i><j| (x) E(|i><j|),

so that for a Kraus operator ``K`` the vectorisation is ``K.T.reshape(-1)``.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import CapacityError, DimensionError, NotPSDError

DEFAULT_MAX_DIM = 4096
DEFAULT_TAU = 1e-10
ROLES = ("input", "output", "auxiliary", "wire")


def max_dim() -> int:
    """Largest total dimension any single operation may produce.

    Reads ``PURIKIT_MAX_DIM`` on every call, falling back to 4096.
    """
    value = os.environ.get("PURIKIT_MAX_DIM")
    return int(value) if value else DEFAULT_MAX_DIM


def _check_capacity(dim: int) -> None:
    cap = max_dim()
    if dim > cap:
        raise CapacityError(f"total dimension {dim} exceeds the cap of {cap}")


@dataclass(frozen=True)
class Factor:
    label: str
    dim: int
    role: str = "wire"

    def __post_init__(self):
        if int(self.dim) < 1:
            raise DimensionError(f"factor {self.label!r} has dimension {self.dim}")
        if self.role not in ROLES:
            raise DimensionError(f"unknown role {self.role!r} for factor {self.label!r}")


@dataclass(frozen=True)
class SpaceLayout:
    """Ordered tensor factors annotating a matrix.

    >>> lay = SpaceLayout.of(("I", 2, "input"), ("O", 3, "output"))
    >>> lay.dim, lay.labels
    (6, ('I', 'O'))
    """

    factors: tuple[Factor, ...] = ()

    def __post_init__(self):
        labels = [f.label for f in self.factors]
        if len(set(labels)) != len(labels):
            raise DimensionError(f"duplicate labels in layout: {labels}")

    @classmethod
    def of(cls, *specs) -> "SpaceLayout":
        """Build from ``(label, dim[, role])`` tuples or :class:`Factor` objects."""
        out = []
        for spec in specs:
            out.append(spec if isinstance(spec, Factor) else Factor(*spec))
        return cls(tuple(out))

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(f.label for f in self.factors)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(f.dim for f in self.factors)

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims, dtype=np.int64)) if self.factors else 1

    def __len__(self):
        return len(self.factors)

    def __contains__(self, label):
        return label in self.labels

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise DimensionError(f"unknown label {label!r}; layout has {self.labels}") from None

    def factor(self, label: str) -> Factor:
        return self.factors[self.index(label)]

    def dim_of(self, labels: Iterable[str] | str) -> int:
        if isinstance(labels, str):
            labels = [labels]
        return int(np.prod([self.factor(lab).dim for lab in labels], dtype=np.int64))

    def with_role(self, role: str) -> tuple[str, ...]:
        return tuple(f.label for f in self.factors if f.role == role)

    def without(self, labels: Iterable[str]) -> "SpaceLayout":
        drop = set(labels)
        for lab in drop:
            self.index(lab)
        return SpaceLayout(tuple(f for f in self.factors if f.label not in drop))

    def select(self, labels: Sequence[str]) -> "SpaceLayout":
        return SpaceLayout(tuple(self.factor(lab) for lab in labels))

    def renamed(self, mapping: dict[str, str]) -> "SpaceLayout":
        return SpaceLayout(
            tuple(Factor(mapping.get(f.label, f.label), f.dim, f.role) for f in self.factors)
        )

    def __add__(self, other: "SpaceLayout") -> "SpaceLayout":
        return SpaceLayout(self.factors + other.factors)


def max_abs(m) -> float:
    """Largest absolute entry, the norm used for every deviation in this package."""
    m = np.asarray(m)
    return float(np.abs(m).max()) if m.size else 0.0


def dagger(m: np.ndarray) -> np.ndarray:
    return m.conj().T


def is_hermitian(m: np.ndarray, rtol: float = 1e-12) -> bool:
    return max_abs(m - dagger(m)) <= rtol * max(1.0, max_abs(m))


def _square(m: np.ndarray, layout: SpaceLayout) -> np.ndarray:
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {m.shape}")
    if m.shape[0] != layout.dim:
        raise DimensionError(f"matrix of size {m.shape[0]} does not match layout dimension {layout.dim}")
    return m


def tensor(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product; ``a`` is the slowest-varying factor."""
    a = np.asarray(a)
    b = np.asarray(b)
    _check_capacity(max(a.shape[0] * b.shape[0], a.shape[-1] * b.shape[-1]))
    return np.kron(a, b)


def partial_trace(m: np.ndarray, layout: SpaceLayout, traced: Iterable[str]) -> np.ndarray:
    """Trace out the factors named in ``traced``; the rest keep their order."""
    m = _square(m, layout)
    traced = set(traced)
    for lab in traced:
        layout.index(lab)
    n = len(layout)
    rows = list(range(n))
    cols = [k if layout.labels[k] in traced else n + k for k in range(n)]
    keep = [k for k in range(n) if layout.labels[k] not in traced]
    out = [rows[k] for k in keep] + [cols[k] for k in keep]
    t = m.reshape(layout.dims + layout.dims)
    res = np.einsum(t, rows + cols, out)
    d = int(np.prod([layout.dims[k] for k in keep], dtype=np.int64)) if keep else 1
    return res.reshape(d, d)


def embed_identity(m: np.ndarray, layout: SpaceLayout, labels: Iterable[str]) -> np.ndarray:
    """Place ``m`` on the factors of ``layout`` not in ``labels`` and the
    normalised identity ``1/d`` on those in ``labels``.

    ``embed_identity(partial_trace(x, lay, S), lay, S)`` is the usual
    trace-and-replace map.
    """
    labels = set(labels)
    for lab in labels:
        layout.index(lab)
    n = len(layout)
    keep = [k for k in range(n) if layout.labels[k] not in labels]
    rest = layout.select([layout.labels[k] for k in keep])
    m = _square(m, rest)
    operands = [m.reshape(rest.dims + rest.dims), [k for k in keep] + [n + k for k in keep]]
    scale = 1.0
    for k in range(n):
        if layout.labels[k] in labels:
            d = layout.dims[k]
            operands += [np.eye(d), [k, n + k]]
            scale *= d
    res = np.einsum(*operands, list(range(2 * n)))
    return res.reshape(layout.dim, layout.dim) / scale


def trace_replace(m: np.ndarray, layout: SpaceLayout, labels: Iterable[str]) -> np.ndarray:
    labels = list(labels)
    return embed_identity(partial_trace(m, layout, labels), layout, labels)


def permute(m: np.ndarray, layout: SpaceLayout, order: Sequence[str]) -> tuple[np.ndarray, SpaceLayout]:
    """Reorder the tensor factors of a square matrix."""
    m = _square(m, layout)
    if sorted(order) != sorted(layout.labels):
        raise DimensionError(f"{list(order)} is not a permutation of {list(layout.labels)}")
    perm = [layout.index(lab) for lab in order]
    n = len(layout)
    t = m.reshape(layout.dims + layout.dims).transpose(perm + [n + p for p in perm])
    new = layout.select(order)
    return t.reshape(new.dim, new.dim), new


def permute_vector(v: np.ndarray, layout: SpaceLayout, order: Sequence[str]) -> tuple[np.ndarray, SpaceLayout]:
    v = np.asarray(v).reshape(-1)
    if v.size != layout.dim or sorted(order) != sorted(layout.labels):
        raise DimensionError("vector and layout do not match the requested order")
    perm = [layout.index(lab) for lab in order]
    new = layout.select(order)
    return v.reshape(layout.dims).transpose(perm).reshape(-1), new


def partial_transpose(m: np.ndarray, layout: SpaceLayout, labels: Iterable[str]) -> np.ndarray:
    m = _square(m, layout)
    labels = set(labels)
    n = len(layout)
    perm = list(range(2 * n))
    for k, lab in enumerate(layout.labels):
        if lab in labels:
            perm[k], perm[n + k] = n + k, k
    return m.reshape(layout.dims + layout.dims).transpose(perm).reshape(m.shape)


def psd_pow(m: np.ndarray, p: float, tau: float = DEFAULT_TAU) -> np.ndarray:
    """Power ``1/2`` or ``-1/2`` of a Hermitian positive semidefinite matrix.

    Eigenvalues below ``tau * lambda_max`` count as exactly zero; for
    ``p = -1/2`` they are mapped to zero, giving the Moore-Penrose
    convention.  Raises :class:`NotPSDError` when an eigenvalue is below
    ``-1e-8 * max|m|``.
    """
    if p not in (0.5, -0.5):
        raise ValueError(f"only p = 1/2 and p = -1/2 are supported, got {p}")
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {m.shape}")
    h = (m + dagger(m)) / 2
    w, v = np.linalg.eigh(h)
    scale = max_abs(m)
    if w.size and w[0] < -1e-8 * scale:
        raise NotPSDError(f"eigenvalue {w[0]:.3e} is below -1e-8 * {scale:.3e}")
    lam_max = w[-1] if w.size else 0.0
    cut = tau * lam_max
    f = np.zeros_like(w)
    support = w > cut
    f[support] = np.sqrt(w[support]) if p > 0 else 1.0 / np.sqrt(w[support])
    return (v * f) @ dagger(v)


def support_projector(m: np.ndarray, tau: float = DEFAULT_TAU) -> np.ndarray:
    w, v = np.linalg.eigh((m + dagger(m)) / 2)
    keep = w > tau * (w[-1] if w.size else 0.0)
    v = v[:, keep]
    return v @ dagger(v)


def _link_einsum(a, la: SpaceLayout, b, lb: SpaceLayout, shared: set, batch_a: bool, batch_b: bool):
    for lab in shared:
        if lab not in la or lab not in lb:
            raise DimensionError(f"shared label {lab!r} missing from one of the layouts")
        if la.factor(lab).dim != lb.factor(lab).dim:
            raise DimensionError(
                f"dimension mismatch on {lab!r}: {la.factor(lab).dim} vs {lb.factor(lab).dim}"
            )
    clash = (set(la.labels) & set(lb.labels)) - shared
    if clash:
        raise DimensionError(f"labels {sorted(clash)} appear on both sides but are not contracted")
    na, nb = len(la), len(lb)
    ra = list(range(na))
    ca = list(range(na, 2 * na))
    nxt = 2 * na
    rb, cb = [], []
    for lab in lb.labels:
        if lab in shared:
            k = la.index(lab)
            rb.append(ra[k])
            cb.append(ca[k])
        else:
            rb.append(nxt)
            cb.append(nxt + 1)
            nxt += 2
    BA, BB = nxt, nxt + 1
    keep_a = [k for k in range(na) if la.labels[k] not in shared]
    keep_b = [k for k in range(nb) if lb.labels[k] not in shared]
    out_rows = [ra[k] for k in keep_a] + [rb[k] for k in keep_b]
    out_cols = [ca[k] for k in keep_a] + [cb[k] for k in keep_b]
    new_layout = la.select([la.labels[k] for k in keep_a]) + lb.select([lb.labels[k] for k in keep_b])
    _check_capacity(new_layout.dim)
    ia = ([BA] if batch_a else []) + ra + ca
    ib = ([BB] if batch_b else []) + rb + cb
    out = ([BA] if batch_a else []) + ([BB] if batch_b else []) + out_rows + out_cols
    ta = a.reshape(a.shape[:1] * batch_a + la.dims + la.dims)
    tb = b.reshape(b.shape[:1] * batch_b + lb.dims + lb.dims)
    res = np.einsum(ta, ia, tb, ib, out, optimize=True)
    lead = a.shape[:1] * batch_a + b.shape[:1] * batch_b
    return res.reshape(lead + (new_layout.dim, new_layout.dim)), new_layout


def link_product(
    a: np.ndarray, la: SpaceLayout, b: np.ndarray, lb: SpaceLayout, shared: Iterable[str]
) -> tuple[np.ndarray, SpaceLayout]:
    """Link product ``Tr_S[(a^{T_S} (x) 1)(1 (x) b)]`` over the shared labels ``S``.

    The result acts on ``a``'s remaining factors followed by ``b``'s.  With
    no shared labels this is the tensor product.
    """
    a = _square(a, la)
    b = _square(b, lb)
    return _link_einsum(a, la, b, lb, set(shared), False, False)


def link_batched(a, la, b, lb, shared):
    """:func:`link_product` over stacks ``a[i]`` and ``b[j]``; returns ``r[i, j]``."""
    return _link_einsum(np.asarray(a), la, np.asarray(b), lb, set(shared), True, True)


def link_vectors(
    u: np.ndarray, lu: SpaceLayout, v: np.ndarray, lv: SpaceLayout, shared: Iterable[str]
) -> tuple[np.ndarray, SpaceLayout]:
    """Link product of rank-one operators ``|u><u|`` and ``|v><v|`` in vector form.

    The link of two rank-one operators is rank one, with vector
    ``w = sum_s u[.., s] v[s, ..]``.
    """
    shared = set(shared)
    u = np.asarray(u).reshape(lu.dims)
    v = np.asarray(v).reshape(lv.dims)
    for lab in shared:
        if lu.factor(lab).dim != lv.factor(lab).dim:
            raise DimensionError(f"dimension mismatch on {lab!r}")
    clash = (set(lu.labels) & set(lv.labels)) - shared
    if clash:
        raise DimensionError(f"labels {sorted(clash)} appear on both sides but are not contracted")
    iu = list(range(len(lu)))
    iv = [lu.index(lab) if lab in shared else len(lu) + k for k, lab in enumerate(lv.labels)]
    keep_u = [k for k in range(len(lu)) if lu.labels[k] not in shared]
    keep_v = [k for k in range(len(lv)) if lv.labels[k] not in shared]
    out = [iu[k] for k in keep_u] + [iv[k] for k in keep_v]
    new_layout = lu.select([lu.labels[k] for k in keep_u]) + lv.select([lv.labels[k] for k in keep_v])
    _check_capacity(new_layout.dim)
    res = np.einsum(u, iu, v, iv, out, optimize=True)
    return res.reshape(-1), new_layout


def apply_choi(choi: np.ndarray, layout: SpaceLayout, rho: np.ndarray) -> np.ndarray:
    """Apply the map with Choi operator ``choi`` to ``rho``.

    Computes ``Tr_I[(rho^T (x) 1_O) choi]`` where ``I`` are the factors of
    ``layout`` with role ``"input"``.
    """
    inputs = layout.with_role("input")
    lin = layout.select(inputs)
    rho = np.asarray(rho)
    if rho.shape != (lin.dim, lin.dim):
        raise DimensionError(f"state of shape {rho.shape} does not match input dimension {lin.dim}")
    out, _ = link_product(rho, lin, choi, layout, inputs)
    return out


def choi_from_kraus(kraus: Sequence[np.ndarray]) -> np.ndarray:
    """Choi operator ``sum_k |K_k>><<K_k|`` in the input-first convention."""
    vecs = np.array([np.asarray(k).T.reshape(-1) for k in kraus])
    return vecs.T @ vecs.conj()


def unvec(v: np.ndarray, d_in: int, d_out: int) -> np.ndarray:
    """Inverse of the input-first vectorisation ``K -> K.T.reshape(-1)``."""
    return np.asarray(v).reshape(d_in, d_out).T


def haar_unitary(d: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random unitary from the QR decomposition of a Ginibre matrix."""
    z = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    ph = np.diagonal(r) / np.abs(np.diagonal(r))
    return q * ph


def haar_isometry(d_in: int, d_out: int, rng: np.random.Generator) -> np.ndarray:
    if d_out < d_in:
        raise DimensionError(f"no isometry from dimension {d_in} into {d_out}")
    return haar_unitary(d_out, rng)[:, :d_in]


def random_density(d: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    rank = d if rank is None else rank
    g = rng.standard_normal((d, rank)) + 1j * rng.standard_normal((d, rank))
    rho = g @ dagger(g)
    return rho / np.trace(rho).real


def random_channel_choi(d_in: int, d_out: int, rng: np.random.Generator, n_kraus: int | None = None) -> np.ndarray:
    n_kraus = d_in * d_out if n_kraus is None else n_kraus
    v = haar_isometry(d_in, d_out * n_kraus, rng)
    kraus = [v[k * d_out:(k + 1) * d_out] for k in range(n_kraus)]
    return choi_from_kraus(kraus)
