"""Reference implementations written from the textbook definitions.

Nothing here imports the package.  Everything is explicit index loops or
plain ``np.kron`` algebra, slow but easy to check by eye.
"""

import itertools

import numpy as np


def multi_index(flat, dims):
    out = []
    for d in reversed(dims):
        out.append(flat % d)
        flat //= d
    return tuple(reversed(out))


def flat_index(idx, dims):
    f = 0
    for i, d in zip(idx, dims):
        f = f * d + i
    return f


def partial_trace_loops(m, dims, traced):
    """Trace out the factor positions in ``traced`` by summing matrix entries."""
    keep = [k for k in range(len(dims)) if k not in traced]
    kdims = [dims[k] for k in keep]
    n = int(np.prod(kdims)) if kdims else 1
    out = np.zeros((n, n), dtype=complex)
    total = int(np.prod(dims))
    for r in range(total):
        ri = multi_index(r, dims)
        for c in range(total):
            ci = multi_index(c, dims)
            if all(ri[k] == ci[k] for k in traced):
                out[flat_index([ri[k] for k in keep], kdims), flat_index([ci[k] for k in keep], kdims)] += m[r, c]
    return out


def partial_transpose_loops(m, dims, positions):
    total = int(np.prod(dims))
    out = np.zeros_like(m, dtype=complex)
    for r in range(total):
        ri = list(multi_index(r, dims))
        for c in range(total):
            ci = list(multi_index(c, dims))
            r2, c2 = ri[:], ci[:]
            for k in positions:
                r2[k], c2[k] = ci[k], ri[k]
            out[flat_index(r2, dims), flat_index(c2, dims)] = m[r, c]
    return out


def permutation_matrix(dims, order):
    """Unitary taking factor order ``range(n)`` to ``order``."""
    new_dims = [dims[k] for k in order]
    total = int(np.prod(dims))
    p = np.zeros((total, total))
    for f in range(total):
        idx = multi_index(f, dims)
        p[flat_index([idx[k] for k in order], new_dims), f] = 1
    return p


def link_by_definition(a, labels_a, dims_a, b, labels_b, dims_b):
    """``Tr_S[(A^{T_S} (x) 1)(1 (x) B)]`` with ``S`` the common labels.

    Both operators are brought to the common order ``[A only, S, B only]``
    and multiplied as full matrices.
    """
    shared = [lab for lab in labels_a if lab in labels_b]
    a_only = [lab for lab in labels_a if lab not in shared]
    b_only = [lab for lab in labels_b if lab not in shared]
    dim = dict(zip(labels_a, dims_a))
    dim.update(zip(labels_b, dims_b))
    a_t = partial_transpose_loops(a, list(dims_a), [labels_a.index(lab) for lab in shared])
    order_a = [labels_a.index(lab) for lab in a_only + shared]
    pa = permutation_matrix(list(dims_a), order_a)
    a_t = pa @ a_t @ pa.T
    order_b = [labels_b.index(lab) for lab in shared + b_only]
    pb = permutation_matrix(list(dims_b), order_b)
    b2 = pb @ b @ pb.T
    d_a = int(np.prod([dim[lab] for lab in a_only])) if a_only else 1
    d_b = int(np.prod([dim[lab] for lab in b_only])) if b_only else 1
    full = np.kron(a_t, np.eye(d_b)) @ np.kron(np.eye(d_a), b2)
    full_dims = [dim[lab] for lab in a_only + shared + b_only]
    s_pos = list(range(len(a_only), len(a_only) + len(shared)))
    return partial_trace_loops(full, full_dims, s_pos)


def choi_of_map(f, d_in):
    """``sum_ij |i><j| (x) f(|i><j|)``."""
    blocks = []
    for i in range(d_in):
        for j in range(d_in):
            e = np.zeros((d_in, d_in), dtype=complex)
            e[i, j] = 1
            blocks.append(np.kron(e, f(e)))
    return sum(blocks)


def kraus_apply(kraus, rho):
    return sum(k @ rho @ k.conj().T for k in kraus)


def map_from_choi(choi, d_in, d_out):
    """Returns ``rho -> Tr_I[(rho^T (x) 1) choi]`` via entry loops."""

    def f(rho):
        out = np.zeros((d_out, d_out), dtype=complex)
        c = choi.reshape(d_in, d_out, d_in, d_out)
        for i in range(d_in):
            for j in range(d_in):
                out += rho[i, j] * c[i, :, j, :]
        return out

    return f


def random_psd(d, rng, rank=None):
    rank = d if rank is None else rank
    g = rng.standard_normal((d, rank)) + 1j * rng.standard_normal((d, rank))
    return g @ g.conj().T


def random_hermitian(d, rng):
    g = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    return (g + g.conj().T) / 2


def random_kraus(d_in, d_out, n, rng):
    g = rng.standard_normal((n * d_out, d_in)) + 1j * rng.standard_normal((n * d_out, d_in))
    q, _ = np.linalg.qr(g)
    return [q[k * d_out:(k + 1) * d_out] for k in range(n)]


def chain_probability(source, maps, effect):
    """``Tr[E (T_k ... T_1)(rho)]`` applying each map in the Schroedinger picture."""
    rho = source
    for f in maps:
        rho = f(rho)
    return float(np.trace(effect @ rho).real)


def chain_correlations(members):
    """Sequential evaluation of a chain given per-node dicts ``(x, a) -> operator``.

    Node 0 holds states, middle nodes hold ``(d, d)`` Choi operators of
    qubit-style square maps, the last node holds Choi operators of effects
    (the transposed POVM elements).  Returns ``{(xs, as): p}``.
    """
    src, mids, last = members[0], members[1:-1], members[-1]
    out = {}
    keys = [list(m) for m in members]
    for combo in itertools.product(*keys):
        xs = tuple(k[0] for k in combo)
        outs = tuple(k[1] for k in combo)
        rho = src[combo[0]]
        d = rho.shape[0]
        fs = [map_from_choi(m[k], d, d) for m, k in zip(mids, combo[1:-1])]
        effect = last[combo[-1]].T
        out[(xs, outs)] = chain_probability(rho, fs, effect)
    return out
