"""
Purifying assemblages of quantum combs
======================================

The same construction works for any set of objects described by a
projector, for example two-tooth combs (super-instruments).  The pure
object lives in the comb set extended by an auxiliary wire, and it is a
fixed point of the extended projector.
"""

import numpy as np

from purikit import comb_set, extend_set, project, purify_object, random_non_signalling, verify_purification

s = comb_set([2, 2, 2, 2])
print("comb dimension:", s.dim, "normalisation:", s.gamma)

asm = random_non_signalling(s, n_settings=2, n_outcomes=2, aux_dim=16, seed=3)
p = purify_object(asm)

omega = p.omega_operator
ext = extend_set(s, p.aux_dim)
evals = np.linalg.eigvalsh(omega)
print("reconstruction error:", verify_purification(asm, p))
print("second eigenvalue / largest:", evals[-2] / evals[-1])
print("extended projector fixed point error:", np.abs(project(ext, omega) - omega).max())
print("trace of omega:", np.trace(omega).real)
