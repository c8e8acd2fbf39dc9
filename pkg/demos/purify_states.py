"""
Purifying a steering assemblage of states
=========================================

A non-signalling family of sub-normalised states ``sigma[a|x]`` always has
a single pure state ``omega`` plus one measurement per setting that
reproduces it.  Here we build such a family at random, purify it and check
the reconstruction member by member.
"""

import numpy as np

from purikit import marginals, purify_states, random_non_signalling, state_set, verify_purification

# Three settings with two outcomes each on a qutrit.
asm = random_non_signalling(state_set(3), n_settings=3, n_outcomes=2, seed=42)
report = marginals(asm)
print("no-signalling deviation:", report.max_deviation)

# The purification uses the square root of the common marginal.
p = purify_states(asm)
print("auxiliary dimension:", p.aux_dim)
print("norm of omega:", np.linalg.norm(p.omega))

# Every member comes back from Tr_A[(M[a|x] (x) 1) |omega><omega|].
print("worst reconstruction error:", verify_purification(asm, p))
print("POVM completeness error:", p.completeness_deviation())

# The measurement for setting "1" is a genuine POVM on the auxiliary system.
for a in asm.outcomes("1"):
    print(f"M[{a}|1] eigenvalues:", np.round(np.linalg.eigvalsh(p.povms[("1", a)]), 6))
