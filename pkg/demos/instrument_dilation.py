"""
Two routes to an instrument purification
========================================

For assemblages of instruments there are two constructions.  The general
one purifies the Choi operators inside the extended channel set.  The
Kraus one builds a Stinespring isometry from a minimal Kraus family of the
average channel and moves all classical information into a measurement on
the environment.  Both must give back the same instrument.
"""

import numpy as np

from purikit import (
    apply_choi,
    channel_set,
    purify_instrument_kraus,
    purify_object,
    random_non_signalling,
    verify_dilation,
    verify_purification,
)
from purikit.linalg import random_density

asm = random_non_signalling(channel_set(2, 2), n_settings=2, n_outcomes=3, seed=7)

p = purify_object(asm)
print("Choi route: auxiliary dimension", p.aux_dim, "error", verify_purification(asm, p))

d = purify_instrument_kraus(asm)
v = d.isometry
print("Kraus route: Kraus rank", d.aux_dim, "error", verify_dilation(asm, d))
print("isometry check |V^dag V - 1|:", np.abs(v.conj().T @ v - np.eye(2)).max())

# Feed a random input state through one branch of each construction.
rho = random_density(2, np.random.default_rng(0))
layout = asm.object_set.layout
direct = apply_choi(asm[("1", "2")], layout, rho)
via_choi = apply_choi(p.reconstruct("1", "2"), layout, rho)
via_kraus = d.apply("1", "2", rho)
print("branch (x=1, a=2) differences:", np.abs(via_choi - direct).max(), np.abs(via_kraus - direct).max())
