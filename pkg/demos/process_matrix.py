"""
Parties on a process matrix
===========================

Correlations can also be described by a process matrix ``W`` together
with one instrument per party, ``p = Tr[W (C_A (x) C_B)]``.  For a
causally ordered ``W`` we compare against the explicit wiring and then
build the Bell model directly from ``W``.
"""

from purikit import bell_from_process_matrix, direct_correlations, eval_bell, process_matrix_correlations
from purikit.scenarios import random_causal_network

spec, parties, chain = random_causal_network(seed=2)
print("process matrix factors:", spec.layout.labels)

pm = process_matrix_correlations(spec, parties)
print("normalisation deviation:", pm.diagnostics["normalization_deviation"])
print("signalling deviation:", pm.diagnostics["signalling_deviation"])
print("vs explicit chain:", pm.max_difference(direct_correlations(chain).squeezed()))

model = bell_from_process_matrix(spec, parties)
print("shared state is pure:", model.is_pure)
print("Bell model deviation:", eval_bell(model).max_difference(pm))
