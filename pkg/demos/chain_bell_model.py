"""
From a sequential chain to a Bell experiment
============================================

A source feeds two instruments in a line, and a measurement ends the
chain.  Purifying every node and gluing the pure pieces along the wires
delays each measurement to an auxiliary register held by its party.  What
remains is one shared pure state with local measurements, and its
statistics equal those of the original chain.
"""

from purikit import bell_from_chain, direct_correlations, eval_bell
from purikit.scenarios import random_chain

s = random_chain(4, seed=11)
for node in s.nodes:
    print(node.id, node.role, node.layout.labels)

direct = direct_correlations(s)
model = bell_from_chain(s)
bell = eval_bell(model)

print("party dimensions:", model.party_layout.dims)
print("state norm deviation:", model.norm_deviation())
print("largest |p_bell - p_direct|:", bell.max_difference(direct))
print("p(a|x) for x = (0, 0, 0, 0):")
print(bell.p[0, 0, 0, 0].round(4))
