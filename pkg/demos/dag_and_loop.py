"""
Branching networks and a loop
=============================

The same gluing works for any directed acyclic wiring, here a diamond
where a source feeds two parallel instruments whose outputs are measured
jointly.  It also works when a comb player sends a system to a partner
and receives it back, which closes a loop.
"""

from purikit import bell_from_dag, bell_from_loop, direct_correlations, eval_bell, loop_scenario
from purikit.scenarios import random_diamond, random_loop, topological_order

s = random_diamond(seed=5)
print("wires:", [(f"{w.src}.{w.src_label}", f"{w.dst}.{w.dst_label}") for w in s.wires])
print("contraction order:", topological_order(s))

direct = direct_correlations(s)
for order in (["S", "T1", "T2", "M"], ["S", "T2", "T1", "M"]):
    print(order, "deviation", eval_bell(bell_from_dag(s, order)).max_difference(direct))

comb, inner = random_loop(seed=8)
loop = loop_scenario(comb, inner)
print("loop deviation:", eval_bell(bell_from_loop(comb, inner)).max_difference(direct_correlations(loop)))
