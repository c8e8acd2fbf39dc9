"""
Unsteerable assemblages compose to local correlations
=====================================================

When every node of a chain has a local hidden state model, the chain's
correlations have a local hidden variable model.  We plant such models,
compose them, and compare.  For contrast the assemblage obtained by
measuring half of a maximally entangled pair in Z and X has no such model,
and the feasibility search reports a residual that stays well above zero.
"""

from purikit import bell_xz_assemblage, compose_classical, direct_correlations, eval_lhv, find_unsteerable
from purikit.steering import random_classical_chain

sc, decs = random_classical_chain(3, seed=1)
lhv = compose_classical(sc, decs)
print("hidden variable support size:", len(lhv.lambda_support))
print("LHV vs direct:", eval_lhv(lhv).max_difference(direct_correlations(sc)))

found = find_unsteerable(sc.nodes[0].assemblage, max_iters=500)
print("search on a planted node succeeded:", type(found).__name__)

r = find_unsteerable(bell_xz_assemblage(), max_iters=1000, restarts=3, seed=0)
print("X/Z assemblage:", type(r).__name__, "residual", round(r.residual, 4))
