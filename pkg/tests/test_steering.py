import itertools

import numpy as np
import pytest

from purikit.assemblages import Assemblage, marginals, random_non_signalling
from purikit.errors import CapacityError, InconsistencyError
from purikit.objectsets import channel_set, is_valid_object, state_set
from purikit.scenarios import direct_correlations, eval_lhv
from purikit.steering import (
    SteeringFailure,
    UnsteerableDecomposition,
    bell_xz_assemblage,
    compose_classical,
    deterministic_support,
    find_unsteerable,
    planted_unsteerable,
    random_classical_chain,
    single_setting_decomposition,
    verify_unsteerable,
)

cp = pytest.importorskip("cvxpy")


def sdp_margin(asm):
    """Smallest ``t`` with ``sigma_l + t 1 >= 0`` and ``sum_l D(a|x,l) sigma_l = sigma_{a|x}``.

    A non-positive optimum means an LHS model exists.  Written directly as
    an SDP over deterministic strategies for state assemblages.
    """
    d = asm.object_set.dim
    settings = asm.settings
    strategies = list(itertools.product(*[asm.outcomes(x) for x in settings]))
    sig = [cp.Variable((d, d), hermitian=True) for _ in strategies]
    t = cp.Variable()
    cons = [s + t * np.eye(d) >> 0 for s in sig]
    for (x, a), m in asm.members.items():
        xi = settings.index(x)
        cons.append(sum(s for s, lam in zip(sig, strategies) if lam[xi] == a) == m)
    prob = cp.Problem(cp.Minimize(t), cons)
    prob.solve(solver="CLARABEL")
    return float(t.value)


def test_single_setting_closed_form_on_states():
    asm = random_non_signalling(state_set(3), 1, 3, seed=1)
    dec = single_setting_decomposition(asm)
    diag = {}
    assert verify_unsteerable(asm, dec, diag) <= 1e-12
    assert diag["invalid_objects"] == [] and diag["weight_deviation"] <= 1e-12
    assert isinstance(find_unsteerable(asm, max_iters=2), UnsteerableDecomposition)


def test_single_setting_instrument_branches_are_not_channels():
    # A rescaled instrument branch reconstructs the member but is not trace preserving.
    asm = random_non_signalling(channel_set(2, 2), 1, 3, seed=1)
    dec = single_setting_decomposition(asm)
    diag = {}
    assert verify_unsteerable(asm, dec, diag) <= 1e-12
    assert len(diag["invalid_objects"]) == 3


def test_planted_instances_converge():
    for seed in range(3):
        asm, _ = planted_unsteerable(state_set(2), seed=seed)
        dec = find_unsteerable(asm, max_iters=500)
        assert isinstance(dec, UnsteerableDecomposition)
        diag = {}
        assert verify_unsteerable(asm, dec, diag) <= 1e-6
        assert diag["negative_weight"] == 0 and diag["response_deviation"] <= 1e-12


def test_planted_channel_instance_converges():
    asm, _ = planted_unsteerable(channel_set(2, 2), seed=4)
    dec = find_unsteerable(asm, max_iters=2000)
    assert isinstance(dec, UnsteerableDecomposition)
    assert verify_unsteerable(asm, dec) <= 1e-6
    for w in dec.objects:
        assert is_valid_object(asm.object_set, w, 1e-5).psd


def test_bell_xz_search_fails_with_residual():
    r = find_unsteerable(bell_xz_assemblage(), max_iters=1000, restarts=3, seed=1)
    assert isinstance(r, SteeringFailure)
    assert not r.success
    assert r.residual >= 1e-3
    assert r.restarts == 3 and r.trajectory


def test_sdp_oracle_agrees_on_steerability():
    assert sdp_margin(bell_xz_assemblage()) > 1e-3
    asm, _ = planted_unsteerable(state_set(2), seed=0)
    assert sdp_margin(asm) <= 1e-6


def test_planted_instances_are_non_signalling():
    for seed in range(5):
        asm, dec = planted_unsteerable(channel_set(2, 2), seed=seed, deterministic=seed % 2 == 0)
        assert marginals(asm).max_deviation <= 1e-11
        assert verify_unsteerable(asm, dec) <= 1e-14


def test_verify_reports_bad_objects():
    asm, dec = planted_unsteerable(state_set(2), seed=7)
    objects = dec.objects.copy()
    objects[0] = np.diag([1.5, -0.5])
    bad = UnsteerableDecomposition(dec.settings, dec.outcomes, dec.lambda_support, dec.weights, dec.responses, objects)
    diag = {}
    assert verify_unsteerable(asm, bad, diag) > 1e-3
    assert diag["invalid_objects"] == [0]


def test_support_cap():
    asm = Assemblage(state_set(2), {(str(x), str(a)): np.eye(2) / 6 for x in range(6) for a in range(3)})
    with pytest.raises(CapacityError):
        deterministic_support(asm)
    assert len(deterministic_support(bell_xz_assemblage())) == 4


def test_search_is_seed_deterministic():
    a = find_unsteerable(bell_xz_assemblage(), max_iters=200, restarts=2, seed=5)
    b = find_unsteerable(bell_xz_assemblage(), max_iters=200, restarts=2, seed=5)
    assert a.residual == b.residual and a.trajectory == b.trajectory


@pytest.mark.parametrize("k", [2, 3])
def test_classical_composition_reproduces_chain(k):
    sc, decs = random_classical_chain(k, seed=10 + k)
    lhv = compose_classical(sc, decs)
    assert lhv.normalization_deviation() <= 1e-12
    assert eval_lhv(lhv).max_difference(direct_correlations(sc)) <= 1e-12


def test_composition_rejects_wrong_decomposition():
    sc, decs = random_classical_chain(2, seed=3)
    other = dict(decs)
    p1 = other["P1"]
    other["P1"] = UnsteerableDecomposition(p1.settings, p1.outcomes, p1.lambda_support, p1.weights, p1.responses[:, ::-1], p1.objects)
    with pytest.raises(InconsistencyError):
        compose_classical(sc, other)
