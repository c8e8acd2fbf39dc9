import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from purikit.assemblages import Assemblage, random_non_signalling
from purikit.errors import DimensionError
from purikit.linalg import SpaceLayout
from purikit.objectsets import ProjectorSpec, QuantumObjectSet, channel_set, comb_set, measurement_set
from purikit.scenarios import (
    LHVModel,
    Node,
    Scenario,
    Wire,
    bell_from_chain,
    bell_from_dag,
    bell_from_loop,
    bell_from_process_matrix,
    bell_from_scenario,
    causal_process_matrix,
    chain_scenario,
    direct_correlations,
    eval_bell,
    eval_lhv,
    identity_choi,
    loop_scenario,
    network_process_matrix,
    process_matrix_correlations,
    random_causal_network,
    random_chain,
    random_diamond,
    random_fork,
    random_loop,
    single_member,
    topological_order,
)

from oracles import chain_correlations, link_by_definition


def source_set(d, labels=("out",)):
    return QuantumObjectSet(SpaceLayout.of(*[(lab, d, "output") for lab in labels]), ProjectorSpec.state())


def as_dict(asm):
    return dict(asm.members)


def compare_to_table(c, table):
    dev = 0.0
    for (xs, outs), p in table.items():
        idx = tuple(c.settings[j].index(x) for j, x in enumerate(xs))
        idx += tuple(c.outcomes[j].index(a) for j, a in enumerate(outs))
        dev = max(dev, abs(c.p[idx] - p))
    return dev


def test_prepare_and_measure_matches_oracle():
    s = random_chain(2, seed=0)
    table = chain_correlations([as_dict(n.assemblage) for n in s.nodes])
    assert compare_to_table(direct_correlations(s), table) <= 1e-12
    assert compare_to_table(eval_bell(bell_from_chain(s)), table) <= 1e-10


def test_deterministic_classical_chain_gives_delta():
    # source prepares |x>, the relay copies, the measurement reads in Z
    src = Assemblage(source_set(2), {(x, "0"): np.diag(np.eye(2)[int(x)]) for x in "01"})
    relay = single_member(channel_set(2, 2, ("in", "out")), identity_choi(2))
    meas = Assemblage(measurement_set(2, "in"), {("0", a): np.diag(np.eye(2)[int(a)]) for a in "01"})
    c = direct_correlations(chain_scenario([src, relay, meas]))
    want = np.zeros((2, 1, 1, 1, 1, 2))
    want[0, 0, 0, 0, 0, 0] = want[1, 0, 0, 0, 0, 1] = 1
    assert np.abs(c.p - want).max() <= 1e-15


@pytest.mark.parametrize("k", [3, 4])
def test_chain_direct_and_bell_match_sequential_oracle(k):
    s = random_chain(k, seed=k)
    table = chain_correlations([as_dict(n.assemblage) for n in s.nodes])
    assert compare_to_table(direct_correlations(s), table) <= 1e-12
    m = bell_from_chain(s)
    assert compare_to_table(eval_bell(m), table) <= 1e-10
    assert m.norm_deviation() <= 1e-10 and m.completeness_deviation() <= 1e-10


def test_chain_model_has_one_factor_per_party():
    s = random_chain(4, seed=1)
    m = bell_from_chain(s)
    assert m.parties == s.ids
    assert len(m.party_layout.factors) == 4
    assert m.party_factors["P4"] == ("P3.out",)
    assert m.party_layout.dims[-1] == 2


def test_chain_as_dag_agrees_with_chain_builder():
    s = random_chain(3, seed=5)
    a = eval_bell(bell_from_chain(s))
    b = eval_bell(bell_from_dag(s))
    assert a.max_difference(b) <= 1e-10


def test_dag_insensitive_to_contraction_order():
    s = random_diamond(seed=2)
    ref = direct_correlations(s)
    for order in (["S", "T1", "T2", "M"], ["S", "T2", "T1", "M"]):
        assert eval_bell(bell_from_dag(s, order)).max_difference(ref) <= 1e-10


def test_topological_order_breaks_ties_by_key():
    s = random_diamond(seed=2)
    assert topological_order(s) == ["S", "T1", "T2", "M"]
    assert topological_order(s, key=lambda i: -ord(i[-1])) == ["S", "T2", "T1", "M"]


def test_fork_matches_product_oracle():
    s = random_fork(seed=3)
    src, left, right = (n.assemblage for n in s.nodes)
    c = direct_correlations(s)
    dev = 0.0
    for (xs, a), rho in src.members.items():
        for (xl, al), el in left.members.items():
            for (xr, ar), er in right.members.items():
                p = np.trace(np.kron(el.T, er.T) @ rho).real
                dev = max(dev, abs(c.p[int(xs), int(xl), int(xr), int(a), int(al), int(ar)] - p))
    assert dev <= 1e-12
    assert eval_bell(bell_from_scenario(s)).max_difference(c) <= 1e-10


def apply_parallel(c1, c2, rho, d):
    r = rho.reshape(d, d, d, d)
    k1, k2 = c1.reshape(d, d, d, d), c2.reshape(d, d, d, d)
    out = np.einsum("abcd,aecf,bgdh->egfh", r, k1, k2)
    return out.reshape(d * d, d * d)


def test_diamond_matches_parallel_oracle():
    s = random_diamond(seed=4)
    src, t1, t2, m = (n.assemblage for n in s.nodes)
    c = direct_correlations(s)
    dev = 0.0
    for (xs, a0), rho in src.members.items():
        for (x1, a1), c1 in t1.members.items():
            for (x2, a2), c2 in t2.members.items():
                out = apply_parallel(c1, c2, rho, 2)
                for (xm, am), e in m.members.items():
                    p = np.trace(e.T @ out).real
                    idx = tuple(int(v) for v in (xs, x1, x2, xm, a0, a1, a2, am))
                    dev = max(dev, abs(c.p[idx] - p))
    assert dev <= 1e-12
    assert eval_bell(bell_from_scenario(s)).max_difference(c) <= 1e-10


def test_loop_matches_link_oracle():
    comb, inner = random_loop(seed=6)
    c = direct_correlations(loop_scenario(comb, inner))
    dev = 0.0
    for (xa, aa), ca in comb.members.items():
        for (xb, ab), cb in inner.members.items():
            p = link_by_definition(ca, ["P", "X", "Y", "F"], [1, 2, 2, 1], cb, ["X", "Y"], [2, 2])
            dev = max(dev, abs(c.p[int(xa), int(xb), int(aa), int(ab)] - p[0, 0].real))
    assert dev <= 1e-12
    assert eval_bell(bell_from_loop(comb, inner)).max_difference(c) <= 1e-10


def test_cycle_error_lists_the_cycle():
    t = single_member(channel_set(2, 2, ("in", "out")), identity_choi(2))
    nodes = (Node("A", t), Node("B", t))
    wires = (Wire.between("A.out", "B.in", 2), Wire.between("B.out", "A.in", 2))
    with pytest.raises(DimensionError, match="A -> B -> A"):
        Scenario(nodes, wires)
    Scenario(nodes, wires, acyclic=False)


def test_dimension_mismatch_names_both_ends():
    src = single_member(source_set(2), np.eye(2) / 2)
    meas = single_member(measurement_set(3, "in"), np.eye(3))
    with pytest.raises(DimensionError) as err:
        Scenario((Node("S", src, "source"), Node("M", meas, "measure")), (Wire.between("S.out", "M.in", 2),))
    assert "S.out" in str(err.value) and "M.in" in str(err.value)


def test_open_factor_rejected():
    src = single_member(source_set(2), np.eye(2) / 2)
    with pytest.raises(DimensionError, match="not connected"):
        Scenario((Node("S", src, "source"),))


def test_identity_parties_on_causal_process_matrix():
    w = causal_process_matrix([("A", 2, 2), ("B", 2, 3)])
    parties = {"A": single_member(channel_set(2, 2), identity_choi(2)), "B": single_member(channel_set(2, 3), np.kron(np.eye(2), np.eye(3)) / 3)}
    c = process_matrix_correlations(w, parties)
    assert abs(c.p.reshape(-1)[0] - 1) <= 1e-14


def test_z_measurements_on_bell_state():
    phi = np.array([1, 0, 0, 1]) / np.sqrt(2)
    lay = SpaceLayout.of(("A.I", 2, "input"), ("B.I", 2, "input"))
    w = network_process_matrix([(np.outer(phi, phi), lay)])
    z = Assemblage(measurement_set(2), {("0", "0"): np.diag([1.0, 0]), ("0", "1"): np.diag([0, 1.0])})
    c = process_matrix_correlations(w, {"A": z, "B": z})
    assert np.abs(c.p.reshape(2, 2) - np.eye(2) / 2).max() <= 1e-15
    m = bell_from_process_matrix(w, {"A": z, "B": z})
    assert eval_bell(m).max_difference(c) <= 1e-12


def test_product_state_gives_product_correlations():
    rng = np.random.default_rng(7)
    ra, rb = (np.diag(rng.dirichlet([1, 1])) for _ in range(2))
    lay = SpaceLayout.of(("A.I", 2, "input"), ("B.I", 2, "input"))
    w = network_process_matrix([(np.kron(ra, rb), lay)])
    z = Assemblage(measurement_set(2), {("0", "0"): np.diag([1.0, 0]), ("0", "1"): np.diag([0, 1.0])})
    c = process_matrix_correlations(w, {"A": z, "B": z})
    assert np.abs(c.p.reshape(2, 2) - np.outer(np.diag(ra), np.diag(rb))).max() <= 1e-15
    m = bell_from_process_matrix(w, {"A": z, "B": z})
    assert not m.is_pure and m.norm_deviation() <= 1e-12
    assert eval_bell(m).max_difference(c) <= 1e-12


@settings(max_examples=5, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_causal_network_matches_its_chain(seed):
    spec, parties, chain = random_causal_network(seed)
    pm = process_matrix_correlations(spec, parties)
    assert pm.diagnostics["normalization_deviation"] <= 1e-12
    assert pm.max_difference(direct_correlations(chain).squeezed()) <= 1e-12
    assert eval_bell(bell_from_process_matrix(spec, parties)).max_difference(pm) <= 1e-10


def test_parallel_jobs_match_serial():
    s = random_chain(3, seed=9)
    assert direct_correlations(s, jobs=4).max_difference(direct_correlations(s)) == 0
    m = bell_from_chain(s)
    assert eval_bell(m, jobs=3).max_difference(eval_bell(m)) == 0


def test_correlations_are_normalised_and_non_signalling_forward():
    c = direct_correlations(random_chain(3, seed=10))
    assert c.normalization_deviation() <= 1e-12
    assert c.min_probability() >= -1e-12


def test_lhv_shared_coin():
    resp = np.zeros((2, 1, 2))
    resp[0, 0, 0] = resp[1, 0, 1] = 1
    m = LHVModel(("A", "B"), (("0",), ("0",)), (("0", "1"), ("0", "1")), (0, 1), np.array([0.5, 0.5]), (resp, resp))
    c = eval_lhv(m)
    assert np.abs(c.p.reshape(2, 2) - np.eye(2) / 2).max() == 0
    assert m.normalization_deviation() == 0


def test_lhv_product_response():
    rng = np.random.default_rng(11)
    ra = rng.dirichlet([1, 1, 1], size=(1, 2))
    rb = rng.dirichlet([1, 1], size=(1, 3))
    m = LHVModel(("A", "B"), (("0", "1"), ("0", "1", "2")), (("0", "1", "2"), ("0", "1")), (0,), np.ones(1), (ra, rb))
    c = eval_lhv(m)
    for x, y, a, b in itertools.product(range(2), range(3), range(3), range(2)):
        assert abs(c.p[x, y, a, b] - ra[0, x, a] * rb[0, y, b]) <= 1e-15


def test_two_round_combs_on_a_multi_round_process_matrix():
    # A sends to B, B answers, A sends again, B's last output is discarded.
    rho = np.diag([0.7, 0.3]).astype(complex)
    components = [
        (rho, SpaceLayout.of(("A.I1", 2, "input"))),
        (identity_choi(2), SpaceLayout.of(("A.O1", 2, "output"), ("B.I1", 2, "input"))),
        (identity_choi(2), SpaceLayout.of(("B.O1", 2, "output"), ("A.I2", 2, "input"))),
        (identity_choi(2), SpaceLayout.of(("A.O2", 2, "output"), ("B.I2", 2, "input"))),
        (np.eye(2), SpaceLayout.of(("B.O2", 2, "output"))),
    ]
    w = network_process_matrix(components, rounds=2)
    s = comb_set([2, 2, 2, 2])
    parties = {"A": random_non_signalling(s, 2, 2, aux_dim=16, seed=1), "B": random_non_signalling(s, 2, 2, aux_dim=16, seed=2)}
    c = process_matrix_correlations(w, parties)
    assert c.diagnostics["normalization_deviation"] <= 1e-12
    assert c.diagnostics["signalling_deviation"] <= 1e-12
    m = bell_from_process_matrix(w, parties)
    assert m.party_layout.dims == (16, 16)
    assert eval_bell(m).max_difference(c) <= 1e-10


def test_process_matrix_layout_mismatch():
    w = causal_process_matrix([("A", 2, 2), ("B", 2, 2)])
    parties = {"A": single_member(channel_set(2, 2), identity_choi(2)), "C": single_member(channel_set(2, 2), identity_choi(2))}
    with pytest.raises(DimensionError):
        bell_from_process_matrix(w, parties)


def test_two_node_chain_shares_the_source_purification():
    from purikit.purification import purify_states

    s = random_chain(2, seed=12)
    m = bell_from_chain(s)
    omega = purify_states(s.nodes[0].assemblage).omega
    assert np.abs(m.shared_state - omega).max() <= 1e-14
