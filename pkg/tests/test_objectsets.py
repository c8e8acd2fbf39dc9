import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from purikit.errors import DimensionError
from purikit.linalg import SpaceLayout, partial_trace, random_channel_choi
from purikit.objectsets import (
    ProjectorSpec,
    QuantumObjectSet,
    channel_set,
    comb_set,
    extend_set,
    is_valid_object,
    measurement_set,
    min_aux_dim,
    project,
    random_pure_object,
    state_set,
)

from oracles import choi_of_map, link_by_definition, partial_trace_loops, random_hermitian, random_kraus

SETS = {
    "state": lambda: state_set(3),
    "channel": lambda: channel_set(2, 3),
    "measurement": lambda: measurement_set(3),
    "comb": lambda: comb_set([2, 2, 2, 2]),
    "extended-channel": lambda: extend_set(channel_set(2, 2), 3),
    "extended-comb": lambda: extend_set(comb_set([1, 2, 2, 1]), 4),
}


def channel_projector_formula(x, d_in, d_out):
    t_o = partial_trace_loops(x, [d_in, d_out], [1])
    t_io = np.trace(x)
    return x - np.kron(t_o, np.eye(d_out) / d_out) + t_io * np.eye(d_in * d_out) / (d_in * d_out)


@pytest.mark.parametrize("name", sorted(SETS))
def test_projector_idempotent_linear_hermitian(name):
    s = SETS[name]()
    rng = np.random.default_rng(0)
    x, y = random_hermitian(s.dim, rng), random_hermitian(s.dim, rng)
    px = project(s, x)
    assert np.abs(project(s, px) - px).max() <= 1e-11 * np.abs(x).max()
    assert np.abs(px - px.conj().T).max() <= 1e-11
    lin = project(s, 2 * x - 0.5 * y) - (2 * px - 0.5 * project(s, y))
    assert np.abs(lin).max() <= 1e-11
    assert np.abs(project(s, np.zeros_like(x))).max() == 0


@pytest.mark.parametrize("name", sorted(SETS))
def test_projector_self_adjoint(name):
    s = SETS[name]()
    rng = np.random.default_rng(1)
    x, y = random_hermitian(s.dim, rng), random_hermitian(s.dim, rng)
    lhs = np.trace(project(s, x) @ y)
    rhs = np.trace(x @ project(s, y))
    assert abs(lhs - rhs) <= 1e-10


def test_channel_projector_matches_formula():
    s = channel_set(2, 3)
    rng = np.random.default_rng(2)
    x = random_hermitian(6, rng)
    px = project(s, x)
    assert np.abs(px - channel_projector_formula(x, 2, 3)).max() <= 1e-12
    assert abs(np.trace(px) - np.trace(x)) <= 1e-11
    t_o = partial_trace(px, s.layout, ["O"])
    assert np.abs(t_o - np.trace(t_o) / 2 * np.eye(2)).max() <= 1e-11


@settings(max_examples=20, deadline=None)
@given(d_in=st.integers(1, 3), d_out=st.integers(1, 3), seed=st.integers(0, 2**32 - 1))
def test_channel_chois_are_fixed_points(d_in, d_out, seed):
    rng = np.random.default_rng(seed)
    kraus = random_kraus(d_in, d_out, d_in * d_out, rng)
    choi = choi_of_map(lambda e: sum(k @ e @ k.conj().T for k in kraus), d_in)
    s = channel_set(d_in, d_out)
    assert np.abs(project(s, choi) - choi).max() <= 1e-12
    assert is_valid_object(s, choi).valid


def test_validity_examples():
    assert is_valid_object(state_set(2), np.eye(2) / 2).valid
    ident = choi_of_map(lambda e: e, 2)
    r = is_valid_object(channel_set(2, 2), ident)
    assert r.valid and s_gamma_equals_trace(ident, 2)
    r = is_valid_object(channel_set(2, 2), 1.5 * ident)
    assert r.psd and r.structural and not r.normalized
    assert abs(r.trace_excess - 1.0) <= 1e-12


def s_gamma_equals_trace(m, gamma):
    return abs(np.trace(m).real - gamma) <= 1e-12


def test_default_gammas():
    assert state_set(4).gamma == 1
    assert channel_set(3, 2).gamma == 3
    assert measurement_set(3).gamma == 3
    assert comb_set([2, 3, 4, 5]).gamma == 8


def test_one_slot_comb_equals_channel():
    rng = np.random.default_rng(3)
    x = random_hermitian(6, rng)
    comb = comb_set([2, 3], ["I", "O"])
    assert np.abs(project(comb, x) - project(channel_set(2, 3), x)).max() <= 1e-12


def test_two_tooth_comb_from_linked_channels_is_fixed():
    rng = np.random.default_rng(4)
    # first tooth I1 -> O1 (x) M, second tooth I2 (x) M -> O2
    c1 = random_channel_choi(2, 4, rng)
    c2 = random_channel_choi(4, 2, rng)
    comb = link_by_definition(c1, ["I1", "O1", "M"], [2, 2, 2], c2, ["I2", "M", "O2"], [2, 2, 2])
    s = comb_set([2, 2, 2, 2])
    # the oracle output is ordered I1, O1, I2, O2
    assert np.abs(project(s, comb) - comb).max() <= 1e-12
    assert is_valid_object(s, comb).valid


def test_backward_signalling_channel_is_not_a_comb():
    # O1 receives I2: a valid channel on I1 I2 -> O1 O2 that violates causal order
    kraus = np.zeros((4, 4))
    for i1 in range(2):
        for i2 in range(2):
            kraus[i2 * 2 + i1, i1 * 2 + i2] = 1  # |o1=i2, o2=i1><i1, i2|
    v = np.zeros(16)
    for c in range(4):
        v += np.kron(np.eye(4)[c], kraus[:, c])
    swap = np.outer(v, v)
    # reorder I1 I2 O1 O2 -> I1 O1 I2 O2
    t = swap.reshape([2] * 8).transpose(0, 2, 1, 3, 4, 6, 5, 7).reshape(16, 16)
    s = comb_set([2, 2, 2, 2])
    assert np.abs(project(s, t) - t).max() > 0.1


def test_extension_trivial_ancilla_matches_base():
    base = channel_set(2, 2)
    ext = extend_set(base, 1)
    rng = np.random.default_rng(5)
    x = random_hermitian(4, rng)
    assert np.abs(project(ext, x) - project(base, x)).max() <= 1e-12


def test_extension_of_state_set_is_identity():
    ext = extend_set(state_set(2), 3)
    rng = np.random.default_rng(6)
    x = random_hermitian(6, rng)
    assert np.abs(project(ext, x) - x).max() == 0


def test_extended_fixed_points_marginalise_to_base_fixed_points():
    base = channel_set(2, 2)
    ext = extend_set(base, 4)
    rng = np.random.default_rng(7)
    for _ in range(50):
        w = project(ext, random_hermitian(16, rng))
        t = partial_trace(w, ext.layout, [ext.projector.aux])
        assert np.abs(project(base, t) - t).max() <= 1e-11


def test_double_extension_equals_product_ancilla():
    base = comb_set([1, 2, 2, 1])
    twice = extend_set(extend_set(base, 2), 3)
    once = extend_set(base, 6)
    rng = np.random.default_rng(8)
    for _ in range(5):
        x = random_hermitian(24, rng)
        assert np.abs(project(twice, x) - project(once, x)).max() <= 1e-11


def test_extension_label_is_fresh():
    s = QuantumObjectSet(SpaceLayout.of(("A", 2, "output")), ProjectorSpec.state())
    ext = extend_set(s, 2)
    assert ext.projector.aux != "A"
    assert len(set(ext.layout.labels)) == 2


@pytest.mark.parametrize("name", ["state", "channel", "measurement", "comb"])
def test_random_pure_object_reduces_to_valid_object(name):
    s = SETS[name]()
    rng = np.random.default_rng(9)
    aux = max(s.dim, min_aux_dim(s))
    w = random_pure_object(s, aux, rng)
    ext = extend_set(s, aux)
    omega = np.outer(w, w.conj())
    assert np.abs(project(ext, omega) - omega).max() <= 1e-12
    reduced = partial_trace(omega, ext.layout, [ext.projector.aux])
    r = is_valid_object(s, reduced)
    assert r.valid
    assert abs(np.trace(reduced).real - s.gamma) <= 1e-12


def test_random_pure_object_rejects_small_ancilla():
    s = comb_set([2, 2, 2, 2])
    with pytest.raises(DimensionError):
        random_pure_object(s, min_aux_dim(s) - 1, np.random.default_rng(0))


def test_project_dimension_mismatch():
    with pytest.raises(DimensionError):
        project(channel_set(2, 2), np.eye(3))


def test_projector_labels_must_cover_layout():
    with pytest.raises(DimensionError):
        QuantumObjectSet(SpaceLayout.of(("I", 2, "input"), ("O", 2, "output")), ProjectorSpec.channel(["I"], []))
