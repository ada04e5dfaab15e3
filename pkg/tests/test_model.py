import numpy as np
import pytest
from hypothesis import given, strategies as st

from netsched.model import (
    GainMissingError,
    ModeMatrices,
    ModelError,
    NcsConfig,
    PlantModel,
    check_assumptions,
    closed_loop_matrix,
    controllability_matrix,
    generate_random_ncs,
    is_controllable,
    is_schur_stable,
    spectral_radius,
)
from netsched.presets import INVERTED_PENDULUM


def pendulum():
    d = INVERTED_PENDULUM
    return PlantModel(1, d["A"], d["B"], d["K"])


def test_pendulum_closed_loop_entrywise():
    # elementwise A + B K written out by hand
    k1, k2 = -2.3973087, -1.4308615
    want = np.array([
        [1.0123 + 0.0123 * k1, 0.0502 + 0.0123 * k2],
        [0.4920 + 0.4920 * k1, 1.0123 + 0.4920 * k2],
    ])
    got = closed_loop_matrix(pendulum())
    assert np.max(np.abs(got - want)) < 1e-15
    assert np.allclose(got, [[0.982813, 0.032600], [-0.687476, 0.308316]], atol=1e-6)


def test_closed_loop_needs_gain():
    p = PlantModel(1, [[2.0]], [[1.0]])
    with pytest.raises(GainMissingError, match="gain not set"):
        closed_loop_matrix(p)


def test_mode_matrices():
    mm = ModeMatrices.from_plant(pendulum())
    assert np.array_equal(mm.unstable, pendulum().A)
    assert np.array_equal(mm.stable, closed_loop_matrix(pendulum()))


def test_pendulum_open_loop_unstable_closed_loop_stable():
    A = np.array(INVERTED_PENDULUM["A"])
    # eigenvalues 1.0123 ± sqrt(0.0502 * 0.4920)
    assert spectral_radius(A) == pytest.approx(1.0123 + np.sqrt(0.0502 * 0.4920), abs=1e-12)
    assert not is_schur_stable(A)
    assert is_schur_stable(closed_loop_matrix(pendulum()))


def test_schur_boundary():
    assert not is_schur_stable([[1.0]])
    assert is_schur_stable([[0.999]])
    assert not is_schur_stable([[0.0, 1.0], [-1.0, 0.0]])


def test_controllability():
    A = [[1.0, 1.0], [0.0, 1.0]]
    assert is_controllable(A, [[0.0], [1.0]])
    assert not is_controllable(A, [[1.0], [0.0]])
    C = controllability_matrix(A, [[0.0], [1.0]])
    assert np.array_equal(C, [[0.0, 1.0], [1.0, 1.0]])


def test_plant_shapes_rejected():
    with pytest.raises(ModelError):
        PlantModel(1, [[1.0, 2.0]], [[1.0]])
    with pytest.raises(ModelError):
        PlantModel(1, [[1.0]], [[1.0]], K=[[1.0, 2.0]])
    with pytest.raises(ModelError):
        PlantModel(1, [[np.inf]], [[1.0]])
    with pytest.raises(ModelError):
        PlantModel(0, [[1.0]], [[1.0]])


def test_ncs_config_validation():
    p = [PlantModel(i, [[2.0]], [[1.0]], [[-2.0]]) for i in (1, 2)]
    with pytest.raises(ModelError, match="0<M<N"):
        NcsConfig(tuple(p), 2)
    with pytest.raises(ModelError, match="0<M<N"):
        NcsConfig(tuple(p), 0)
    with pytest.raises(ModelError):
        NcsConfig((p[0], PlantModel(3, [[2.0]], [[1.0]])), 1)
    cfg = NcsConfig((p[1], p[0]), 1)
    assert [q.index for q in cfg.plants] == [1, 2] and cfg.v == 2


def test_check_assumptions_preset_passes(exp1):
    rep = check_assumptions(exp1.config)
    assert rep.passed and rep.divisible and rep.failures() == []


def test_check_assumptions_divisibility():
    plants = tuple(PlantModel(i, [[2.0]], [[1.0]], [[-2.0]]) for i in (1, 2, 3))
    rep = check_assumptions(NcsConfig(plants, 2))
    assert not rep.divisible and not rep.passed
    assert all(f.passed for f in rep.plants)


def test_check_assumptions_zero_gain_fails_closed_loop():
    plants = (PlantModel(1, [[2.0]], [[1.0]], [[0.0]]), PlantModel(2, [[2.0]], [[1.0]], [[-2.0]]))
    rep = check_assumptions(NcsConfig(plants, 1))
    assert not rep.passed
    assert not rep.plants[0].closed_loop_stable and rep.plants[1].closed_loop_stable


def test_generate_random_ncs_properties():
    cfg = generate_random_ncs(4, 5, seed=7)
    assert cfg.N == 4
    for p in cfg.plants:
        assert p.A.shape == (5, 5) and p.B.shape == (5, 1) and p.K is None
        assert np.all(np.abs(p.A) <= 2) and set(np.unique(p.B)) <= {0.0, 1.0}
        assert spectral_radius(p.A) >= 1
        assert is_controllable(p.A, p.B)


def test_generate_random_ncs_deterministic():
    a = generate_random_ncs(4, 5, seed=7)
    b = generate_random_ncs(4, 5, seed=7)
    c = generate_random_ncs(4, 5, seed=8)
    assert a == b
    assert a != c


@given(
    k1=st.floats(-5, 5), k2=st.floats(-5, 5), c=st.floats(-3, 3),
)
def test_closed_loop_affine_in_gain(k1, k2, c):
    A = np.array(INVERTED_PENDULUM["A"])
    B = np.array(INVERTED_PENDULUM["B"])
    K1 = np.array([[k1, k2]])
    K2 = np.array([[k2, -k1]])
    f = lambda K: closed_loop_matrix(PlantModel(1, A, B, K))
    lhs = f(K1 + c * K2) - A
    rhs = (f(K1) - A) + c * (f(K2) - A)
    assert np.allclose(lhs, rhs, atol=1e-12 * (1 + abs(c)) * 50)


@given(st.integers(0, 2**32 - 1))
def test_generate_random_ncs_any_seed_unstable_controllable(seed):
    cfg = generate_random_ncs(2, 3, seed=seed)
    for p in cfg.plants:
        assert not is_schur_stable(p.A) and is_controllable(p.A, p.B)
