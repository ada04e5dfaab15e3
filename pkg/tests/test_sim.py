import csv
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from netsched.mjls import expected_cost_exact, second_moment_operator
from netsched.model import GainMissingError, NcsConfig, PlantModel, closed_loop_matrix
from netsched.params import ScheduleParameters
from netsched.scheduler import Schedule, generate_schedule_exact, mode_signal
from netsched.sim import (
    Trajectory,
    cumulative_cost,
    estimate_stochastic_stability,
    simulate_ncs,
    simulate_plant,
    tail_increment_ratio,
    write_cost_csv,
    write_trajectory_csv,
)

q = Fraction
HALVES = ScheduleParameters.from_lists([[1], [2]], [q(1, 2), q(1, 2)])


def scalar(a_s, a_u, index=1):
    return PlantModel(index, [[a_u]], [[1.0]], [[a_s - a_u]])


def test_geometric_states():
    tr = simulate_plant(scalar(0.5, 1.2), "ssss", [1.0])
    assert tr.states[:, 0].tolist() == [1, 0.5, 0.25, 0.125, 0.0625]


def test_deadbeat():
    tr = simulate_plant(PlantModel(1, [[2.0]], [[1.0]], [[-2.0]]), ["s", "s"], [3.0])
    assert tr.states[:, 0].tolist() == [3.0, 0.0, 0.0]


def test_zero_state_stays_zero():
    tr = simulate_plant(scalar(0.5, 3.0), "susuu", [0.0])
    assert np.all(tr.states == 0)


def test_simulate_requires_gain():
    with pytest.raises(GainMissingError):
        simulate_plant(PlantModel(1, [[2.0]], [[1.0]]), "s", [1.0])


def test_cumulative_cost_examples():
    tr = simulate_plant(scalar(0.5, 1.2), "ss", [1.0])
    assert cumulative_cost(tr).tolist() == [1, 1.25, 1.3125]
    zero = simulate_plant(scalar(0.5, 1.2), "su", [0.0])
    assert cumulative_cost(zero).tolist() == [0, 0, 0]
    one = Trajectory(1, np.array([[3.0, 4.0]]), np.array([], dtype=bool))
    assert cumulative_cost(one).tolist() == [25.0]


@given(st.integers(0, 2**31), st.integers(1, 4), st.integers(1, 60))
def test_update_forms_agree(seed, d, T):
    r = np.random.default_rng(seed)
    p = PlantModel(1, r.uniform(-1.2, 1.2, (d, d)), r.uniform(-1, 1, (d, 2)), r.uniform(-1, 1, (2, d)))
    modes = r.random(T) < 0.5
    tr = simulate_plant(p, modes, r.uniform(-10, 10, d))
    # independent recomputation with the input form
    x = tr.states[0].copy()
    for t, s in enumerate(modes):
        x = p.A @ x + (p.B @ (p.K @ x) if s else 0)
        scale = max(1.0, np.abs(tr.states[t + 1]).max())
        assert np.max(np.abs(x - tr.states[t + 1])) <= 1e-12 * scale * (t + 1)
    sums = cumulative_cost(tr)
    assert np.all(np.diff(sums) >= 0)


def test_monte_carlo_scalar_within_five_percent():
    est = estimate_stochastic_stability(scalar(0.5, 1.2), HALVES, [1.0], T=500, trials=10_000, seed=1)
    exact = expected_cost_exact([[0.5]], [[1.2]], q(1, 2), [1.0])
    assert abs(est.mean - exact) / exact < 0.05
    assert not est.diverged and est.tail_ratio < 1e-6


@pytest.mark.parametrize("seed", range(20))
def test_monte_carlo_within_four_standard_errors(seed):
    r = np.random.default_rng(1000 + seed)
    while True:
        A = r.uniform(-1, 1, (2, 2))
        A *= 1.15 / max(abs(np.linalg.eigvals(A)))
        A_s = r.uniform(-1, 1, (2, 2))
        A_s *= 0.5 / max(abs(np.linalg.eigvals(A_s)))
        if second_moment_operator(A_s, A, q(1, 2)).spectral_radius < 0.9:
            break
    B = np.eye(2)
    plant = PlantModel(1, A, B, A_s - A)
    x0 = r.uniform(-1, 1, 2)
    est = estimate_stochastic_stability(plant, HALVES, x0, T=300, trials=4000, seed=seed)
    exact = expected_cost_exact(closed_loop_matrix(plant), A, q(1, 2), x0)
    assert abs(est.mean - exact) <= 4 * est.stderr


def test_divergence_flag():
    params = ScheduleParameters.from_lists([[1], [2]], [q(1, 1000), q(999, 1000)])
    est = estimate_stochastic_stability(scalar(0.0, 3.0), params, [1.0], T=1000, trials=50, seed=0)
    assert est.diverged and est.diverged_trials > 0


def test_monte_carlo_bitwise_reproducible():
    a = estimate_stochastic_stability(scalar(0.5, 1.2), HALVES, [1.0], T=100, trials=5000, seed=3)
    b = estimate_stochastic_stability(scalar(0.5, 1.2), HALVES, [1.0], T=100, trials=5000, seed=3, threads=3)
    assert a == b


def test_truncation_monotone():
    sched = generate_schedule_exact(HALVES, 400, 5)
    tr = simulate_plant(scalar(0.5, 1.2), mode_signal(sched, HALVES, 1), [2.0])
    assert cumulative_cost(tr, 400)[-1] >= cumulative_cost(tr, 200)[-1]


def test_tail_ratio():
    assert tail_increment_ratio([1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11]) == pytest.approx(1 / 11)
    assert tail_increment_ratio(np.zeros(20)) == 0.0


def two_plants():
    return NcsConfig((scalar(0.5, 1.2, 1), scalar(0.2, 1.1, 2)), 1)


def test_simulate_ncs_complementary_modes():
    sched = generate_schedule_exact(HALVES, 100, 4)
    trajs = simulate_ncs(two_plants(), sched, HALVES, {1: [1.0], 2: [1.0]})
    assert np.all(trajs[1].modes ^ trajs[2].modes)
    assert trajs[1].modes.sum() + trajs[2].modes.sum() == 100
    assert tuple("s" if m else "u" for m in trajs[1].modes) == mode_signal(sched, HALVES, 1)


def test_simulate_ncs_requires_gains():
    cfg = NcsConfig((scalar(0.5, 1.2, 1), PlantModel(2, [[2.0]], [[1.0]])), 1)
    with pytest.raises(GainMissingError):
        simulate_ncs(cfg, Schedule(np.array([1, 2]), 0, "exact"), HALVES, {1: [1.0], 2: [1.0]})


def test_csv_round_trip(tmp_path):
    sched = generate_schedule_exact(HALVES, 50, 4)
    trajs = simulate_ncs(two_plants(), sched, HALVES, {1: [1.5], 2: [-2.0]})
    write_trajectory_csv(tmp_path / "t.csv", [trajs[1], trajs[2]])
    write_cost_csv(tmp_path / "c.csv", [trajs[1], trajs[2]])
    rows = list(csv.DictReader(open(tmp_path / "t.csv")))
    assert len(rows) == 2 * 51
    for r in rows:
        x = float(r["x_1"])
        assert np.isfinite(x) and float(r["norm_sq"]) == x * x
    costs = list(csv.DictReader(open(tmp_path / "c.csv")))
    for plant in (1, 2):
        sums = [float(r["partial_sum"]) for r in costs if r["plant"] == str(plant)]
        assert np.all(np.diff(sums) >= 0)
        assert sums == cumulative_cost(trajs[plant]).tolist()
