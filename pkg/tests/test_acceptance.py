"""Exit-gate checks. Each test prints one PASS/FAIL line (also collected in the terminal summary)."""

import functools
import time
from fractions import Fraction
from itertools import product

import numpy as np
import pytest
import scipy.stats

from netsched.certify import condition_residuals, find_certificate, verify_certificate
from netsched.experiments import partition_covers_once, run_experiment2, simulate_batch
from netsched.mjls import expected_cost_exact, iid_stability_test, second_moment_operator
from netsched.model import NcsConfig, PlantModel, closed_loop_matrix
from netsched.params import ScheduleParameters
from netsched.presets import BATCH_REACTOR, INVERTED_PENDULUM
from netsched.scheduler import generate_schedule_exact, generate_schedule_iid
from netsched.search import search_schedule_parameters
from netsched.sim import estimate_stochastic_stability
from netsched.synthesis import compute_gain, synthesize_controllers

from conftest import ACCEPTANCE_LINES, random_schur
from test_search import SHAPES, VALUES, naive_feasible, scalar_config

HALF = Fraction(1, 2)


def criterion(label):
    def wrap(fn):
        @functools.wraps(fn)
        def run(*args, **kwargs):
            start = time.perf_counter()
            try:
                detail = fn(*args, **kwargs)
            except BaseException as exc:
                line = f"FAIL  {label}: {type(exc).__name__}: {str(exc).splitlines()[0] if str(exc) else ''}"
                print(line)
                ACCEPTANCE_LINES.append(line)
                raise
            line = f"PASS  {label} ({time.perf_counter() - start:.2f} s){': ' + detail if detail else ''}"
            print(line)
            ACCEPTANCE_LINES.append(line)

        return run

    return wrap


def _modes(data):
    A, B, K = (np.array(data[k]) for k in ("A", "B", "K"))
    return A + B @ K, A


@criterion("1 reference certificates verify and match reference residuals")
def test_c1_reference_certificates(exp1):
    start = time.perf_counter()
    worst = 0.0
    for i, data in ((1, BATCH_REACTOR), (2, INVERTED_PENDULUM)):
        plant = exp1.config.plant(i)
        cert = exp1.certificates[i]
        assert cert.p == HALF
        res = condition_residuals(closed_loop_matrix(plant), plant.A, cert)
        for R, key in ((res.R_s, "R_s"), (res.R_u, "R_u")):
            assert np.linalg.eigvalsh(R)[-1] < 0, f"plant {i} {key} not negative definite"
            gap = np.max(np.abs(R - np.array(data[key])))
            assert gap <= 1.0, f"plant {i} {key} off by {gap}"
            worst = max(worst, gap)
        assert verify_certificate(closed_loop_matrix(plant), plant.A, cert).ok
    elapsed = time.perf_counter() - start
    assert elapsed < 1.0
    return f"max residual gap {worst:.2e}"


@criterion("2 gain formula K = Y P_s reproduces reference gains")
def test_c2_gain_formula():
    gap2 = np.max(np.abs(compute_gain(INVERTED_PENDULUM["Y"], INVERTED_PENDULUM["P_s"]) - np.array(INVERTED_PENDULUM["K"])))
    gap1 = np.max(np.abs(compute_gain(BATCH_REACTOR["Y"], BATCH_REACTOR["P_s"]) - np.array(BATCH_REACTOR["K"])))
    assert gap2 <= 1e-3, gap2
    assert gap1 <= 1e-2, gap1
    return f"pendulum {gap2:.1e}, reactor {gap1:.1e}"


@criterion("3 end-to-end synthesis + 10x10 simulation, tail ratio < 1%")
def test_c3_end_to_end(exp1):
    start = time.perf_counter()
    config, params = exp1.config, exp1.params
    assert params.partition.as_lists() == [[1], [2]] and params.probabilities.values == (HALF, HALF)
    res = synthesize_controllers(config, params, kappa=1e-8)
    assert res.ok, res.failures()
    designed = res.apply(config)
    for plant in designed.plants:
        cert = res.certificates[plant.index]
        assert verify_certificate(closed_loop_matrix(plant), plant.A, cert).ok
        assert verify_certificate(closed_loop_matrix(plant), plant.A, cert, band="strict").ok
    tails, _ = simulate_batch(designed, params, T=1000, n_schedules=10, n_initial=10, seed=1)
    for i, t in tails.items():
        assert len(t) == 100
        assert max(t) < 0.01, f"plant {i}: max tail ratio {max(t)}"
    elapsed = time.perf_counter() - start
    assert elapsed < 30.0
    return ", ".join(f"plant {i} max tail {max(t):.1e}" for i, t in sorted(tails.items()))


@criterion("4 find_certificate agrees with the second-moment test on 200 random instances")
def test_c4_oracle_equivalence():
    rng = np.random.default_rng(20240607)
    grid = [Fraction(k, 10) for k in range(1, 10)]
    checked = agree = certified = 0
    while checked < 200:
        d = int(rng.integers(1, 4))
        A_s = random_schur(rng, d, rng.uniform(0.05, 0.98))
        A_u = random_schur(rng, d, rng.uniform(1.01, 2.5))
        p = grid[int(rng.integers(len(grid)))]
        rho = second_moment_operator(A_s, A_u, p).spectral_radius
        if abs(rho - 1) <= 1e-3:
            continue
        checked += 1
        cert = find_certificate(A_s, A_u, p, 1e-8)
        agree += (cert is not None) == iid_stability_test(A_s, A_u, p)
        certified += cert is not None
    assert agree == checked, f"{checked - agree} disagreements"
    assert 0 < certified < checked
    return f"{agree}/{checked} agree ({certified} certified)"


@criterion("5 scalar expected cost: exact 6.451612903, Monte Carlo within 5%")
def test_c5_analytic_cost():
    start = time.perf_counter()
    exact = expected_cost_exact([[0.5]], [[1.2]], HALF, [1.0])
    assert abs(exact - 6.451612903) <= 1e-9
    plant = PlantModel(1, [[1.2]], [[1.0]], [[-0.7]])
    params = ScheduleParameters.from_lists([[1], [2]], [HALF, HALF])
    est = estimate_stochastic_stability(plant, params, [1.0], T=500, trials=10_000, seed=1)
    rel = abs(est.mean - exact) / exact
    assert rel < 0.05, rel
    assert time.perf_counter() - start < 10.0
    return f"exact {exact:.9f}, MC {est.mean:.4f} (rel err {rel:.2%})"


@criterion("6 exact schedules hit (500,500) on 50 seeds; iid passes chi-square at T=1e5")
def test_c6_schedule_exactness():
    params = ScheduleParameters.from_lists([[1], [2]], [HALF, HALF])
    for seed in range(50):
        assert generate_schedule_exact(params, 1000, seed).counts(2) == (500, 500), seed
    s = generate_schedule_iid(params, 100_000, 20240607)
    pvalue = scipy.stats.chisquare(s.counts(2), [50_000, 50_000]).pvalue
    assert pvalue > 1e-6, pvalue
    return f"chi-square p-value {pvalue:.3f}"


@pytest.fixture(scope="module")
def exp2_report(tmp_path_factory):
    start = time.perf_counter()
    rep = run_experiment2(N=20, M=10, h=Fraction(1, 10), seed=0, d=5, out=tmp_path_factory.mktemp("exp2"))
    return rep, time.perf_counter() - start


@criterion("7a scaled random network N=20 M=10 h=1/10 finishes in < 5 min with a consistent verdict")
def test_c7_scaled_experiment2(exp2_report):
    rep, elapsed = exp2_report
    assert elapsed < 300.0
    if rep.found:
        assert rep.certificates_verified and rep.partition_ok
        return f"success in {elapsed:.1f} s"
    # one of the two blocks has p <= 1/2; a plant there needs (1-p) rho(A)^2 < 1
    fits_half = sum(need < 0.5 for need in rep.min_required_p.values())
    assert fits_half < rep.M, "search reported failure although a feasible split may exist"
    return f"failure proven by necessary condition ({fits_half} of {rep.N} plants tolerate p <= 1/2), {elapsed:.1f} s"


@criterion("7b scaled random network completes schedule and simulate stages")
def test_c7_full_pipeline_stages(exp2_report):
    rep, elapsed = exp2_report
    assert elapsed < 300.0
    assert {"generate", "synthesize+search", "schedule", "simulate"} <= set(rep.stages), (
        f"pipeline stopped after {list(rep.stages)}: no feasible partition/probabilities"
    )
    assert rep.certificates_verified and rep.partition_ok
    return f"{elapsed:.1f} s"


@criterion("8 memoized search matches the naive nested-loop reference")
def test_c8_search_reference():
    rng = np.random.default_rng(7)
    compared = feasible = 0
    for h in (Fraction(1, 2), Fraction(1, 4)):
        for N, M in SHAPES:
            configs = [scalar_config(list(a), M) for a in product(VALUES, repeat=N)]
            for _ in range(10):
                plants = tuple(
                    PlantModel(i, rng.uniform(-1.5, 1.5, (2, 2)), [[0.0], [1.0]], rng.uniform(-1, 1, (1, 2)))
                    for i in range(1, N + 1)
                )
                configs.append(NcsConfig(plants, M))
            for cfg in configs:
                got = search_schedule_parameters(cfg, h)
                want = naive_feasible(cfg, h)
                assert (got is not None) == want
                if got is not None:
                    assert partition_covers_once(got.params, N)
                compared += 1
                feasible += want
    return f"{compared} configs, {feasible} feasible"
