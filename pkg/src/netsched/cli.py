"""Command-line front end.

Exit codes: 0 success, 2 infeasible or failed result, 1 usage or I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .certify import verify_certificate
from .config import ConfigError, RunConfig, SimulationOptions, SolverOptions, dumps, load_config, parse_rational, save_config
from .experiments import random_initial_states, run_experiment1, run_experiment2
from .model import ModelError, check_assumptions, closed_loop_matrix
from .presets import NAMES, preset
from .scheduler import frequency_table, generate_schedule, write_schedule_csv
from .search import BudgetExhausted, SynthesisRequired, search_schedule_parameters
from .sim import (
    cumulative_cost,
    estimate_stochastic_stability,
    simulate_ncs,
    tail_increment_ratio,
    write_cost_csv,
    write_trajectory_csv,
)
from .synthesis import synthesize_controllers

EXIT_OK, EXIT_USAGE, EXIT_INFEASIBLE = 0, 1, 2

log = logging.getLogger("netsched")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _threads(args) -> int:
    if args.threads is not None:
        return args.threads
    env = os.environ.get("NETSCHED_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise UsageError(f"NETSCHED_THREADS must be an integer, got {env!r}") from None
    return 1


def _run_config(args) -> RunConfig:
    if args.config and args.preset:
        raise UsageError("give either --config or --preset, not both")
    if args.preset:
        pre = preset(args.preset)
        if pre.M is None:
            raise UsageError(f"preset {args.preset!r} is a single plant; use 'experiment1'")
        run = RunConfig(ncs=pre.config, params=pre.params, certificates=pre.certificates, Y=pre.Y)
    elif args.config:
        run = load_config(args.config)
    else:
        raise UsageError("a --config file or --preset is required")
    solver = SolverOptions(
        kappa=args.kappa if args.kappa is not None else run.solver.kappa,
        h=parse_rational(args.h, "--h") if args.h is not None else run.solver.h,
    )
    sim = SimulationOptions(
        horizon=args.horizon if args.horizon is not None else run.simulation.horizon,
        trials=args.trials if args.trials is not None else run.simulation.trials,
        seed=args.seed if args.seed is not None else run.simulation.seed,
    )
    return run.replace(solver=solver, simulation=sim)


def _out_dir(args, run=None) -> Path:
    out = Path(args.out or (run.output if run and run.output else "out"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_check(args) -> int:
    run = _run_config(args)
    report = check_assumptions(run.ncs)
    for f in report.plants:
        print(
            f"plant {f.index}: open-loop unstable={f.open_loop_unstable} "
            f"closed-loop stable={f.closed_loop_stable} controllable={f.controllable}"
        )
    print(f"N % M == 0: {report.divisible}")
    for line in report.failures():
        print(f"FAIL {line}")
    print("assumptions: " + ("pass" if report.passed else "fail"))
    return EXIT_OK if report.passed else EXIT_INFEASIBLE


def cmd_verify(args) -> int:
    run = _run_config(args)
    if not run.certificates:
        raise UsageError("config has no certificates to verify")
    ok = True
    for i in sorted(run.certificates):
        plant = run.ncs.plant(i)
        cert = run.certificates[i]
        if run.params is not None and run.params.probability_of(i) != cert.p:
            print(f"plant {i}: certificate p={cert.p} differs from schedule p={run.params.probability_of(i)}")
        A_s = closed_loop_matrix(plant)
        result = verify_certificate(A_s, plant.A, cert, band=args.band)
        ok &= result.ok
        margins = result.residuals.margins if result.residuals is not None else (float("nan"),) * 2
        print(f"plant {i}: {'verified' if result else 'REJECTED'} "
              f"(lambda_max R_s={margins[0]:.6g}, R_u={margins[1]:.6g})")
        for line in result.diagnostics:
            print(f"  {line}")
    return EXIT_OK if ok else EXIT_INFEASIBLE


def cmd_synth(args) -> int:
    run = _run_config(args)
    if run.params is None:
        raise UsageError("synth needs schedule parameters (partition and probabilities) in the config")
    result = synthesize_controllers(run.ncs, run.params, run.solver.kappa, threads=_threads(args))
    for r in result.plants:
        if r.ok:
            print(f"plant {r.index}: p={r.p} K={np.array2string(r.K, precision=6)}")
        else:
            print(f"plant {r.index}: p={r.p} failed ({r.reason})")
    out = _out_dir(args, run)
    designed = run.replace(
        ncs=result.apply(run.ncs),
        certificates=result.certificates,
        Y={r.index: r.Y for r in result.plants if r.ok},
    )
    save_config(designed, out / "synthesis.json")
    print(f"wrote {out / 'synthesis.json'}")
    return EXIT_OK if result.ok else EXIT_INFEASIBLE


def cmd_search(args) -> int:
    run = _run_config(args)
    try:
        found = search_schedule_parameters(
            run.ncs, run.solver.h, run.solver.kappa, budget=args.budget, threads=_threads(args)
        )
    except BudgetExhausted:
        print("search: budget exhausted before the grid was exhausted")
        return EXIT_INFEASIBLE
    if found is None:
        print(f"search: no partition/probabilities on grid h={run.solver.h} certify every plant; report a failure")
        return EXIT_INFEASIBLE
    print(f"partition: {found.partition.as_lists()}")
    print(f"probabilities: {found.probabilities.as_strings()}")
    out = _out_dir(args, run)
    save_config(run.replace(params=found.params, certificates=found.certificates, Y={}), out / "search.json")
    print(f"wrote {out / 'search.json'}")
    return EXIT_OK


def cmd_schedule(args) -> int:
    run = _run_config(args)
    if run.params is None:
        raise UsageError("schedule needs schedule parameters in the config")
    T, seed = run.simulation.horizon, run.simulation.seed
    schedule = generate_schedule(run.params, T, seed, args.mode)
    table = frequency_table(run.params.probabilities, T)
    out = _out_dir(args, run)
    write_schedule_csv(out / "schedule.csv", schedule, run.params)
    print(f"mode={args.mode} T={T} seed={seed}")
    print(f"target counts: {list(table.counts)}  realized: {list(schedule.counts(run.params.v))}")
    print(f"wrote {out / 'schedule.csv'}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    run = _run_config(args)
    if run.params is None:
        raise UsageError("simulate needs schedule parameters in the config")
    T, seed, trials = run.simulation.horizon, run.simulation.seed, run.simulation.trials
    schedule = generate_schedule(run.params, T, seed, args.mode)
    x0s = random_initial_states(run.ncs, seed, 0)
    trajs = simulate_ncs(run.ncs, schedule, run.params, x0s)
    out = _out_dir(args, run)
    ordered = [trajs[i] for i in sorted(trajs)]
    write_trajectory_csv(out / "trajectories.csv", ordered)
    write_cost_csv(out / "costs.csv", ordered)
    summary = {}
    diverged = False
    for plant in run.ncs.plants:
        est = estimate_stochastic_stability(
            plant, run.params, x0s[plant.index], T, trials, seed, threads=_threads(args)
        )
        tail = tail_increment_ratio(cumulative_cost(trajs[plant.index]))
        diverged |= est.diverged
        summary[plant.index] = {
            "trajectory_cost": float(cumulative_cost(trajs[plant.index])[-1]),
            "trajectory_tail_ratio": tail,
            "mc_mean": est.mean,
            "mc_stderr": est.stderr,
            "mc_tail_ratio": est.tail_ratio,
            "diverged": est.diverged,
        }
        print(f"plant {plant.index}: cost={summary[plant.index]['trajectory_cost']:.6g} tail={tail:.3g} "
              f"MC mean={est.mean:.6g} +/- {est.stderr:.3g} diverged={est.diverged}")
    (out / "montecarlo.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(f"wrote {out}/trajectories.csv, costs.csv, montecarlo.json")
    return EXIT_INFEASIBLE if diverged else EXIT_OK


def cmd_demo(args) -> int:
    out = Path(args.out or "out/exp1")
    out.mkdir(parents=True, exist_ok=True)
    seed = args.seed if args.seed is not None else 1
    rep = run_experiment1(
        seed=seed,
        out=out,
        T=args.horizon or 1000,
        kappa=args.kappa if args.kappa is not None else 1e-8,
        mc_trials=args.trials if args.trials is not None else 1000,
        plot=args.plot,
    )
    print(f"assumptions: {'pass' if rep.assumptions_ok else 'fail'}")
    for i in sorted(rep.reference_verified):
        print(f"plant {i}: reference certificate {'verified' if rep.reference_verified[i] else 'REJECTED'} "
              f"(max residual gap {rep.reference_residual_gap[i]:.3g})")
    for i, K in sorted(rep.gains.items()):
        print(f"plant {i}: synthesized K={np.array2string(np.array(K), precision=6)} "
              f"certificate {'verified' if rep.synthesized_verified.get(i) else 'REJECTED'}")
    for i, reason in rep.synthesis_failures.items():
        print(f"plant {i}: synthesis failed ({reason})")
    for i, tails in sorted(rep.tail_ratios.items()):
        print(f"plant {i}: {len(tails)} runs, max tail-increment ratio {max(tails):.3g}")
    print(f"wrote results to {out} ({rep.seconds:.1f} s)")
    return EXIT_OK if rep.ok else EXIT_INFEASIBLE


def cmd_bench(args) -> int:
    h = parse_rational(args.h, "--h") if args.h is not None else Fraction(1, 10)
    out = Path(args.out or f"out/exp2_n{args.n}_m{args.m}")
    try:
        rep = run_experiment2(
            N=args.n, M=args.m, h=h, seed=args.seed if args.seed is not None else 0, d=args.d,
            T=args.horizon or 1000, kappa=args.kappa if args.kappa is not None else 1e-8,
            budget=args.budget, threads=_threads(args), out=out,
        )
    except BudgetExhausted:
        print("bench: budget exhausted")
        return EXIT_INFEASIBLE
    for stage, sec in rep.stages.items():
        print(f"{stage}: {sec:.3f} s")
    print(f"wall time: {rep.seconds:.3f} s")
    if not rep.found:
        need = min(rep.min_required_p.values())
        print(f"no feasible candidate on grid h={h}: report a failure "
              f"(the least demanding plant already needs p > {need:.3f} in its block)")
        return EXIT_INFEASIBLE
    print(f"partition sizes: {[len(b) for b in rep.params.partition.blocks]}, "
          f"probabilities: {rep.params.probabilities.as_strings()}")
    print(f"certificates verified: {rep.certificates_verified}, partition covers each plant once: {rep.partition_ok}, "
          f"schedule counts: {list(rep.schedule_counts)}, max tail ratio: {rep.max_tail_ratio:.3g}")
    return EXIT_OK if rep.certificates_verified and rep.partition_ok else EXIT_INFEASIBLE


def cmd_preset(args) -> int:
    pre = preset(args.name)
    if pre.M is None:
        raise UsageError(f"preset {args.name!r} is a single plant and cannot be written as a network config")
    run = RunConfig(ncs=pre.config, params=pre.params, certificates=pre.certificates, Y=pre.Y)
    if args.out:
        save_config(run, args.out)
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(dumps(run))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--preset", choices=["experiment1"], help="use a built-in configuration")
    common.add_argument("--seed", type=int)
    common.add_argument("--horizon", type=int, help="schedule / simulation horizon T")
    common.add_argument("--trials", type=int, help="Monte Carlo trials")
    common.add_argument("--h", help="probability grid step as a rational, e.g. 1/1000")
    common.add_argument("--kappa", type=float, help="certificate band lower bound")
    common.add_argument("--mode", choices=["iid", "exact"], default="exact", help="schedule generator")
    common.add_argument("--threads", type=int, help="worker threads (fallback: NETSCHED_THREADS)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--plot", action="store_true", help="also write SVG plots of |x(t)|^2")
    common.add_argument("--budget", type=float, help="search wall-clock budget in seconds")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="netsched", description="Probabilistic scheduling for shared-network control loops.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("check", parents=[common], help="check plant and network assumptions")
    p.set_defaults(func=cmd_check)
    p = sub.add_parser("verify", parents=[common], help="verify stability certificates in a config")
    p.add_argument("--band", choices=["scaled", "strict"], default="scaled")
    p.set_defaults(func=cmd_verify)
    p = sub.add_parser("synth", parents=[common], help="design state-feedback gains")
    p.set_defaults(func=cmd_synth)
    p = sub.add_parser("search", parents=[common], help="search partitions and probabilities")
    p.set_defaults(func=cmd_search)
    p = sub.add_parser("schedule", parents=[common], help="generate a schedule CSV")
    p.set_defaults(func=cmd_schedule)
    p = sub.add_parser("simulate", parents=[common], help="simulate trajectories and Monte Carlo costs")
    p.set_defaults(func=cmd_simulate)
    p = sub.add_parser("demo", parents=[common], help="run a full demonstration pipeline")
    p.add_argument("name", choices=["exp1"])
    p.set_defaults(func=cmd_demo)
    p = sub.add_parser("bench", parents=[common], help="random-network scalability pipeline")
    p.add_argument("name", choices=["exp2"])
    p.add_argument("--n", type=int, default=20, help="number of plants")
    p.add_argument("--m", type=int, default=10, help="network capacity")
    p.add_argument("--d", type=int, default=5, help="state dimension")
    p.set_defaults(func=cmd_bench)
    p = sub.add_parser("preset", help="print or save a built-in configuration")
    p.add_argument("name", choices=NAMES)
    p.add_argument("--out")
    p.set_defaults(func=cmd_preset, verbose=False)
    return parser


def run_command(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
        if getattr(args, "threads", None) is not None and args.threads < 1:
            raise UsageError("--threads must be >= 1")
        return args.func(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, ModelError, SynthesisRequired, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def main() -> None:
    sys.exit(run_command())
