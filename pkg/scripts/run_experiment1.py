#!/usr/bin/env python3
"""Two benchmark plants on a one-slot network: certificates, synthesis, search, 10x10 simulations."""

import argparse
import json
import logging
from pathlib import Path

from netsched.experiments import run_experiment1


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--horizon", type=int, default=1000)
    ap.add_argument("--trials", type=int, default=1000, help="Monte Carlo trials per plant")
    ap.add_argument("--out", default="out/exp1")
    ap.add_argument("--plot", action="store_true")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    rep = run_experiment1(seed=args.seed, out=Path(args.out), T=args.horizon, mc_trials=args.trials, plot=args.plot)
    for i, tails in sorted(rep.tail_ratios.items()):
        mc = rep.monte_carlo.get(i, {})
        print(f"plant {i}: max tail ratio {max(tails):.2e}, MC cost {json.dumps(mc)}")
    print("ok" if rep.ok else "FAILED", f"({rep.seconds:.1f} s)")
    return 0 if rep.ok else 2


if __name__ == "__main__":
    raise SystemExit(main())
