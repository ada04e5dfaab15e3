#!/usr/bin/env python3
"""Random unstable plants: generate, synthesize/search, schedule, simulate; prints stage timings."""

import argparse
import json
import logging
from fractions import Fraction
from pathlib import Path

from netsched.experiments import run_experiment2


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=20)
    ap.add_argument("--m", type=int, default=10)
    ap.add_argument("--d", type=int, default=5)
    ap.add_argument("--h", default="1/10")
    ap.add_argument("--seeds", type=int, nargs="+", default=[0])
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--out", default="out/exp2")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    rows = []
    for seed in args.seeds:
        rep = run_experiment2(
            N=args.n, M=args.m, h=Fraction(args.h), seed=seed, d=args.d,
            threads=args.threads, out=Path(args.out) / f"seed{seed}",
        )
        s = rep.summary()
        rows.append(s)
        print(json.dumps({k: s[k] for k in ("N", "M", "h", "seed", "result", "seconds")}))
    return 0 if all(r["result"] == "success" for r in rows) else 2


if __name__ == "__main__":
    raise SystemExit(main())
