#!/usr/bin/env python3
"""How often can a random plant tolerate a low access probability?

A plant whose block is active with probability p needs (1-p) rho(A)^2 < 1,
whatever gain it uses. This prints the distribution of the smallest
admissible p for the generator's plants, and how many of N plants could sit
in a block with p <= 1/v.
"""

import argparse

import numpy as np

from netsched.model import generate_random_ncs, spectral_radius


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--d", type=int, default=5)
    ap.add_argument("--n", type=int, default=20)
    ap.add_argument("--m", type=int, default=10)
    ap.add_argument("--seeds", type=int, default=200)
    args = ap.parse_args()

    v = args.n // args.m
    need, fits = [], []
    for seed in range(args.seeds):
        cfg = generate_random_ncs(args.n, args.d, seed, M=args.m)
        req = [1.0 - 1.0 / spectral_radius(p.A) ** 2 for p in cfg.plants]
        need.extend(req)
        fits.append(sum(r < 1.0 / v for r in req))
    need = np.array(need)
    print(f"d={args.d}: smallest admissible p over {need.size} plants")
    for q in (0, 1, 5, 50, 95):
        print(f"  {q:3d}th percentile: {np.percentile(need, q):.3f}")
    print(f"plants per network tolerating p <= 1/{v}: max {max(fits)}, needed {args.m} to fill one block")


if __name__ == "__main__":
    main()
