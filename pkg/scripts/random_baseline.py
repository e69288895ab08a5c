#!/usr/bin/env python3
"""Fitness distribution of uniformly random sequences (the no-learning reference)."""
import argparse

import numpy as np

from rnadesign.harness import random_fitness_sample


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--len", type=int, default=20)
    p.add_argument("-n", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()
    f = random_fitness_sample(args.len, args.n, args.seed)
    q = np.percentile(f, [5, 25, 50, 75, 95])
    print(f"L={args.len} n={args.n}: mean {f.mean():.2f} median {q[2]:.1f} best {f.max():.1f}")
    print("percentiles 5/25/50/75/95:", " ".join(f"{v:.1f}" for v in q))


if __name__ == "__main__":
    main()
