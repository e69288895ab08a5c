#!/usr/bin/env python3
"""Run the algorithm comparison plus both ablations and print a summary.

Results land under --out as:
  compare/<algo>/seed_<n>/{metrics.csv,summary.json[,scatter.csv]}
  ablate_reward/{report.json,curves.csv,<arm>/seed_<n>/...}
  ablate_loop/{report.json,curves.csv,<arm>/seed_<n>/...}
"""
import argparse
import statistics
import time
from pathlib import Path

from rnadesign.harness import ExperimentConfig, run_ablation_loop, run_ablation_reward, run_experiment


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--out", default="runs")
    p.add_argument("--len", type=int, default=20)
    p.add_argument("--budget", type=int, default=30_000)
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--skip-ablations", action="store_true")
    args = p.parse_args()

    out = Path(args.out)
    seeds = list(range(args.seeds))
    base = ExperimentConfig(length=args.len, budget=args.budget, seeds=seeds, workers=args.workers)
    t0 = time.perf_counter()

    print(f"L={args.len} budget={args.budget} seeds={seeds}")
    for algo in ("greedy", "dqn", "ppo"):
        runs = run_experiment(base.with_(algo=algo, out=str(out / "compare" / algo)))
        finals = [m.best_fitness for m in runs]
        print(f"  {algo:7s} median {statistics.median(finals):5.1f}  per seed {finals}")

    if not args.skip_ablations:
        for name, algo, fn in (("ablate_reward", "dqn", run_ablation_reward),
                               ("ablate_loop", "ppo", run_ablation_loop)):
            rep = fn(base.with_(algo=algo, out=str(out / name)))
            arms = "  ".join(f"{a['label']}: {a['median_final_best']}" for a in rep["arms"].values())
            print(f"  {name}: {arms}")
    print(f"done in {time.perf_counter() - t0:.0f}s; results in {out}/")


if __name__ == "__main__":
    main()
