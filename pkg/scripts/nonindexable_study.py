#!/usr/bin/env python3
"""Learners on the non-indexable arm: WIBQ state-1 basins, GINO-Q index ordering, normalized reward.

Writes wibq_state1.csv, gino_indices.csv and normalized_gap.csv to --out.
"""

import argparse
import csv
from pathlib import Path

import numpy as np

from ginoq.baselines import WibqConfig, wibq_train
from ginoq.cli import output_root, parse_seeds
from ginoq.env import RandomPolicy, evaluate_policy
from ginoq.experiments import load_experiment
from ginoq.learner import GinoQConfig, train
from ginoq.planner import relaxed_upper_bound
from ginoq.policy import IndexPolicy


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=parse_seeds, default=parse_seeds("20"))
    ap.add_argument("--wibq-horizon", type=int, default=1_000_000)
    ap.add_argument("--gino-horizon", type=int, default=500_000)
    ap.add_argument("--large-horizon", type=int, default=200_000)
    ap.add_argument("--out", default=None)
    args = ap.parse_args()
    out = output_root(args.out) / "nonindexable-study"
    out.mkdir(parents=True, exist_ok=True)

    small = load_experiment("nonindexable_10_7").instance
    quiet = dict(eval_interval=0, eval_horizon=0)
    with open(out / "wibq_state1.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["seed"] + [f"W[{s}]" for s in range(1, 7)])
        for s in args.seeds:
            v = wibq_train(small, args.wibq_horizon, WibqConfig(**quiet), seed=s).table.values[0]
            w.writerow([s] + [repr(float(x)) for x in v])
            print(f"wibq seed {s:2d}: state-1 index {v[0]:+.3f}")

    with open(out / "gino_indices.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["seed", "lambda"] + [f"W[{s}]" for s in range(1, 7)])
        for s in args.seeds:
            r = train(small, args.gino_horizon, GinoQConfig(**quiet), seed=s)
            w.writerow([s, repr(r.lam)] + [repr(float(x)) for x in r.table.values[0]])
            print(f"gino seed {s:2d}: lambda {r.lam:+.3f} W {np.round(r.table.values[0], 2)}")

    big = load_experiment("nonindexable_100_70").instance
    ub = relaxed_upper_bound(big).value
    rand = evaluate_policy(big, lambda s: RandomPolicy(big, s), 5_000, args.seeds)
    with open(out / "normalized_gap.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["seed", "gino_reward", "random_reward", "upper_bound", "normalized"])
        for s, rr in zip(args.seeds, rand.per_seed):
            tab = train(big, args.large_horizon, GinoQConfig(**quiet), seed=s).table
            g = evaluate_policy(big, IndexPolicy(tab, big), 5_000, [s]).mean
            w.writerow([s, repr(g), repr(float(rr)), repr(ub), repr((g - rand.mean) / (ub - rand.mean))])
    print(f"outputs in {out}")


if __name__ == "__main__":
    main()
