#!/usr/bin/env python3
"""GINO-Q vs WIBQ vs random on the AoI and patrol configs (learning-curve mean reward)."""

import argparse
import csv

from ginoq.cli import output_root, parse_seeds
from ginoq.experiments import compare_on, load_experiment, shipped_configs


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--configs", nargs="*", default=None)
    ap.add_argument("--seeds", type=parse_seeds, default=parse_seeds("20"))
    ap.add_argument("--horizon", type=int, default=None, help="training steps (config default)")
    ap.add_argument("--out", default=None)
    args = ap.parse_args()
    names = args.configs or [p.stem for p in shipped_configs() if p.stem.startswith(("aoi_", "patrol_"))]
    out = output_root(args.out) / "family-comparison"
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "comparison.csv", "w", newline="") as fh:
        fh.write("# schema: ginoq.family_comparison/1\n")
        w = csv.writer(fh)
        w.writerow(["config", "algo", "mean", "stderr", "n_seeds", "upper_bound"])
        for name in names:
            c = compare_on(load_experiment(name), args.seeds, args.horizon)
            for algo in c.scores:
                w.writerow([name, algo, repr(c.mean(algo)), repr(c.stderr(algo)), len(args.seeds),
                            repr(c.upper_bound)])
            print(f"{name:14s} " + "  ".join(f"{a} {c.mean(a):9.3f}+-{c.stderr(a):.3f}" for a in c.scores)
                  + f"  bound {c.upper_bound:.3f}")
    print(f"outputs in {out}")


if __name__ == "__main__":
    main()
