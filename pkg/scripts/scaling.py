#!/usr/bin/env python3
"""Per-step GINO-Q cost and table size as the number of arms grows (one class)."""

import argparse
import time

from ginoq.experiments import build_nonindexable_instance
from ginoq.learner import GinoQConfig, train


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--arms", type=int, nargs="*", default=[10, 30, 100, 300, 1000])
    ap.add_argument("--horizon", type=int, default=20_000)
    args = ap.parse_args()
    cfg = GinoQConfig(eval_interval=0, eval_horizon=0)
    base = None
    for M in args.arms:
        inst = build_nonindexable_instance(M, int(0.7 * M))
        train(inst, 200, cfg)
        t0 = time.perf_counter()
        res = train(inst, args.horizon, cfg)
        per = (time.perf_counter() - t0) / args.horizon
        base = base or per / M
        print(f"M={M:5d}  {per * 1e6:9.2f} us/step  {per / M / base:5.2f}x per arm  "
              f"table bytes {res.state.Q.nbytes + res.state.D.nbytes}")


if __name__ == "__main__":
    main()
