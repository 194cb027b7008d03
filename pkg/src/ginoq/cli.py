"""Command line entry point: plan, train, eval, certify.

Every invocation gets a fresh run directory under the output root
(``--out``, else ``$GINOQ_OUT``, else ``./runs``) and appends one line to
``<root>/manifest.jsonl``. Nothing already on disk is overwritten.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .arms import InvalidModelError
from .baselines import WibqConfig, random_policy, wibq_train
from .config import ConfigError
from .env import evaluate_policy, summarize
from .experiments import load_experiment
from .learner import GinoQConfig, train, write_diagnostics
from .planner import (PlannerError, dual_curve, gain_indices, relaxed_upper_bound, whittle_indices,
                      whittle_table)
from .policy import IndexPolicy, IndexTable

OUT_ENV = "GINOQ_OUT"
ALGOS = ("gino-q", "wibq")
NAMED_POLICIES = ("random", "gain", "whittle") + ALGOS
DEFAULT_TRAIN_HORIZON = 100_000
DEFAULT_EVAL_HORIZON = 2_000
DEFAULT_SEEDS = 20

log = logging.getLogger("ginoq")


@dataclass
class RunManifest:
    experiment_id: str
    config_hash: str
    config_path: str
    command: str
    seeds: list
    algorithms: list
    horizon: int
    output_dir: str
    started: str
    finished: str = None
    extra: dict = field(default_factory=dict)

    def write(self, run_dir):
        (run_dir / "manifest.json").write_text(json.dumps(asdict(self), indent=2) + "\n")

    def append_to(self, root):
        with open(root / "manifest.jsonl", "a") as fh:
            fh.write(json.dumps(asdict(self)) + "\n")


def _now():
    return time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime())


def output_root(arg=None):
    return Path(arg or os.environ.get(OUT_ENV) or "runs")


def new_run_dir(root, experiment_id, command, config_hash):
    base = root / experiment_id / f"{command}-{config_hash[:10]}-{time.strftime('%Y%m%dT%H%M%S', time.gmtime())}"
    path, n = base, 1
    while True:
        try:
            path.mkdir(parents=True)
            return path
        except FileExistsError:
            n += 1
            path = base.with_name(f"{base.name}.{n}")


def parse_seeds(text, default=DEFAULT_SEEDS):
    """'20' -> 0..19; '3,5,9' -> those; '10-14' -> 10..14."""
    if text is None:
        text = str(default)
    text = str(text).strip()
    try:
        if "," in text:
            seeds = [int(s) for s in text.split(",") if s.strip()]
        elif "-" in text.lstrip("-"):
            a, b = text.split("-", 1)
            seeds = list(range(int(a), int(b) + 1))
        else:
            seeds = list(range(int(text)))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad seed list {text!r}") from None
    if not seeds or any(s < 0 for s in seeds):
        raise argparse.ArgumentTypeError(f"bad seed list {text!r}")
    return seeds


def _schema_csv(path, schema, header, rows):
    with open(path, "w", newline="") as fh:
        fh.write(f"# schema: {schema}\n")
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _fmt(x):
    return repr(float(x))


# -- workers (top level so they pickle) ------------------------------------------------------


def _train_config(cfg, algo):
    if algo == "gino-q":
        return GinoQConfig.from_dict(cfg.training)
    return WibqConfig.from_dict(cfg.wibq)


def _train_horizon(cfg, algo, override):
    if override:
        return int(override)
    section = cfg.training if algo == "gino-q" else cfg.wibq
    return int(section.get("horizon", cfg.evaluation.get("train_horizon", DEFAULT_TRAIN_HORIZON)))


def train_one(config_path, algo, seed, horizon=None):
    cfg = load_experiment(config_path)
    T = _train_horizon(cfg, algo, horizon)
    if algo == "gino-q":
        return train(cfg.instance, T, _train_config(cfg, algo), seed=seed, initial=cfg.initial)
    return wibq_train(cfg.instance, T, _train_config(cfg, algo), seed=seed, initial=cfg.initial)


def _policy_for(cfg, name, seed, train_horizon, cache):
    inst = cfg.instance
    if name == "random":
        return random_policy(inst, seed)
    if name == "gain":
        if "gain" not in cache:
            cache["gain"] = gain_indices(inst)
        return IndexPolicy(cache["gain"], inst)
    if name == "whittle":
        if "whittle" not in cache:
            certs = [whittle_indices(m) for m in inst.models]
            bad = [c.model_name for c in certs if not c.indexable]
            if bad:
                raise PlannerError(f"no Whittle index policy: classes {bad} are not indexable")
            cache["whittle"] = whittle_table(inst, certs)
        return IndexPolicy(cache["whittle"], inst)
    if name in ALGOS:
        return IndexPolicy(train_one(cfg.source, name, seed, train_horizon).table, inst)
    return IndexPolicy(IndexTable.load(name), inst)


def eval_one(config_path, name, seed, horizon, train_horizon=None):
    cfg = load_experiment(config_path)
    pol = _policy_for(cfg, name, seed, train_horizon, {})
    return evaluate_policy(cfg.instance, pol, horizon, [seed], cfg.initial).mean


def _map(fn, args, jobs):
    if jobs <= 1:
        return [fn(*a) for a in args]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        futs = [ex.submit(fn, *a) for a in args]
        return [f.result() for f in futs]


# -- commands ---------------------------------------------------------------------------------


def _certificates(instance, grid, lam_range):
    return [whittle_indices(m, lam_range, grid) for m in instance.models]


def cmd_plan(args, cfg, run_dir):
    inst = cfg.instance
    curve = dual_curve(inst, args.lambda_range, args.grid)
    ub = relaxed_upper_bound(inst, curve)
    gains = gain_indices(inst, curve=curve)
    certs = _certificates(inst, args.grid, args.lambda_range)

    _schema_csv(run_dir / "dual_curve.csv", "ginoq.dual_curve/1", ["lambda", "f", "fprime"],
                [[_fmt(l), _fmt(f), _fmt(d)] for l, f, d in zip(curve.lambdas, curve.f, curve.fprime)])
    rows = []
    for c in certs:
        for lbl, zs in zip(c.labels, c.zeros):
            rows += [[c.model_name, lbl, _fmt(z.lam), z.kind] for z in zs]
    _schema_csv(run_dir / "crossings.csv", "ginoq.crossings/1", ["class", "state", "lambda", "kind"], rows)
    gains.save(run_dir / "index_gain.json")
    if all(c.indexable for c in certs):
        whittle_table(inst, certs).save(run_dir / "index_whittle.json")
    for c in certs:
        (run_dir / f"certificate_{c.model_name}.json").write_text(json.dumps(c.to_dict(), indent=2) + "\n")
    summary = {
        "schema": "ginoq.plan/1",
        "experiment": cfg.id,
        "config_hash": cfg.config_hash,
        "bracket": list(curve.bracket),
        "lambda_star": curve.lambda_star,
        "flat_interval": list(curve.flat_interval),
        "breakpoints": [float(b) for b in curve.breakpoints],
        "upper_bound": ub.to_dict(),
        "indexable": {c.model_name: c.indexable for c in certs},
    }
    (run_dir / "plan.json").write_text(json.dumps(summary, indent=2) + "\n")

    print(f"lambda* = {curve.lambda_star:.6g}   flat interval = "
          f"({curve.flat_interval[0]:.6g}, {curve.flat_interval[1]:.6g})")
    print(f"relaxed upper bound = {ub.value:.6g} per step")
    for name, lbls, vals in zip(gains.names, gains.labels, gains.values):
        print(f"gain index [{name}]: " + "  ".join(f"{l}:{v:.4g}" for l, v in zip(lbls, vals)))
    for c in certs:
        print(c)
    return {"lambda_star": curve.lambda_star, "upper_bound": ub.value}


def cmd_certify(args, cfg, run_dir):
    certs = _certificates(cfg.instance, args.grid, args.lambda_range)
    docs = [c.to_dict() for c in certs]
    for c, d in zip(certs, docs):
        (run_dir / f"certificate_{c.model_name}.json").write_text(json.dumps(d, indent=2) + "\n")
    if args.json:
        print(json.dumps(docs if len(docs) > 1 else docs[0], indent=2))
    else:
        for c in certs:
            print(c)
    return {"indexable": all(c.indexable for c in certs)}


def cmd_train(args, cfg, run_dir):
    algos = args.algo
    results = {}
    for algo in algos:
        T = _train_horizon(cfg, algo, args.horizon)
        log.info("training %s on %s for %d steps, seeds %s", algo, cfg.id, T, args.seeds)
        runs = _map(train_one, [(cfg.source, algo, s, T) for s in args.seeds], args.jobs)
        for seed, res in zip(args.seeds, runs):
            write_diagnostics(run_dir / f"diagnostics_{algo}_seed{seed}.csv", res)
            res.table.save(run_dir / f"table_{algo}_seed{seed}.json")
        results[algo] = runs

    rows = []
    for algo, runs in results.items():
        ts = [d.t for d in runs[0].diagnostics]
        for j, t in enumerate(ts):
            s = summarize([r.diagnostics[j].eval_reward for r in runs])
            rows.append([algo, t, _fmt(s.mean), _fmt(s.stderr), s.n_seeds])
    _schema_csv(run_dir / "summary.csv", "ginoq.train_summary/1",
                ["algo", "t", "mean_eval_reward", "stderr", "n_seeds"], rows)

    for algo, runs in results.items():
        final = summarize([r.diagnostics[-1].eval_reward for r in runs])
        curve = summarize([np.mean([d.eval_reward for d in r.diagnostics[1:]]) for r in runs])
        print(f"{algo:7s} final eval reward {final.mean:.4f} +- {final.stderr:.4f}   "
              f"curve mean {curve.mean:.4f} +- {curve.stderr:.4f}   ({final.n_seeds} seeds)")
    return {"algorithms": list(results)}


def cmd_eval(args, cfg, run_dir):
    inst = cfg.instance
    H = args.horizon or int(cfg.evaluation.get("horizon", DEFAULT_EVAL_HORIZON))
    ub = relaxed_upper_bound(inst).value
    per_seed = {}
    for name in args.policies:
        jobs = [(cfg.source, name, s, H, None) for s in args.seeds]
        per_seed[name] = _map(eval_one, jobs, args.jobs)
    rows, seed_rows = [], []
    for name, vals in per_seed.items():
        s = summarize(vals, H)
        rows.append([name, _fmt(s.mean), _fmt(s.stderr), _fmt(s.ci_low), _fmt(s.ci_high),
                     s.n_seeds, H, _fmt(ub)])
        seed_rows += [[name, seed, _fmt(v)] for seed, v in zip(args.seeds, vals)]
        print(f"{name:24s} {s.mean:12.4f} +- {s.stderr:.4f}   (upper bound {ub:.4f})")
    _schema_csv(run_dir / "comparison.csv", "ginoq.comparison/1",
                ["policy", "mean_reward", "stderr", "ci_low", "ci_high", "n_seeds", "horizon",
                 "upper_bound"], rows)
    _schema_csv(run_dir / "per_seed.csv", "ginoq.per_seed/1", ["policy", "seed", "mean_reward"], seed_rows)
    return {"policies": list(per_seed), "upper_bound": ub}


COMMANDS = {"plan": cmd_plan, "train": cmd_train, "eval": cmd_eval, "certify": cmd_certify}


def _algo_list(text):
    algos = [a.strip() for a in text.split(",") if a.strip()]
    bad = [a for a in algos if a not in ALGOS]
    if bad or not algos:
        raise argparse.ArgumentTypeError(f"unknown algorithm(s) {bad}; choose from {ALGOS}")
    return algos


def build_parser():
    p = argparse.ArgumentParser(prog="ginoq", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", required=True, help="config path or shipped config name")
        sp.add_argument("--out", default=None, help=f"output root (default ${OUT_ENV} or ./runs)")

    def planner_flags(sp):
        sp.add_argument("--grid", type=float, default=0.05, help="lambda grid resolution")
        sp.add_argument("--lambda-range", type=float, nargs=2, metavar=("LO", "HI"), default=None)

    sp = sub.add_parser("plan", help="dual curve, lambda*, index tables, upper bound, certificates")
    common(sp)
    planner_flags(sp)

    sp = sub.add_parser("certify", help="indexability certificate for every arm class")
    common(sp)
    planner_flags(sp)
    sp.add_argument("--json", action="store_true", help="print the machine-readable form")

    for name, helptext in (("train", "learn index tables"), ("eval", "compare policies")):
        sp = sub.add_parser(name, help=helptext)
        common(sp)
        sp.add_argument("--seeds", type=parse_seeds, default=None, help="N, a,b,c or lo-hi")
        sp.add_argument("--horizon", type=int, default=None)
        sp.add_argument("--jobs", type=int, default=1)
        if name == "train":
            sp.add_argument("--algo", type=_algo_list, default=["gino-q"], help="gino-q, wibq or both")
        else:
            sp.add_argument("policies", nargs="*",
                            help=f"policy names {NAMED_POLICIES} or index-table JSON paths")
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.command == "eval" and not args.policies:
        parser.error("eval needs at least one policy name or index-table path")
    if getattr(args, "horizon", None) is not None and args.horizon < 1:
        parser.error("--horizon must be positive")
    if getattr(args, "jobs", 1) < 1:
        parser.error("--jobs must be positive")

    try:
        cfg = load_experiment(args.config)
    except (ConfigError, InvalidModelError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if getattr(args, "seeds", 0) is None:
        args.seeds = parse_seeds(None, int(cfg.evaluation.get("seeds", DEFAULT_SEEDS)))
    if args.command == "eval":
        for name in args.policies:
            if name not in NAMED_POLICIES and not Path(name).exists():
                parser.error(f"unknown policy {name!r}: not a policy name or an existing file")

    root = output_root(args.out)
    run_dir = new_run_dir(root, cfg.id, args.command, cfg.config_hash)
    manifest = RunManifest(
        experiment_id=cfg.id, config_hash=cfg.config_hash, config_path=cfg.source,
        command=args.command, seeds=list(getattr(args, "seeds", []) or []),
        algorithms=list(getattr(args, "algo", None) or getattr(args, "policies", None) or []),
        horizon=int(getattr(args, "horizon", None) or 0), output_dir=str(run_dir), started=_now())
    manifest.write(run_dir)  # hash on disk before any computation
    try:
        manifest.extra = COMMANDS[args.command](args, cfg, run_dir) or {}
    except (PlannerError, KeyError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        manifest.extra = {"error": str(exc)}
        return 1
    finally:
        manifest.finished = _now()
        manifest.write(run_dir)
        root.mkdir(parents=True, exist_ok=True)
        manifest.append_to(root)
    print(f"outputs: {run_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
