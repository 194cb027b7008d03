"""Builders for the three benchmark families and the shipped configs."""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .arms import ArmModel, InvalidModelError, build_instance, validate_arm
from .config import load_config

NONINDEXABLE_REWARD = np.array(
    [[-4.0, -10.0], [4.0, 4.0], [-2.0, 0.0], [-2.0, 0.0], [-2.0, 0.0], [-2.0, 0.0]]
)
NONINDEXABLE_TARGETS = (-4.0, 2.0)
CROSSING_TOL = 0.01

COSTS = {
    "2x": lambda x: 2.0 * x,
    "log": np.log,
}


def config_dir():
    return Path(str(resources.files("ginoq") / "configs"))


def shipped_configs():
    return sorted(config_dir().glob("*.toml"))


def shipped_config(name):
    path = config_dir() / (name if name.endswith(".toml") else f"{name}.toml")
    if not path.exists():
        raise FileNotFoundError(f"no shipped config {name!r}; have {[p.stem for p in shipped_configs()]}")
    return path


def aoi_arm(cost="2x", x_max=20, success=1.0, name="aoi"):
    """Age-of-information user: age resets to 1 on a successful transmission.

    Reward is the negated cost of the current age, independent of the action.
    States are labelled by the age 1..x_max.
    """
    if cost not in COSTS:
        raise ValueError(f"unknown AoI cost {cost!r}; choose from {sorted(COSTS)}")
    if x_max < 2:
        raise ValueError("x_max must be at least 2")
    if not 0.0 < success <= 1.0:
        raise ValueError(f"success probability {success} outside (0, 1]")
    ages = np.arange(1, x_max + 1)
    up = np.minimum(np.arange(x_max) + 1, x_max - 1)
    P = np.zeros((2, x_max, x_max))
    P[0, np.arange(x_max), up] = 1.0
    P[1, np.arange(x_max), up] = 1.0 - success
    P[1, :, 0] += success
    c = COSTS[cost](ages.astype(float))
    reward = -np.column_stack([c, c])
    # deterministic resets admit non-threshold policies with two closed classes
    # (serve at age 1, idle at x_max); the planner and learners never need them
    return ArmModel(reward, P, name=name, labels=tuple(int(a) for a in ages),
                    assume_unichain=True)


def patrol_arm(event, event_active=None, reward=1.0, penalty=1.0, name="site"):
    """Binary event site: state 1 means the event is happening."""
    P0 = np.asarray(event, dtype=float)
    P1 = P0 if event_active is None else np.asarray(event_active, dtype=float)
    if P0.shape != (2, 2) or P1.shape != (2, 2):
        raise ValueError("patrol event matrices must be 2x2")
    r = np.array([[0.0, 0.0], [-penalty, reward]])
    return ArmModel(r, np.stack([P0, P1]), name=name, labels=(0, 1))


def _split(M, split):
    split = np.asarray(split, dtype=float)
    m1 = int(round(M * split[0] / split.sum()))
    m1 = min(max(m1, 1), M - 1)
    return m1, M - m1


def build_aoi_instance(M, N, x_max=20, split=(0.5, 0.5), success=(1.0, 1.0), costs=("2x", "log")):
    m = _split(M, split)
    classes = [(aoi_arm(c, x_max, p, name=f"cost-{c}"), k) for c, p, k in zip(costs, success, m)]
    return build_instance(classes, N)


def build_patrol_instance(M, N, events, reward=(1.0, 1.0), penalty=(1.0, 1.0),
                          split=(0.5, 0.5), events_active=(None, None)):
    m = _split(M, split)
    classes = [
        (patrol_arm(ev, ea, r, p, name=f"site-{i + 1}"), k)
        for i, (ev, ea, r, p, k) in enumerate(zip(events, events_active, reward, penalty, m))
    ]
    return build_instance(classes, N)


@dataclass(frozen=True)
class NonIndexabilityReport:
    passed: bool
    problems: tuple
    certificate: object

    def __str__(self):
        lines = ["non-indexable arm check: " + ("pass" if self.passed else "FAIL")]
        lines += [f"  - {p}" for p in self.problems]
        if self.certificate is not None:
            lines.append(str(self.certificate))
        return "\n".join(lines)


def check_nonindexable_arm(model, resolution=0.05):
    """Structural and certificate checks for the 6-state non-indexable arm."""
    from .planner import whittle_indices

    problems = []
    if model.state_count != 6:
        return NonIndexabilityReport(False, (f"expected 6 states, got {model.state_count}",), None)
    report = validate_arm(model)
    if not report.passed:
        return NonIndexabilityReport(False, (str(report),), None)
    if not np.array_equal(model.reward, NONINDEXABLE_REWARD):
        problems.append("reward table differs from the fixed non-indexable rewards")
    P = model.transitions
    if not np.allclose(P[0, 1:], P[1, 1:], atol=0, rtol=0):
        problems.append("states 2-6 must share transition rows across actions")
    if np.allclose(P[0, 0], P[1, 0]):
        problems.append("state 1 must have different rows for the two actions")
    cert = whittle_indices(model, resolution=resolution)
    if cert.indexable:
        problems.append("certificate says indexable")
    z1 = [z.lam for z in cert.zeros[0]]
    for target in NONINDEXABLE_TARGETS:
        if not any(abs(z - target) <= CROSSING_TOL for z in z1):
            problems.append(f"state 1 has no zero within {CROSSING_TOL} of {target}")
    stray = [z for z in z1 if min(abs(z - t) for t in NONINDEXABLE_TARGETS) > CROSSING_TOL]
    if stray:
        problems.append(f"state 1 has zeros away from the targets: {stray}")
    for s in range(1, 6):
        if len(cert.zeros[s]) != 1:
            problems.append(f"state {model.labels[s]} has {len(cert.zeros[s])} zeros, expected 1")
    return NonIndexabilityReport(not problems, tuple(problems), cert)


def nonindexable_arm():
    """The shipped 6-state arm (transition rows from the shipped config)."""
    cfg = load_config(shipped_config("nonindexable_10_7"))
    return cfg.instance.classes[0].model


def build_nonindexable_instance(M, N, transitions=None, check=True):
    base = nonindexable_arm()
    if transitions is None:
        model = base
    else:
        model = ArmModel(NONINDEXABLE_REWARD, transitions, name=base.name, labels=base.labels)
    if check:
        rep = check_nonindexable_arm(model)
        if not rep.passed:
            raise InvalidModelError(str(rep), rep)
    return build_instance([(model, M)], N)


def check_family(cfg):
    """Family-specific certificate for a parsed config; raises on failure."""
    if cfg.family == "nonindexable":
        if cfg.instance.K != 1:
            raise InvalidModelError("non-indexable experiments use a single class")
        rep = check_nonindexable_arm(cfg.instance.classes[0].model)
        if not rep.passed:
            raise InvalidModelError(str(rep), rep)
    elif cfg.family in ("aoi", "patrol"):
        if cfg.instance.K != 2:
            raise InvalidModelError(f"{cfg.family} experiments use two classes")
    return cfg


def load_experiment(path_or_name):
    """Load a config by path or shipped name and run its family checks."""
    p = Path(path_or_name)
    if not p.exists():
        p = shipped_config(str(path_or_name))
    return check_family(load_config(p))


@dataclass(frozen=True)
class Comparison:
    """Per-seed scores of each algorithm on one config."""

    experiment: str
    scores: dict  # algo -> per-seed array
    upper_bound: float

    def mean(self, algo):
        return float(np.mean(self.scores[algo]))

    def stderr(self, algo):
        v = self.scores[algo]
        return float(np.std(v, ddof=1) / np.sqrt(len(v)))

    def gap(self, a, b):
        """Difference of means in pooled standard errors."""
        se = float(np.hypot(self.stderr(a), self.stderr(b)))
        d = self.mean(a) - self.mean(b)
        return d / se if se > 0 else (0.0 if d == 0 else np.sign(d) * np.inf)


def compare_on(cfg, seeds, train_horizon=None, eval_interval=None, eval_horizon=1_000):
    """Learning-curve comparison: each learner scores the mean evaluation reward over its
    checkpoints (t > 0); the random policy scores its mean reward over as many steps."""
    from .baselines import WibqConfig, wibq_train
    from .env import RandomPolicy, run_policy
    from .learner import GinoQConfig, train
    from .planner import relaxed_upper_bound

    inst = cfg.instance
    T = int(train_horizon or cfg.evaluation.get("train_horizon", 100_000))
    every = int(eval_interval or max(1, T // 10))
    gcfg = GinoQConfig.from_dict({**cfg.training, "eval_interval": every, "eval_horizon": eval_horizon})
    wcfg = WibqConfig.from_dict({**cfg.wibq, "eval_interval": every, "eval_horizon": eval_horizon})
    scores = {"gino-q": [], "wibq": [], "random": []}
    for s in seeds:
        g = train(inst, T, gcfg, seed=s, initial=cfg.initial)
        w = wibq_train(inst, T, wcfg, seed=s, initial=cfg.initial)
        scores["gino-q"].append(g.curve()[1:].mean())
        scores["wibq"].append(w.curve()[1:].mean())
        n = eval_horizon * (len(g.diagnostics) - 1)
        scores["random"].append(run_policy(inst, RandomPolicy(inst, s), n, s, cfg.initial).mean_reward)
    scores = {k: np.array(v) for k, v in scores.items()}
    return Comparison(cfg.id, scores, relaxed_upper_bound(inst).value)
