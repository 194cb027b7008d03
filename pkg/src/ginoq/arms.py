"""Tabular single-arm MDPs, arm classes and RMAB instances."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.csgraph import connected_components

ROW_TOL = 1e-9
UNICHAIN_EXHAUSTIVE_MAX = 12


class InvalidModelError(ValueError):
    """Raised when a model or instance fails validation."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


def _frozen(a):
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ArmModel:
    """One arm: ``reward[s, a]`` and ``transitions[a, s, s']`` with a in {0, 1}.

    Arrays are copied and made read-only. ``labels`` are the external state
    names (for example 1-based numbers from a config file).
    """

    reward: np.ndarray
    transitions: np.ndarray
    name: str = "arm"
    labels: tuple = None
    assume_unichain: bool = False

    def __post_init__(self):
        object.__setattr__(self, "reward", _frozen(self.reward))
        object.__setattr__(self, "transitions", _frozen(self.transitions))
        if self.labels is None:
            n = self.reward.shape[0] if self.reward.ndim >= 1 else 0
            object.__setattr__(self, "labels", tuple(range(n)))
        else:
            object.__setattr__(self, "labels", tuple(self.labels))

    @property
    def state_count(self):
        return self.reward.shape[0]

    @property
    def reward_scale(self):
        return float(np.max(np.abs(self.reward))) if self.reward.size else 0.0

    def label_of(self, s):
        return self.labels[s]

    def index_of(self, label):
        try:
            return self.labels.index(label)
        except ValueError:
            raise KeyError(f"arm {self.name!r} has no state labelled {label!r}") from None

    def same_as(self, other, atol=1e-12):
        return (
            self.reward.shape == other.reward.shape
            and self.transitions.shape == other.transitions.shape
            and np.allclose(self.reward, other.reward, atol=atol, rtol=0)
            and np.allclose(self.transitions, other.transitions, atol=atol, rtol=0)
        )


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    details: tuple = ()


@dataclass(frozen=True)
class ValidationReport:
    checks: tuple

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    @property
    def failures(self):
        return [d for c in self.checks if not c.passed for d in (c.details or (c.name,))]

    def __str__(self):
        lines = []
        for c in self.checks:
            lines.append(f"[{'pass' if c.passed else 'FAIL'}] {c.name}")
            lines.extend(f"    {d}" for d in c.details)
        return "\n".join(lines)


def recurrent_class_count(P):
    """Number of closed communicating classes of a stochastic matrix."""
    adj = P > 0
    n_comp, comp = connected_components(adj, directed=True, connection="strong")
    closed = np.ones(n_comp, dtype=bool)
    src, dst = np.nonzero(adj)
    leaving = comp[src] != comp[dst]
    closed[np.unique(comp[src[leaving]])] = False
    return int(closed.sum())


def multichain_policies(transitions, limit=None):
    """Deterministic policies (as action tuples) with more than one recurrent class."""
    S = transitions.shape[1]
    bad = []
    for pol in itertools.product((0, 1), repeat=S):
        P = transitions[list(pol), np.arange(S)]
        if recurrent_class_count(P) != 1:
            bad.append(pol)
            if limit is not None and len(bad) >= limit:
                break
    return bad


def validate_arm(model):
    """Check every ArmModel invariant; never raises on finite input."""
    r, P = model.reward, model.transitions
    checks = []

    shape_issues = []
    if r.ndim != 2 or r.shape[1] != 2 or r.shape[0] < 1:
        shape_issues.append(f"reward has shape {r.shape}, expected (S, 2)")
    S = r.shape[0] if r.ndim == 2 else -1
    if P.ndim != 3 or P.shape[0] != 2 or P.shape[1] != P.shape[2] or P.shape[1] != S:
        shape_issues.append(f"transitions have shape {P.shape}, expected (2, {S}, {S})")
    if len(model.labels) != max(S, 0):
        shape_issues.append(f"{len(model.labels)} labels for {S} states")
    elif len(set(model.labels)) != len(model.labels):
        shape_issues.append("state labels are not unique")
    checks.append(CheckResult("shape", not shape_issues, tuple(shape_issues)))
    if shape_issues:
        return ValidationReport(tuple(checks))

    bad_r = [f"reward[{s}, {a}] is not finite" for s, a in zip(*np.nonzero(~np.isfinite(r)))]
    checks.append(CheckResult("finite rewards", not bad_r, tuple(bad_r)))

    row_issues = []
    for a in range(2):
        for s in range(S):
            row = P[a, s]
            if not np.all(np.isfinite(row)):
                row_issues.append(f"row {s} of action {a} has non-finite entries")
                continue
            if row.min() < 0 or row.max() > 1:
                row_issues.append(f"row {s} of action {a} has entries outside [0, 1]")
            total = row.sum()
            if abs(total - 1.0) > ROW_TOL:
                row_issues.append(f"row {s} of action {a} sums to {total:.12g}")
    checks.append(CheckResult("row-stochastic transitions", not row_issues, tuple(row_issues)))

    if row_issues:
        checks.append(CheckResult("unichain", False, ("skipped: transitions invalid",)))
    elif S > UNICHAIN_EXHAUSTIVE_MAX:
        ok = model.assume_unichain
        msg = "declared by assume_unichain" if ok else (
            f"{S} states exceed the exhaustive limit {UNICHAIN_EXHAUSTIVE_MAX}; set assume_unichain")
        checks.append(CheckResult("unichain", ok, (msg,)))
    else:
        bad = multichain_policies(P, limit=5)
        details = tuple(f"policy {''.join(map(str, p))} has several recurrent classes" for p in bad)
        checks.append(CheckResult("unichain", not bad, details))
    return ValidationReport(tuple(checks))


@dataclass(frozen=True, eq=False)
class ArmClass:
    model: ArmModel
    count: int

    @property
    def name(self):
        return self.model.name


@dataclass(frozen=True, eq=False)
class RmabInstance:
    """M arms in K classes with activation budget N. Arms are numbered class by class."""

    classes: tuple
    budget: int
    arm_class: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        ac = np.repeat(np.arange(len(self.classes)), [c.count for c in self.classes])
        ac.setflags(write=False)
        object.__setattr__(self, "arm_class", ac)

    @property
    def M(self):
        return int(sum(c.count for c in self.classes))

    @property
    def N(self):
        return self.budget

    @property
    def K(self):
        return len(self.classes)

    @property
    def counts(self):
        return np.array([c.count for c in self.classes])

    @property
    def proportions(self):
        return self.counts / self.M

    @property
    def models(self):
        return [c.model for c in self.classes]

    @property
    def max_states(self):
        return max(c.model.state_count for c in self.classes)

    @property
    def reward_scale(self):
        return max(c.model.reward_scale for c in self.classes)

    def model_of(self, arm):
        return self.classes[self.arm_class[arm]].model


def build_instance(classes, budget, validate=True):
    """Assemble an instance from ``(ArmModel, count)`` pairs or ArmClass objects."""
    built = []
    for c in classes:
        if not isinstance(c, ArmClass):
            model, count = c
            c = ArmClass(model, int(count))
        if c.count < 1:
            raise InvalidModelError(f"class {c.name!r} has count {c.count}; need at least 1")
        built.append(c)
    if not built:
        raise InvalidModelError("an instance needs at least one arm class")
    names = [c.name for c in built]
    if len(set(names)) != len(names):
        raise InvalidModelError(f"class names must be unique, got {names}")
    M = sum(c.count for c in built)
    budget = int(budget)
    if not 1 <= budget < M:
        raise InvalidModelError(f"budget N={budget} must satisfy 1 <= N < M={M}")
    if validate:
        for c in built:
            report = validate_arm(c.model)
            if not report.passed:
                raise InvalidModelError(f"class {c.name!r} failed validation:\n{report}", report)
    return RmabInstance(tuple(built), budget)
