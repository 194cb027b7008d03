"""Coupled RMAB simulator with per-arm random streams."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy import stats

from . import _kernels as K
from .policy import IndexPolicy

CHUNK = 4096
TRAJECTORY_SCHEMA = "ginoq.trajectory/1"

# spawn keys of the independent random streams derived from a run seed
ENV_STREAM, AGENT_STREAM, POLICY_STREAM, INIT_STREAM = 0, 1, 2, 3


class BudgetError(ValueError):
    pass


def stream(seed, *key):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


def arm_streams(seed, M, kind=ENV_STREAM):
    return [stream(seed, kind, i) for i in range(M)]


def draw(gens, n, width=1):
    """(n, M) uniforms (or (n, M, width)) with arm i's numbers from gens[i]."""
    if width == 1:
        return np.stack([g.random(n) for g in gens], axis=1)
    return np.stack([g.random((n, width)) for g in gens], axis=1)


@dataclass(frozen=True)
class JointState:
    states: np.ndarray
    t: int = 0

    def __post_init__(self):
        s = np.array(self.states, dtype=np.int64)
        s.setflags(write=False)
        object.__setattr__(self, "states", s)


@dataclass(frozen=True)
class StepResult:
    state: JointState
    rewards: np.ndarray
    total: float


def initial_states(instance, gens, initial=None):
    """One uniform per arm; ``initial`` is None (uniform), a state index, or per-class probabilities."""
    u = np.array([g.random() for g in gens])
    out = np.empty(instance.M, dtype=np.int64)
    for i in range(instance.M):
        k = instance.arm_class[i]
        n = instance.classes[k].model.state_count
        if initial is None or (isinstance(initial, str) and initial == "uniform"):
            out[i] = min(int(u[i] * n), n - 1)
        elif np.isscalar(initial):
            if not 0 <= int(initial) < n:
                raise ValueError(f"initial state {initial} outside 0..{n - 1}")
            out[i] = int(initial)
        else:
            p = np.asarray(initial[k], dtype=float)
            out[i] = min(int(np.searchsorted(np.cumsum(p), u[i], side="right")), n - 1)
    return out


class RmabEnv:
    """Reference (pure Python) simulator; the vectorised kernels reproduce it exactly."""

    def __init__(self, instance, seed=0, initial=None, constrained=True):
        self.instance = instance
        self.seed = seed
        self.initial = initial
        self.constrained = constrained
        self._cum = K.cumulative_rows(instance)
        self._R = K.reward_array(instance)
        self.state = None

    def reset(self, seed=None):
        if seed is not None:
            self.seed = seed
        self._gens = arm_streams(self.seed, self.instance.M)
        self.state = JointState(initial_states(self.instance, self._gens, self.initial), 0)
        return self.state

    def step(self, action):
        inst = self.instance
        action = np.asarray(action, dtype=np.int64)
        if action.shape != (inst.M,) or np.any((action != 0) & (action != 1)):
            raise ValueError(f"action must be a 0/1 vector of length {inst.M}")
        n_on = int(action.sum())
        if self.constrained and n_on != inst.budget:
            raise BudgetError(f"budget violated: {n_on} activations, N={inst.budget}")
        s = self.state.states
        cls = inst.arm_class
        rewards = self._R[cls, s, action]
        nxt = np.empty_like(s)
        for i in range(inst.M):
            u = self._gens[i].random()
            nxt[i] = min(int(np.searchsorted(self._cum[cls[i], action[i], s[i]], u, side="right")),
                         inst.classes[cls[i]].model.state_count - 1)
        self.state = JointState(nxt, self.state.t + 1)
        return StepResult(self.state, rewards, float(rewards.sum()))


def reset(instance, seed=0, initial=None):
    return RmabEnv(instance, seed, initial).reset()


class RandomPolicy:
    """Uniformly random N-subset each step, from the run's policy stream."""

    def __init__(self, instance, seed=0):
        self.instance = instance
        self.rng = stream(seed, POLICY_STREAM)

    def select(self, states, N=None):
        N = self.instance.budget if N is None else N
        u = self.rng.random(self.instance.M)
        action = np.zeros(self.instance.M, dtype=np.int64)
        action[np.argsort(u, kind="mergesort")[:N]] = 1
        return action

    __call__ = select


class TablePolicy:
    """Per-arm stationary action tables (relaxed-mode evaluation of greedy policies)."""

    def __init__(self, instance, table):
        self.instance = instance
        self.table = np.asarray(table, dtype=np.int64)

    @classmethod
    def from_class_policies(cls, instance, left, right=None, mix=1.0):
        """Arms of each class follow ``left`` (first round(mix*m_k) arms) or ``right``."""
        right = left if right is None else right
        S = instance.max_states
        table = np.zeros((instance.M, S), dtype=np.int64)
        i = 0
        for k, c in enumerate(instance.classes):
            n_left = int(round(mix * c.count))
            for j in range(c.count):
                pol = left[k] if j < n_left else right[k]
                table[i, : len(pol)] = pol
                i += 1
        return cls(instance, table)

    def select(self, states, N=None):
        return self.table[np.arange(len(states)), states]


@dataclass
class TrajectoryMetrics:
    rewards: np.ndarray
    activations: np.ndarray
    visits: np.ndarray
    lam: np.ndarray = None

    @property
    def horizon(self):
        return len(self.rewards)

    @property
    def total_reward(self):
        return float(self.rewards.sum())

    @property
    def mean_reward(self):
        return float(self.rewards.mean()) if len(self.rewards) else float("nan")

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write(f"# schema: {TRAJECTORY_SCHEMA}\n")
            w = csv.writer(fh)
            cols = ["t", "total_reward", "activation_count"] + (["lambda"] if self.lam is not None else [])
            w.writerow(cols)
            running = np.cumsum(self.rewards)
            for t in range(self.horizon):
                row = [t, repr(float(running[t])), int(self.activations[t])]
                if self.lam is not None:
                    row.append(repr(float(self.lam[t])))
                w.writerow(row)


def run_policy(instance, policy, horizon, seed, initial=None, constrained=True):
    """Simulate one run; fast kernels for index, random and table policies."""
    M = instance.M
    gens = arm_streams(seed, M)
    states = initial_states(instance, gens, initial)
    rewards = np.zeros(horizon)
    active = np.zeros(horizon, dtype=np.int64)
    visits = np.zeros((M, instance.max_states), dtype=np.int64)

    if isinstance(policy, (IndexPolicy, RandomPolicy, TablePolicy)):
        cum = K.cumulative_rows(instance)
        R = K.reward_array(instance)
        cls = np.asarray(instance.arm_class, dtype=np.int64)
        lookup = np.zeros((1, 1))
        row_of_arm = np.zeros(M, np.int64)
        act_table = np.zeros((1, 1), np.int64)
        pol_rng = None
        if isinstance(policy, IndexPolicy):
            mode = K.POLICY_INDEX
            lookup, row_of_arm = policy.lookup, np.asarray(policy.row_of_arm, np.int64)
        elif isinstance(policy, RandomPolicy):
            mode = K.POLICY_RANDOM
            pol_rng = policy.rng
        else:
            mode = K.POLICY_TABLE
            act_table = policy.table
        for t0 in range(0, horizon, CHUNK):
            n = min(CHUNK, horizon - t0)
            u = draw(gens, n)
            pol_u = pol_rng.random((n, M)) if pol_rng is not None else np.zeros((n, M))
            bad = K.simulate(states, cls, cum, R, u, mode, lookup, row_of_arm, pol_u,
                             instance.budget, act_table, rewards[t0:t0 + n], active[t0:t0 + n], visits)
            if bad >= 0:
                policy.indices(states)  # raises naming (class, state)
                raise KeyError(f"no index for arm {bad}")
        return TrajectoryMetrics(rewards, active, visits)

    env = RmabEnv(instance, seed, initial, constrained=constrained)
    env.state = JointState(states, 0)
    env._gens = gens
    for t in range(horizon):
        s = env.state.states
        visits[np.arange(M), s] += 1
        a = policy(s)
        res = env.step(a)
        rewards[t] = res.total
        active[t] = int(np.sum(a))
    return TrajectoryMetrics(rewards, active, visits)


@dataclass(frozen=True)
class EvalResult:
    mean: float
    stderr: float
    ci_low: float
    ci_high: float
    per_seed: np.ndarray
    horizon: int

    @property
    def n_seeds(self):
        return len(self.per_seed)


def summarize(values, horizon=0, level=0.95):
    v = np.asarray(values, dtype=float)
    mean = float(v.mean())
    se = float(v.std(ddof=1) / np.sqrt(len(v))) if len(v) > 1 else 0.0
    half = float(stats.t.ppf(0.5 + level / 2, len(v) - 1) * se) if len(v) > 1 else 0.0
    return EvalResult(mean, se, mean - half, mean + half, v, horizon)


def evaluate_policy(instance, policy, horizon, seeds, initial=None, constrained=True):
    """Mean per-step reward over ``horizon`` steps, averaged over seeds.

    ``policy`` is a policy object or a factory ``seed -> policy`` (for
    policies with their own randomness, such as RandomPolicy).
    """
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    seeds = list(seeds)
    if not seeds:
        raise ValueError("need at least one seed")
    means = []
    for seed in seeds:
        pol = policy(seed) if _is_factory(policy) else policy
        means.append(run_policy(instance, pol, horizon, seed, initial, constrained).mean_reward)
    return summarize(means, horizon)


def _is_factory(policy):
    return callable(policy) and not hasattr(policy, "select")
