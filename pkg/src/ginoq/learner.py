"""GINO-Q: three-timescale learning of gain indices.

Per step: RVI Q-learning on r - lam*a (medium rate beta), SARSA estimation of
the activation-cost table D (fast rate alpha) and, every c4 steps, a gated
gradient step on lam (slow rate theta). Tables are shared by all arms of a
class in class mode, or kept per arm otherwise.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import _kernels as K
from .env import AGENT_STREAM, ENV_STREAM, POLICY_STREAM, arm_streams, draw, initial_states, run_policy, stream
from .policy import IndexPolicy, IndexTable

DIAGNOSTICS_SCHEMA = "ginoq.diagnostics/1"
CHUNK = 2048
EVAL_SEED_OFFSET = 1_000_003


@dataclass(frozen=True)
class GinoQConfig:
    c1: float = 1.0
    c2: float = 1.0
    c3: float = None  # None: theta_scale * reward_scale * c4 / M
    c4: int = 100
    theta_scale: float = 0.5
    eps0: float = 0.5
    eps_min: float = 0.02
    eps_decay: float = 0.9995
    visit_counts: bool = True
    reset_threshold: float = 0.5
    class_mode: bool = True
    constrained: bool = True  # exploratory top-N behaviour, matching how the indices are used
    eval_interval: int = 10_000
    eval_horizon: int = 1_000

    def resolved_c3(self, instance):
        if self.c3 is not None:
            return float(self.c3)
        return self.theta_scale * instance.reward_scale * self.c4 / instance.M

    @classmethod
    def from_dict(cls, d):
        d = {k: v for k, v in d.items() if k != "horizon"}
        return cls(**d)


def step_sizes(t, visit_count=None, c1=1.0, c2=1.0, c3=1.0, c4=100):
    """(alpha, beta, theta) at global step t; alpha and beta use the visit count if given, capped at 1."""
    tau = float(t if visit_count is None else visit_count)
    alpha = min(1.0, c1 / tau)
    beta = min(1.0, c2 / (tau * math.sqrt(math.log(max(tau, 2.0)))))
    theta = c3 / (t * math.log(max(float(t), 2.0))) if t % int(c4) == 0 else 0.0
    return alpha, beta, theta


def epsilon(t, M, config):
    return max(config.eps_min, config.eps0 * config.eps_decay ** (t / M))


@dataclass
class LearnerState:
    Q: np.ndarray
    D: np.ndarray
    counts: np.ndarray
    g: np.ndarray
    h: np.ndarray
    lam: float
    y_prev: float
    t: int
    table_of_arm: np.ndarray
    nstates: np.ndarray
    weights: np.ndarray
    c3: float
    config: GinoQConfig = field(repr=False)

    @classmethod
    def initial(cls, instance, config=None):
        config = config or GinoQConfig()
        S = instance.max_states
        if config.class_mode:
            tab = np.asarray(instance.arm_class, dtype=np.int64)
            nst = np.array([m.state_count for m in instance.models], dtype=np.int64)
            w = instance.counts.astype(float)
        else:
            tab = np.arange(instance.M, dtype=np.int64)
            nst = np.array([instance.model_of(i).state_count for i in range(instance.M)], dtype=np.int64)
            w = np.ones(instance.M)
        n = len(nst)
        return cls(np.zeros((n, S, 2)), np.zeros((n, S, 2)), np.zeros((n, S, 2)), np.zeros(n),
                   np.zeros(n), 0.0, float(instance.M), 1, tab, nst, w,
                   config.resolved_c3(instance), config)

    def indices(self):
        return [self.Q[k, : n, 1] - self.Q[k, : n, 0] for k, n in enumerate(self.nstates)]

    def table(self, instance, **meta):
        mode = "class" if self.config.class_mode else "arm"
        return IndexTable.for_instance(instance, self.indices(), mode=mode, kind="learned",
                                       lam=float(self.lam), meta=meta)

    def consts(self, M):
        c = self.config
        return np.array([c.c1, c.c2, self.c3, c.c4, c.eps0, c.eps_min, c.eps_decay,
                         c.reset_threshold, M], dtype=float)


def act(state, arm_states, N, u_coin, u_act, p_coin, p_u):
    """Exploratory joint action from pre-drawn uniforms (mirrors the kernel)."""
    cfg = state.config
    M = len(arm_states)
    eps = epsilon(state.t, M, cfg)
    tab = state.table_of_arm
    gap = state.Q[tab, arm_states, 1] - state.Q[tab, arm_states, 0]
    if cfg.constrained:
        vals = -p_u if p_coin < eps else gap
        action = np.zeros(M, dtype=np.int64)
        action[np.argsort(-vals, kind="mergesort")[:N]] = 1
        return action
    explore = u_coin < eps
    return np.where(explore, (u_act < 0.5).astype(np.int64), (gap > 0).astype(np.int64))


def _mean(T, k, n):
    acc = 0.0
    for s in range(n):
        acc += T[k, s, 0] + T[k, s, 1]
    return acc / (2.0 * n)


def step_learner(state, obs, N):
    """One synchronous update from all arms' (s, a, r, s') transitions; mutates and returns state."""
    s_arr, a_arr, r_arr, s2_arr = (np.asarray(x) for x in obs)
    cfg = state.config
    Q, D, tab = state.Q, state.D, state.table_of_arm
    t, lam = state.t, state.lam
    dq = np.zeros_like(Q)
    dd = np.zeros_like(D)
    nq = np.zeros_like(Q)
    for i in range(len(s_arr)):
        k, s, a, s2 = tab[i], s_arr[i], a_arr[i], s2_arr[i]
        q0, q1 = Q[k, s2, 0], Q[k, s2, 1]
        qmax = q1 if q1 > q0 else q0
        b = 1 if q1 > q0 else 0
        dq[k, s, a] += r_arr[i] - lam * a + qmax - Q[k, s, a] - state.g[k]
        dd[k, s, a] += a + D[k, s2, b] - D[k, s, a] - state.h[k]
        nq[k, s, a] += 1.0
    for k in np.unique(tab[np.arange(len(s_arr))]):
        for s in range(state.nstates[k]):
            for a in range(2):
                m = nq[k, s, a]
                if m > 0:
                    if cfg.visit_counts:
                        state.counts[k, s, a] += 1.0
                        tau = state.counts[k, s, a]
                    else:
                        tau = float(t)
                    alpha, beta, _ = step_sizes(t, tau, cfg.c1, cfg.c2, state.c3, cfg.c4)
                    Q[k, s, a] += beta * dq[k, s, a] / m
                    D[k, s, a] += alpha * dd[k, s, a] / m
        state.g[k] = _mean(Q, k, state.nstates[k])
        state.h[k] = _mean(D, k, state.nstates[k])
        if math.isnan(state.g[k]) or math.isnan(state.h[k]):
            raise FloatingPointError(f"NaN in learner table {k} at step {t}")
    y = float(N)
    for k in range(len(state.h)):
        y -= state.weights[k] * state.h[k]
    new_lam = lam
    if t % int(cfg.c4) == 0 and abs(y) < abs(state.y_prev):
        theta = state.c3 / (t * math.log(max(float(t), 2.0)))
        new_lam = lam - theta * y
    if cfg.visit_counts and abs(new_lam - lam) > cfg.reset_threshold:
        state.counts[:] = 0.0
    state.lam = new_lam
    state.y_prev = y
    state.t = t + 1
    return state


@dataclass(frozen=True)
class DiagnosticRecord:
    t: int
    lam: float
    y: float
    indices: tuple
    eval_reward: float


@dataclass
class TrainResult:
    table: IndexTable
    state: object
    diagnostics: list
    algo: str
    seed: int
    horizon: int
    rewards: np.ndarray = None

    @property
    def lam(self):
        return self.table.lam

    def curve(self):
        return np.array([d.eval_reward for d in self.diagnostics])


def index_columns(table):
    return [f"W[{n}:{l}]" for n, lbls in zip(table.names, table.labels) for l in lbls]


def write_diagnostics(path, result):
    with open(path, "w", newline="") as fh:
        fh.write(f"# schema: {DIAGNOSTICS_SCHEMA}\n")
        w = csv.writer(fh)
        w.writerow(["algo", "seed", "t", "lambda", "y", "eval_reward"] + index_columns(result.table))
        for d in result.diagnostics:
            w.writerow([result.algo, result.seed, d.t, repr(d.lam), repr(d.y), repr(d.eval_reward)]
                       + [repr(float(v)) for v in d.indices])


def evaluate_table(instance, table, horizon, seed, initial=None):
    if horizon <= 0:
        return float("nan")
    return run_policy(instance, IndexPolicy(table, instance), horizon, EVAL_SEED_OFFSET + seed,
                      initial).mean_reward


def checkpoints(horizon, interval):
    pts = list(range(0, horizon, interval)) if interval > 0 else [0]
    if not pts or pts[-1] != horizon:
        pts.append(horizon)
    return pts


class Streams:
    """Chunked uniforms for the environment, the arms' exploration and joint exploration."""

    def __init__(self, seed, M):
        self.env = arm_streams(seed, M, ENV_STREAM)
        self.agent = arm_streams(seed, M, AGENT_STREAM)
        self.policy = stream(seed, POLICY_STREAM)
        self.M = M

    def chunk(self, n):
        u_env = draw(self.env, n)
        ua = draw(self.agent, n, 2)
        pol = self.policy.random((n, self.M + 1))
        return (u_env, np.ascontiguousarray(ua[:, :, 0]), np.ascontiguousarray(ua[:, :, 1]),
                np.ascontiguousarray(pol[:, 0]), np.ascontiguousarray(pol[:, 1:]))


def train(instance, horizon, config=None, seed=0, on_record=None, reference=False, initial=None):
    """Run GINO-Q for ``horizon`` steps and return the learned gain-index table.

    ``reference=True`` uses the pure-Python step (slow, for cross-checks).
    """
    config = config or GinoQConfig()
    st = LearnerState.initial(instance, config)
    M, N = instance.M, instance.budget
    streams = Streams(seed, M)
    states = initial_states(instance, streams.env, initial)
    cls = np.asarray(instance.arm_class, dtype=np.int64)
    cum, R = K.cumulative_rows(instance), K.reward_array(instance)
    consts = st.consts(M)
    scal = np.array([st.lam, st.y_prev])
    rewards = np.zeros(horizon)
    diags = []

    def record():
        tab = st.table(instance)
        rec = DiagnosticRecord(st.t - 1, float(st.lam), float(st.y_prev),
                               tuple(np.concatenate(tab.values).tolist()),
                               evaluate_table(instance, tab, config.eval_horizon, seed, initial))
        diags.append(rec)
        if on_record is not None:
            on_record(rec)

    record()
    pts = checkpoints(horizon, config.eval_interval)
    for a, b in zip(pts[:-1], pts[1:]):
        for t0 in range(a, b, CHUNK):
            n = min(CHUNK, b - t0)
            u_env, u_coin, u_act, p_coin, p_u = streams.chunk(n)
            if reference:
                for j in range(n):
                    act_ = act(st, states, N, u_coin[j], u_act[j], p_coin[j], p_u[j])
                    nxt = np.array([K.sample_next(cum[cls[i], act_[i], states[i]], u_env[j, i])
                                    for i in range(M)])
                    r = R[cls, states, act_]
                    rewards[t0 + j] = r.sum()
                    step_learner(st, (states, act_, r, nxt), N)
                    states = nxt
            else:
                out_lam, out_y = np.empty(n), np.empty(n)
                bad = K.gino_chunk(st.t, states, st.table_of_arm, cls, st.nstates, st.weights, cum, R,
                                   st.Q, st.D, st.counts, st.g, st.h, scal, consts, u_env, u_coin,
                                   u_act, p_coin, p_u, N, config.constrained, config.visit_counts,
                                   out_lam, out_y, rewards[t0:t0 + n])
                if bad >= 0:
                    raise FloatingPointError(f"NaN in learner tables at step {bad}")
                st.t += n
                st.lam, st.y_prev = float(scal[0]), float(scal[1])
        record()
    table = st.table(instance, algo="gino-q", seed=seed, horizon=horizon)
    return TrainResult(table, st, diags, "gino-q", seed, horizon, rewards)
