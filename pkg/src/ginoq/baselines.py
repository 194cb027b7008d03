"""Comparison learners: two-timescale Whittle-index Q-learning and the random policy."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .env import INIT_STREAM, RandomPolicy, initial_states, stream
from .learner import CHUNK, DiagnosticRecord, Streams, TrainResult, checkpoints, evaluate_table
from .policy import IndexTable


@dataclass(frozen=True)
class WibqConfig:
    c1: float = 5.0
    c2: float = 2.0
    c4: int = 1
    warmup: int = 2_000  # index frozen while the Q tables settle
    eps0: float = 0.5
    eps_min: float = 0.02
    eps_decay: float = 0.9995
    visit_counts: bool = True
    class_mode: bool = True
    constrained: bool = True
    index_init: str = "random"  # "random": uniform on +-init_scale * r_max; "zero"
    init_scale: float = 1.0
    eval_interval: int = 10_000
    eval_horizon: int = 1_000

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: v for k, v in d.items() if k != "horizon"})


@dataclass
class WibqState:
    QW: np.ndarray  # [table, reference state, s, a]
    index: np.ndarray  # [table, reference state]
    counts: np.ndarray
    t: int
    table_of_arm: np.ndarray
    nstates: np.ndarray
    config: WibqConfig

    @classmethod
    def initial(cls, instance, config, seed):
        S = instance.max_states
        if config.class_mode:
            tab = np.asarray(instance.arm_class, dtype=np.int64)
            nst = np.array([m.state_count for m in instance.models], dtype=np.int64)
        else:
            tab = np.arange(instance.M, dtype=np.int64)
            nst = np.array([instance.model_of(i).state_count for i in range(instance.M)], dtype=np.int64)
        n = len(nst)
        index = np.zeros((n, S))
        if config.index_init == "random":
            r = config.init_scale * instance.reward_scale
            index[:] = stream(seed, INIT_STREAM).uniform(-r, r, size=(n, S))
        elif config.index_init != "zero":
            raise ValueError(f"unknown index_init {config.index_init!r}")
        return cls(np.zeros((n, S, S, 2)), index, np.zeros((n, S, 2)), 1, tab, nst, config)

    def table(self, instance, **meta):
        mode = "class" if self.config.class_mode else "arm"
        vals = [self.index[k, :n] for k, n in enumerate(self.nstates)]
        return IndexTable.for_instance(instance, vals, mode=mode, kind="whittle-learned", meta=meta)


def wibq_train(instance, horizon, config=None, seed=0, on_record=None, initial=None):
    """Learn per-state Whittle index estimates with a fast Q / slow index pair of iterates."""
    config = config or WibqConfig()
    st = WibqState.initial(instance, config, seed)
    M, N = instance.M, instance.budget
    streams = Streams(seed, M)
    states = initial_states(instance, streams.env, initial)
    cls = np.asarray(instance.arm_class, dtype=np.int64)
    cum, R = K.cumulative_rows(instance), K.reward_array(instance)
    consts = np.array([config.c1, config.c2, config.eps0, config.eps_min, config.eps_decay, M, config.c4,
                       config.warmup], float)
    rewards = np.zeros(horizon)
    diags = []

    def record():
        tab = st.table(instance)
        rec = DiagnosticRecord(st.t - 1, float("nan"), float("nan"),
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
            bad = K.wibq_chunk(st.t, states, st.table_of_arm, cls, st.nstates, cum, R, st.QW, st.index,
                               st.counts, consts, u_env, u_coin, u_act, p_coin, p_u, N,
                               config.constrained, config.visit_counts, rewards[t0:t0 + n])
            if bad >= 0:
                raise FloatingPointError(f"NaN in WIBQ index estimates at step {bad}")
            st.t += n
        record()
    table = st.table(instance, algo="wibq", seed=seed, horizon=horizon)
    return TrainResult(table, st, diags, "wibq", seed, horizon, rewards)


def random_policy(instance, seed=0):
    return RandomPolicy(instance, seed)
