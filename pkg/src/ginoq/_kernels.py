"""Numba inner loops for simulation and learning.

All randomness comes in as pre-drawn uniforms so the kernels are pure and the
Python reference implementations consume exactly the same numbers.
"""

import math

import numpy as np
from numba import njit

POLICY_INDEX = 0
POLICY_RANDOM = 1
POLICY_TABLE = 2


def cumulative_rows(instance):
    """(K, 2, S, S) cumulative transition rows, padded, with exact 1.0 tails."""
    K, S = instance.K, instance.max_states
    cum = np.ones((K, 2, S, S))
    for k, m in enumerate(instance.models):
        n = m.state_count
        for a in range(2):
            for s in range(n):
                row = m.transitions[a, s]
                c = np.cumsum(row)
                last = np.flatnonzero(row > 0)[-1]
                c[last:] = 1.0
                cum[k, a, s, :n] = c
    return cum


def reward_array(instance):
    K, S = instance.K, instance.max_states
    R = np.zeros((K, S, 2))
    for k, m in enumerate(instance.models):
        R[k, : m.state_count] = m.reward
    return R


@njit(cache=True)
def sample_next(cum_row, u):
    j = 0
    n = cum_row.shape[0]
    while j < n - 1 and u >= cum_row[j]:
        j += 1
    return j


@njit(cache=True)
def top_n_mask(vals, N, out):
    order = np.argsort(-vals, kind="mergesort")
    out[:] = 0
    for j in range(N):
        out[order[j]] = 1


@njit(cache=True)
def simulate(states, cls, cum, R, u, mode, lookup, row_of_arm, pol_u, N, act_table,
             out_reward, out_active, visits):
    """Run len(u) steps in place. Returns -1, or the arm whose index is missing."""
    T, M = u.shape
    act = np.zeros(M, np.int64)
    vals = np.empty(M)
    for t in range(T):
        if mode == POLICY_INDEX:
            for i in range(M):
                v = lookup[row_of_arm[i], states[i]]
                if math.isnan(v):
                    return i
                vals[i] = v
            top_n_mask(vals, N, act)
        elif mode == POLICY_RANDOM:
            for i in range(M):
                vals[i] = -pol_u[t, i]
            top_n_mask(vals, N, act)
        else:
            for i in range(M):
                act[i] = act_table[i, states[i]]
        total = 0.0
        count = 0
        for i in range(M):
            c = cls[i]
            s = states[i]
            a = act[i]
            total += R[c, s, a]
            count += a
            visits[i, s] += 1
            states[i] = sample_next(cum[c, a, s], u[t, i])
        out_reward[t] = total
        out_active[t] = count
    return -1


@njit(cache=True)
def _table_mean(T, k, n):
    acc = 0.0
    for s in range(n):
        acc += T[k, s, 0] + T[k, s, 1]
    return acc / (2.0 * n)


@njit(cache=True)
def gino_chunk(t0, states, tab, cls, nstates, weights, cum, R, Q, D, cnt, g, h, scal,
               consts, u_env, u_coin, u_act, p_coin, p_u, N, constrained, visit_mode,
               out_lam, out_y, out_reward):
    """Algorithm steps t0 .. t0+len(u_env)-1 for GINO-Q, in place.

    scal = [lam, y_prev]; consts = [c1, c2, c3, c4, eps0, eps_min, eps_decay, reset_threshold, M].
    Returns -1, or the step at which a table became NaN.
    """
    T, M = u_env.shape
    ntab = Q.shape[0]
    S = Q.shape[1]
    c1, c2, c3, c4 = consts[0], consts[1], consts[2], consts[3]
    eps0, eps_min, eps_decay, reset_thr, Mf = consts[4], consts[5], consts[6], consts[7], consts[8]
    act = np.zeros(M, np.int64)
    nxt = np.zeros(M, np.int64)
    vals = np.empty(M)
    dq = np.zeros((ntab, S, 2))
    dd = np.zeros((ntab, S, 2))
    nq = np.zeros((ntab, S, 2))
    touched = np.zeros(ntab, np.bool_)
    for step in range(T):
        t = t0 + step
        lam = scal[0]
        eps = max(eps_min, eps0 * eps_decay ** (t / Mf))
        # act
        if constrained:
            if p_coin[step] < eps:
                for i in range(M):
                    vals[i] = -p_u[step, i]
            else:
                for i in range(M):
                    k = tab[i]
                    vals[i] = Q[k, states[i], 1] - Q[k, states[i], 0]
            top_n_mask(vals, N, act)
        else:
            for i in range(M):
                k = tab[i]
                s = states[i]
                if u_coin[step, i] < eps:
                    act[i] = 1 if u_act[step, i] < 0.5 else 0
                else:
                    act[i] = 1 if Q[k, s, 1] > Q[k, s, 0] else 0
        # environment
        total = 0.0
        for i in range(M):
            c = cls[i]
            s = states[i]
            a = act[i]
            total += R[c, s, a]
            nxt[i] = sample_next(cum[c, a, s], u_env[step, i])
        out_reward[step] = total
        # TD errors against the pre-update tables
        for i in range(M):
            k = tab[i]
            s = states[i]
            a = act[i]
            s2 = nxt[i]
            q0 = Q[k, s2, 0]
            q1 = Q[k, s2, 1]
            qmax = q1 if q1 > q0 else q0
            b = 1 if q1 > q0 else 0
            delta = R[cls[i], s, a] - lam * a + qmax - Q[k, s, a] - g[k]
            sigma = a + D[k, s2, b] - D[k, s, a] - h[k]
            dq[k, s, a] += delta
            dd[k, s, a] += sigma
            nq[k, s, a] += 1.0
            touched[k] = True
        for k in range(ntab):
            if not touched[k]:
                continue
            for s in range(nstates[k]):
                for a in range(2):
                    m = nq[k, s, a]
                    if m > 0.0:
                        if visit_mode:
                            cnt[k, s, a] += 1.0
                            tau = cnt[k, s, a]
                        else:
                            tau = float(t)
                        alpha = min(1.0, c1 / tau)
                        beta = min(1.0, c2 / (tau * math.sqrt(math.log(max(tau, 2.0)))))
                        Q[k, s, a] += beta * dq[k, s, a] / m
                        D[k, s, a] += alpha * dd[k, s, a] / m
                        dq[k, s, a] = 0.0
                        dd[k, s, a] = 0.0
                        nq[k, s, a] = 0.0
            g[k] = _table_mean(Q, k, nstates[k])
            h[k] = _table_mean(D, k, nstates[k])
            touched[k] = False
            if math.isnan(g[k]) or math.isnan(h[k]):
                return t
        y = float(N)
        for k in range(ntab):
            y -= weights[k] * h[k]
        new_lam = lam
        if t % int(c4) == 0 and abs(y) < abs(scal[1]):
            theta = c3 / (t * math.log(max(float(t), 2.0)))
            new_lam = lam - theta * y
        if visit_mode and abs(new_lam - lam) > reset_thr:
            cnt[:, :, :] = 0.0
        scal[0] = new_lam
        scal[1] = y
        out_lam[step] = new_lam
        out_y[step] = y
        for i in range(M):
            states[i] = nxt[i]
    return -1


@njit(cache=True)
def wibq_chunk(t0, states, tab, cls, nstates, cum, R, QW, idx, cnt, consts, u_env, u_coin,
               u_act, p_coin, p_u, N, constrained, visit_mode, out_reward):
    """Two-timescale Whittle-index Q-learning, one Q table per reference state.

    QW[k, ref, s, a]; idx[k, ref] is the index estimate for state ref.
    consts = [c1, c2, eps0, eps_min, eps_decay, M, c4, warmup]; indices move only
    when t % c4 == 0 and t > warmup.
    """
    T, M = u_env.shape
    ntab = QW.shape[0]
    S = QW.shape[2]
    c1, c2, eps0, eps_min, eps_decay, Mf = consts[0], consts[1], consts[2], consts[3], consts[4], consts[5]
    c4 = int(consts[6])
    warmup = consts[7]
    act = np.zeros(M, np.int64)
    nxt = np.zeros(M, np.int64)
    vals = np.empty(M)
    dq = np.zeros((ntab, S, S, 2))
    nq = np.zeros((ntab, S, 2))
    mean = np.zeros((ntab, S))
    for step in range(T):
        t = t0 + step
        eps = max(eps_min, eps0 * eps_decay ** (t / Mf))
        if constrained:
            if p_coin[step] < eps:
                for i in range(M):
                    vals[i] = -p_u[step, i]
            else:
                for i in range(M):
                    vals[i] = idx[tab[i], states[i]]
            top_n_mask(vals, N, act)
        else:
            for i in range(M):
                k = tab[i]
                s = states[i]
                if u_coin[step, i] < eps:
                    act[i] = 1 if u_act[step, i] < 0.5 else 0
                else:
                    act[i] = 1 if QW[k, s, s, 1] > QW[k, s, s, 0] else 0
        total = 0.0
        for i in range(M):
            c = cls[i]
            s = states[i]
            a = act[i]
            total += R[c, s, a]
            nxt[i] = sample_next(cum[c, a, s], u_env[step, i])
        out_reward[step] = total
        for k in range(ntab):
            n = nstates[k]
            for ref in range(n):
                acc = 0.0
                for s in range(n):
                    acc += QW[k, ref, s, 0] + QW[k, ref, s, 1]
                mean[k, ref] = acc / (2.0 * n)
        for i in range(M):
            k = tab[i]
            s = states[i]
            a = act[i]
            s2 = nxt[i]
            r = R[cls[i], s, a]
            for ref in range(nstates[k]):
                q0 = QW[k, ref, s2, 0]
                q1 = QW[k, ref, s2, 1]
                qmax = q1 if q1 > q0 else q0
                dq[k, ref, s, a] += r - idx[k, ref] * a + qmax - QW[k, ref, s, a] - mean[k, ref]
            nq[k, s, a] += 1.0
        for k in range(ntab):
            n = nstates[k]
            for s in range(n):
                for a in range(2):
                    m = nq[k, s, a]
                    if m > 0.0:
                        if visit_mode:
                            cnt[k, s, a] += 1.0
                            tau = cnt[k, s, a]
                        else:
                            tau = float(t)
                        alpha = min(1.0, c1 / tau)
                        for ref in range(n):
                            QW[k, ref, s, a] += alpha * dq[k, ref, s, a] / m
                            dq[k, ref, s, a] = 0.0
                        nq[k, s, a] = 0.0
            if t % c4 != 0 or t <= warmup:
                continue
            gamma = c2 / (t * math.sqrt(math.log(max(float(t), 2.0))))
            for ref in range(n):
                idx[k, ref] += gamma * (QW[k, ref, ref, 1] - QW[k, ref, ref, 0])
                if math.isnan(idx[k, ref]):
                    return t
        for i in range(M):
            states[i] = nxt[i]
    return -1
