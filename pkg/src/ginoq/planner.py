"""Exact single-arm planning oracle for the Lagrangian-relaxed RMAB.

Q tables follow the learner's normalisation::

    Q(s, a) = r(s, a) - lam * a + E[V(s')] - g,   V(s) = max_a Q(s, a),   mean(Q) = g

so a converged learner table and the planner table agree entry by entry.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .policy import IndexTable

TIE_TOL = 1e-9
ZERO_TOL = 1e-7
BREAK_TOL = 1e-10


class PlannerError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class PlannerSolution:
    lam: float
    Q: np.ndarray
    V: np.ndarray
    gain: float
    activation_rate: float
    greedy_policy: np.ndarray
    residual: float
    iterations: int

    @property
    def passive_set(self):
        return frozenset(int(s) for s in np.flatnonzero(self.greedy_policy == 0))

    @property
    def index(self):
        return self.Q[:, 1] - self.Q[:, 0]


def greedy(Q):
    """Greedy actions with ties (within TIE_TOL) going to the passive action."""
    return (Q[:, 1] - Q[:, 0] > TIE_TOL).astype(np.int64)


def chain_of(model, policy):
    S = model.state_count
    idx = np.arange(S)
    return model.transitions[policy, idx], model.reward[idx, policy]


def policy_gain(P, c):
    """Average reward and bias (bias[0] = 0) of a unichain Markov reward process."""
    S = len(c)
    A = np.eye(S) - P
    A[:, 0] = 1.0
    x = np.linalg.solve(A, c)
    bias = x.copy()
    bias[0] = 0.0
    return float(x[0]), bias


def _solution_from_policy(model, lam, policy, iterations):
    P, r = chain_of(model, policy)
    g, bias = policy_gain(P, r - lam * policy)
    h, _ = policy_gain(P, policy.astype(float))
    Q = _q_from_bias(model, lam, bias, g)
    V = Q.max(axis=1)
    resid = float(np.max(np.abs(V + g - (_reward(model, lam) + (model.transitions @ V).T).max(axis=1))))
    return PlannerSolution(float(lam), Q, V, g, min(max(h, 0.0), 1.0), greedy(Q), resid, iterations)


def _reward(model, lam):
    return model.reward - lam * np.array([0.0, 1.0])


def _q_from_bias(model, lam, bias, g):
    Q = _reward(model, lam) + (model.transitions @ bias).T - g
    return Q + (g - Q.mean())


def _policy_iteration(model, lam, policy, max_iter=200):
    seen = set()
    for it in range(1, max_iter + 1):
        P, r = chain_of(model, policy)
        g, bias = policy_gain(P, r - lam * policy)
        new = greedy(_q_from_bias(model, lam, bias, g))
        key = new.tobytes()
        if np.array_equal(new, policy) or key in seen:
            return new, it
        seen.add(policy.tobytes())
        policy = new
    return policy, max_iter


def solve_single_arm(model, lam, tol=1e-10, max_iter=10**6, method="rvi", init_policy=None):
    """Solve the arm with reward r(s, a) - lam * a.

    ``method="rvi"`` runs damped relative value iteration anchored at the
    table mean, then polishes with exact policy evaluation. ``method="pi"``
    runs policy iteration from ``init_policy`` (warm starts for sweeps).
    """
    S = model.state_count
    lam = float(lam)
    iters = 0
    if method == "rvi":
        R = _reward(model, lam)
        PT = model.transitions
        Q = np.zeros((S, 2))
        for iters in range(1, max_iter + 1):
            V = Q.max(axis=1)
            T = R + (PT @ V).T - Q.mean()
            new = 0.5 * Q + 0.5 * T
            delta = np.max(np.abs(new - Q))
            Q = new
            if delta < tol:
                break
        else:
            raise PlannerError(f"RVI did not converge at lam={lam}: last change {delta:.3e}")
        policy = greedy(Q)
    elif method == "pi":
        policy = np.ones(S, np.int64) if init_policy is None else np.asarray(init_policy, np.int64)
    else:
        raise ValueError(f"unknown method {method!r}")
    policy, pi_iters = _policy_iteration(model, lam, policy)
    sol = _solution_from_policy(model, lam, policy, iters + pi_iters)
    scale = max(1.0, float(np.max(np.abs(sol.V))))
    if sol.residual > max(tol, 1e-12) * scale * 10:
        raise PlannerError(f"Bellman residual {sol.residual:.3e} above tolerance at lam={lam}")
    return sol


def affine_index(model, policy):
    """W(s, lam) = A[s] + B[s] * lam for a fixed policy, exact."""
    P, r = chain_of(model, policy)
    _, bias_r = policy_gain(P, r)
    _, bias_c = policy_gain(P, policy.astype(float))
    dP = model.transitions[1] - model.transitions[0]
    A = model.reward[:, 1] - model.reward[:, 0] + dP @ bias_r
    B = -1.0 - dP @ bias_c
    return A, B


@dataclass(frozen=True, eq=False)
class Segment:
    lo: float
    hi: float
    policy: np.ndarray
    activation_rate: float


@dataclass(frozen=True, eq=False)
class Sweep:
    """Piecewise-constant greedy policy of one arm over a bracket."""

    model: object
    bracket: tuple
    grid: np.ndarray
    grid_solutions: list
    breakpoints: np.ndarray
    segments: list

    def segment_at(self, lam):
        i = int(np.searchsorted(self.breakpoints, lam, side="right"))
        return self.segments[i]


def _all_active(sol):
    return bool(np.all(sol.greedy_policy == 1))


def _all_passive(sol):
    return bool(np.all(sol.greedy_policy == 0))


def default_bracket(models):
    scale = max(m.reward_scale for m in models)
    return -(2.0 * scale + 1.0), 2.0 * scale + 1.0


def expand_bracket(models, lo, hi, max_expansions=40):
    """Widen (lo, hi) until every arm is all-active at lo and all-passive at hi."""
    for _ in range(max_expansions):
        left = [solve_single_arm(m, lo, method="pi") for m in models]
        right = [solve_single_arm(m, hi, method="pi", init_policy=np.zeros(m.state_count, np.int64))
                 for m in models]
        ok_l = all(_all_active(s) for s in left)
        ok_r = all(_all_passive(s) for s in right)
        if ok_l and ok_r:
            return float(lo), float(hi)
        width = hi - lo
        if not ok_l:
            lo -= width
        if not ok_r:
            hi += width
    raise PlannerError(f"bracket expansion cap reached at ({lo}, {hi})")


def _snap(model, pa, pb, guess):
    """Exact switch point: the zero of the flipping state's affine index."""
    A, B = affine_index(model, pa)
    best = guess
    for s in np.flatnonzero(pa != pb):
        if abs(B[s]) > 1e-14:
            z = -A[s] / B[s] + 0.0
            if abs(z - guess) < abs(best - guess) or best == guess:
                best = z if abs(z - guess) < 1e-8 else best
    return float(best)


class _AffinePolicy:
    """Gain and bias of a fixed policy as affine functions of lam."""

    def __init__(self, model, policy):
        P, r = chain_of(model, policy)
        self.model, self.policy = model, policy
        self.g_r, self.b_r = policy_gain(P, r)
        self.g_c, self.b_c = policy_gain(P, policy.astype(float))

    def solution(self, lam):
        """PlannerSolution at lam, or None if the policy is not greedy there."""
        m = self.model
        g = self.g_r - lam * self.g_c
        Q = _q_from_bias(m, lam, self.b_r - lam * self.b_c, g)
        if not np.array_equal(greedy(Q), self.policy):
            return None
        V = Q.max(axis=1)
        resid = float(np.max(np.abs(V + g - (_reward(m, lam) + (m.transitions @ V).T).max(axis=1))))
        if resid > 1e-8 * max(1.0, float(np.max(np.abs(V)))):
            return None
        return PlannerSolution(float(lam), Q, V, g, min(max(self.g_c, 0.0), 1.0), self.policy, resid, 0)


def sweep(model, bracket, resolution=0.05):
    lo, hi = bracket
    n = max(2, int(math.ceil((hi - lo) / resolution)) + 1)
    grid = np.linspace(lo, hi, n)
    sols = []
    cur = None
    for lam in grid:
        s = cur.solution(lam) if cur is not None else None
        if s is None:
            s = solve_single_arm(model, lam, method="pi", init_policy=None if cur is None else cur.policy)
            cur = _AffinePolicy(model, s.greedy_policy)
        sols.append(s)

    def solve_at(lam, init):
        return solve_single_arm(model, lam, method="pi", init_policy=init).greedy_policy

    breaks = []

    def refine(a, pa, b, pb):
        if b - a <= BREAK_TOL:
            breaks.append(_snap(model, pa, pb, 0.5 * (a + b)))
            return
        m = 0.5 * (a + b)
        pm = solve_at(m, pa)
        if not np.array_equal(pm, pa):
            refine(a, pa, m, pm)
        if not np.array_equal(pm, pb):
            refine(m, pm, b, pb)

    for i in range(n - 1):
        pa, pb = sols[i].greedy_policy, sols[i + 1].greedy_policy
        if not np.array_equal(pa, pb):
            refine(grid[i], pa, grid[i + 1], pb)
    breaks = np.array(sorted(breaks))
    edges = np.concatenate(([lo], breaks, [hi]))
    segments = []
    for a, b in zip(edges[:-1], edges[1:]):
        s = solve_single_arm(model, 0.5 * (a + b), method="pi")
        segments.append(Segment(float(a), float(b), s.greedy_policy, s.activation_rate))
    return Sweep(model, (float(lo), float(hi)), grid, sols, breaks, segments)


@dataclass(frozen=True, eq=False)
class DualCurve:
    lambdas: np.ndarray
    f: np.ndarray
    fprime: np.ndarray
    breakpoints: np.ndarray
    lambda_star: float
    flat_interval: tuple
    bracket: tuple
    sweeps: tuple = field(repr=False)

    def policies_at(self, lam):
        return [sw.segment_at(lam).policy for sw in self.sweeps]


def dual_curve(instance, lambda_range=None, grid_resolution=0.05):
    """Sample f(lam) = sum_i g_i(lam) + N lam and locate lam* and the flat interval."""
    models = instance.models
    counts = instance.counts
    N = instance.budget
    lo, hi = lambda_range if lambda_range is not None else default_bracket(models)
    lo, hi = expand_bracket(models, float(lo), float(hi))
    sweeps = tuple(sweep(m, (lo, hi), grid_resolution) for m in models)
    grid = sweeps[0].grid
    g = np.array([[s.gain for s in sw.grid_solutions] for sw in sweeps])
    h = np.array([[s.activation_rate for s in sw.grid_solutions] for sw in sweeps])
    f = counts @ g + N * grid
    fprime = N - counts @ h

    # merge per-class breakpoints; within each merged segment all policies are constant
    bps = np.unique(np.concatenate([sw.breakpoints for sw in sweeps]))
    edges = np.concatenate(([lo], bps, [hi]))
    mids = 0.5 * (edges[:-1] + edges[1:])
    seg_fp = np.array([N - sum(c * sw.segment_at(m).activation_rate for c, sw in zip(counts, sweeps))
                       for m in mids])
    zero = np.flatnonzero(np.abs(seg_fp) <= 1e-9)
    if zero.size:
        j = int(zero[0])
        flat = (float(edges[j]), float(edges[j + 1]))
        lam_star = 0.5 * (flat[0] + flat[1])
    else:
        j = int(np.flatnonzero(seg_fp > 0)[0])
        if j == 0:
            raise PlannerError("f' positive on the leftmost segment; bracket is wrong")
        lam_star = float(edges[j])
        flat = (float(edges[j - 1]), float(edges[j + 1]))
    return DualCurve(grid, f, fprime, bps, float(lam_star), flat, (lo, hi), sweeps)


def dual_value(instance, lam):
    sols = [solve_single_arm(m, lam) for m in instance.models]
    return float(instance.counts @ np.array([s.gain for s in sols]) + instance.budget * lam)


def gain_indices(instance, lam=None, curve=None):
    """Per-class W(s) = Q(s, 1, lam) - Q(s, 0, lam); lam defaults to lam*."""
    if lam is None:
        curve = curve or dual_curve(instance)
        lam = curve.lambda_star
    values = []
    for m in instance.models:
        values.append(solve_single_arm(m, lam).index)
    return IndexTable.for_instance(instance, values, kind="gain", lam=float(lam))


@dataclass(frozen=True)
class Zero:
    lam: float
    kind: str  # "down" (+ to -), "up" (- to +), "touch", "interval"


@dataclass(frozen=True, eq=False)
class IndexabilityCertificate:
    model_name: str
    labels: tuple
    zeros: tuple  # per state: tuple of Zero
    monotone: bool
    violations: tuple
    bracket: tuple

    @property
    def indexable(self):
        return not self.violations

    @property
    def whittle(self):
        out = np.full(len(self.labels), np.nan)
        for s, zs in enumerate(self.zeros):
            if len(zs) == 1 and zs[0].kind == "down":
                out[s] = zs[0].lam
        return out

    def crossings(self, state_label):
        return [z.lam for z in self.zeros[self.labels.index(state_label)]]

    def to_dict(self):
        return {
            "schema": "ginoq.certificate/1",
            "arm": self.model_name,
            "indexable": self.indexable,
            "passive_sets_monotone": self.monotone,
            "bracket": list(self.bracket),
            "states": {
                str(lbl): [{"lambda": z.lam, "kind": z.kind} for z in zs]
                for lbl, zs in zip(self.labels, self.zeros)
            },
            "whittle": {str(l): (None if np.isnan(w) else float(w))
                        for l, w in zip(self.labels, self.whittle)},
            "violations": list(self.violations),
        }

    def __str__(self):
        head = "indexable" if self.indexable else "NOT indexable"
        lines = [f"arm {self.model_name!r}: {head}"]
        for lbl, zs in zip(self.labels, self.zeros):
            pts = ", ".join(f"{z.lam:.6g}" + ("" if z.kind == "down" else f" ({z.kind})") for z in zs)
            lines.append(f"  state {lbl}: {len(zs)} zero(s) at [{pts}]")
        lines += [f"  ! {v}" for v in self.violations]
        return "\n".join(lines)


def _state_zeros(sw, coeffs, s):
    zs = []
    segs = sw.segments
    for j, (seg, (A, B)) in enumerate(zip(segs, coeffs)):
        a, b = A[s], B[s]
        if abs(a) <= ZERO_TOL and abs(b) <= ZERO_TOL:
            zs.append(Zero(0.5 * (seg.lo + seg.hi), "interval"))
            continue
        if abs(b) > 1e-14:
            z = -a / b
            if seg.lo + 1e-9 < z < seg.hi - 1e-9:
                zs.append(Zero(float(z), "down" if b < 0 else "up"))
        if j + 1 < len(segs):
            bp = seg.hi
            if abs(a + b * bp) <= ZERO_TOL:
                A2, B2 = coeffs[j + 1]
                left, right = -np.sign(b), np.sign(B2[s])
                loc = float(-a / b) if abs(b) > 1e-14 else bp
                if left > 0 and right < 0:
                    kind = "down"
                elif left < 0 and right > 0:
                    kind = "up"
                else:
                    kind = "touch"
                zs.append(Zero(loc, kind))
    merged = []
    for z in zs:
        if merged and abs(z.lam - merged[-1].lam) < 1e-7:
            continue
        merged.append(z)
    return tuple(merged)


def whittle_indices(model, lambda_range=None, resolution=0.05):
    """Locate every zero of W(s, lam) and certify indexability."""
    lo, hi = lambda_range if lambda_range is not None else default_bracket([model])
    lo, hi = expand_bracket([model], float(lo), float(hi))
    sw = sweep(model, (lo, hi), resolution)
    coeffs = [affine_index(model, seg.policy) for seg in sw.segments]
    zeros = tuple(_state_zeros(sw, coeffs, s) for s in range(model.state_count))

    monotone = True
    violations = []
    for a, b in zip(sw.segments[:-1], sw.segments[1:]):
        grew = np.flatnonzero((a.policy == 0) & (b.policy == 1))
        if grew.size:
            monotone = False
            lbls = [model.labels[s] for s in grew]
            violations.append(f"passive set loses states {lbls} at lam={a.hi:.6g}")
    for lbl, zs in zip(model.labels, zeros):
        if len(zs) != 1:
            violations.append(f"state {lbl} has {len(zs)} zeros")
        elif zs[0].kind != "down":
            violations.append(f"state {lbl} zero at {zs[0].lam:.6g} is of kind {zs[0].kind}")
    return IndexabilityCertificate(model.name, model.labels, zeros, monotone, tuple(violations), (lo, hi))


def whittle_table(instance, certificates=None, resolution=0.05):
    """Whittle index table (NaN where a state has no unique index)."""
    certs = certificates or [whittle_indices(m, resolution=resolution) for m in instance.models]
    return IndexTable.for_instance(instance, [c.whittle for c in certs], kind="whittle")


@dataclass(frozen=True, eq=False)
class UpperBound:
    value: float
    lambda_star: float
    policy_left: tuple
    policy_right: tuple
    mix: float  # fraction of arms per class following policy_left

    def to_dict(self):
        return {
            "schema": "ginoq.upper_bound/1",
            "value": self.value,
            "lambda_star": self.lambda_star,
            "policy_left": [p.tolist() for p in self.policy_left],
            "policy_right": [p.tolist() for p in self.policy_right],
            "mix": self.mix,
        }


def relaxed_upper_bound(instance, curve=None):
    """f(lam*) and the per-arm greedy policies either side of lam*."""
    curve = curve or dual_curve(instance)
    lam = curve.lambda_star
    value = dual_value(instance, lam)
    lo, hi = curve.flat_interval
    if curve.lambda_star in curve.breakpoints:
        left_l, right_l = 0.5 * (lo + lam), 0.5 * (lam + hi)
    else:
        left_l = right_l = lam
    left = tuple(sw.segment_at(left_l).policy for sw in curve.sweeps)
    right = tuple(sw.segment_at(right_l).policy for sw in curve.sweeps)
    N, counts = instance.budget, instance.counts
    hl = sum(c * sw.segment_at(left_l).activation_rate for c, sw in zip(counts, curve.sweeps))
    hr = sum(c * sw.segment_at(right_l).activation_rate for c, sw in zip(counts, curve.sweeps))
    mix = 1.0 if abs(hl - hr) < 1e-12 else float(np.clip((N - hr) / (hl - hr), 0.0, 1.0))
    return UpperBound(value, lam, left, right, mix)
