"""Independent reference computations used by the tests."""

import itertools

import numpy as np


def stationary(P):
    S = P.shape[0]
    A = np.vstack([P.T - np.eye(S), np.ones(S)])
    b = np.zeros(S + 1)
    b[-1] = 1.0
    return np.linalg.lstsq(A, b, rcond=None)[0]


def brute_force_gain(model, lam):
    """max over all deterministic policies of the stationary average of r - lam*a."""
    S = model.state_count
    best = -np.inf
    for pol in itertools.product((0, 1), repeat=S):
        pol = np.array(pol)
        P = model.transitions[pol, np.arange(S)]
        r = model.reward[np.arange(S), pol] - lam * pol
        best = max(best, float(stationary(P) @ r))
    return best


def random_arm(rng, S, sparse=False):
    from ginoq.arms import ArmModel, validate_arm

    while True:
        P = rng.dirichlet(np.ones(S) * 0.7, size=(2, S))
        if sparse:
            P = np.where(rng.random(P.shape) < 0.4, 0.0, P)
            P[..., 0] += 1e-3
            P /= P.sum(axis=2, keepdims=True)
        arm = ArmModel(rng.uniform(-5, 5, size=(S, 2)), P)
        if validate_arm(arm).passed:
            return arm
