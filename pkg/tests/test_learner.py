import csv
import math

import numpy as np
import pytest

from ginoq.experiments import build_nonindexable_instance
from ginoq.learner import GinoQConfig, step_sizes, train, write_diagnostics
from ginoq.planner import dual_curve


def test_timescales_separate():
    ts = np.array([10**k for k in range(2, 8)])  # multiples of c4
    a, b, th = zip(*(step_sizes(int(t), None, 1.0, 1.0, 0.5, 100) for t in ts))
    assert np.all(np.diff(np.array(b) / np.array(a)) < 0)
    assert np.all(np.diff(np.array(th) / np.array(b)) < 0)
    assert b[-1] / a[-1] < 0.26 and th[-1] / b[-1] < 0.15


def test_rates_capped_and_slow_step_gated():
    a, b, th = step_sizes(1, None, 5.0, 5.0, 1.0, 100)
    assert a == 1.0 and b == 1.0 and th == 0.0
    assert step_sizes(200, None, 1, 1, 1, 100)[2] == pytest.approx(1 / (200 * math.log(200)))


@pytest.mark.parametrize("kw", [{}, {"visit_counts": False}, {"constrained": False},
                                {"class_mode": False}])
def test_kernel_matches_python_reference(nonindexable, kw):
    cfg = GinoQConfig(eval_interval=1000, eval_horizon=50, **kw)
    fast = train(nonindexable.instance, 2500, cfg, seed=5)
    slow = train(nonindexable.instance, 2500, cfg, seed=5, reference=True)
    assert np.array_equal(fast.state.Q, slow.state.Q)
    assert np.array_equal(fast.state.D, slow.state.D)
    assert fast.state.lam == slow.state.lam
    assert fast.diagnostics == slow.diagnostics


def test_class_mode_memory_constant_in_M():
    shapes = {M: train(build_nonindexable_instance(M, M // 2), 10,
                       GinoQConfig(eval_interval=0, eval_horizon=0)).state.Q.shape for M in (4, 40)}
    assert shapes[4] == shapes[40]
    per_arm = train(build_nonindexable_instance(40, 20), 10,
                    GinoQConfig(eval_interval=0, eval_horizon=0, class_mode=False)).state.Q.shape
    assert per_arm[0] == 40


def test_lambda_stays_in_bracket(nonindexable):
    lo, hi = dual_curve(nonindexable.instance).bracket
    res = train(nonindexable.instance, 60_000, GinoQConfig(eval_interval=5_000, eval_horizon=0), seed=0)
    lams = [d.lam for d in res.diagnostics[2:]]
    assert all(lo <= l <= hi for l in lams)


def test_diagnostics_csv(tmp_path, nonindexable):
    res = train(nonindexable.instance, 3000, GinoQConfig(eval_interval=1000, eval_horizon=100), seed=1)
    write_diagnostics(tmp_path / "d.csv", res)
    with open(tmp_path / "d.csv") as fh:
        assert fh.readline().strip() == "# schema: ginoq.diagnostics/1"
        rows = list(csv.reader(fh))
    assert rows[0][:6] == ["algo", "seed", "t", "lambda", "y", "eval_reward"]
    assert rows[0][6:] == [f"W[arm:{s}]" for s in range(1, 7)]
    assert [int(r[2]) for r in rows[1:]] == [0, 1000, 2000, 3000]
