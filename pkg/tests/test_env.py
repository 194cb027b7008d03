import numpy as np
import pytest

from ginoq.env import (BudgetError, RandomPolicy, RmabEnv, TablePolicy, evaluate_policy, run_policy,
                       summarize)
from ginoq.policy import IndexPolicy, IndexTable


def test_budget_enforced(nonindexable):
    env = RmabEnv(nonindexable.instance, seed=0)
    env.reset()
    with pytest.raises(BudgetError, match="budget violated"):
        env.step(np.ones(10, dtype=int))


def test_state_is_immutable(nonindexable):
    s = RmabEnv(nonindexable.instance, seed=0).reset()
    with pytest.raises(ValueError):
        s.states[0] = 1


def _reference_run(inst, policy_fn, horizon, seed):
    env = RmabEnv(inst, seed)
    state = env.reset()
    total = []
    for _ in range(horizon):
        res = env.step(policy_fn(state.states))
        state = res.state
        total.append(res.total)
    return np.array(total)


def test_kernel_matches_reference_simulator(nonindexable):
    inst = nonindexable.instance
    pol = IndexPolicy(IndexTable.for_instance(inst, [np.array([-2.0, 0.0, 2.0, 2.1, 2.2, 2.3])]), inst)
    fast = run_policy(inst, pol, 500, seed=7).rewards
    slow = _reference_run(inst, lambda s: pol.select(s, inst.budget), 500, 7)
    assert np.array_equal(fast, slow)


def test_random_policy_matches_reference(nonindexable):
    inst = nonindexable.instance
    fast = run_policy(inst, RandomPolicy(inst, 3), 300, seed=3).rewards
    ref = RandomPolicy(inst, 3)
    slow = _reference_run(inst, ref.select, 300, 3)
    assert np.array_equal(fast, slow)


def test_runs_are_deterministic(nonindexable):
    inst = nonindexable.instance
    a = run_policy(inst, RandomPolicy(inst, 1), 1000, seed=1)
    b = run_policy(inst, RandomPolicy(inst, 1), 1000, seed=1)
    assert np.array_equal(a.rewards, b.rewards)
    assert np.all(a.activations == inst.budget)


def test_table_policy_can_be_unconstrained(nonindexable):
    inst = nonindexable.instance
    pol = TablePolicy.from_class_policies(inst, [np.ones(6, dtype=int)])
    m = run_policy(inst, pol, 50, seed=0, constrained=False)
    assert np.all(m.activations == inst.M)


def test_summary_and_csv(tmp_path, nonindexable):
    inst = nonindexable.instance
    res = evaluate_policy(inst, lambda s: RandomPolicy(inst, s), 200, range(4))
    assert res.n_seeds == 4 and res.ci_low <= res.mean <= res.ci_high
    assert summarize([1.0, 1.0]).stderr == 0.0
    m = run_policy(inst, RandomPolicy(inst, 0), 20, seed=0)
    m.to_csv(tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "# schema: ginoq.trajectory/1" and lines[1] == "t,total_reward,activation_count"


def test_uniform_initial_state_distribution(nonindexable):
    from ginoq.env import arm_streams, initial_states
    inst = nonindexable.instance
    s = np.concatenate([initial_states(inst, arm_streams(k, inst.M)) for k in range(300)])
    counts = np.bincount(s, minlength=6) / len(s)
    assert np.all(np.abs(counts - 1 / 6) < 0.03)
