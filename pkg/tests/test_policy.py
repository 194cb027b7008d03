import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ginoq.policy import IndexPolicy, IndexTable, top_n


def test_ties_go_to_lowest_arm():
    assert sorted(top_n(np.array([1.0, 2.0, 2.0, 2.0]), 2).tolist()) == [1, 2]


@given(st.lists(st.floats(-10, 10), min_size=2, max_size=30), st.data())
def test_top_n_selects_exactly_n(vals, data):
    N = data.draw(st.integers(1, len(vals) - 1))
    ids = top_n(np.array(vals), N)
    assert len(set(ids.tolist())) == N
    mask = np.zeros(len(vals), bool)
    mask[ids] = True
    chosen, rest = np.array(vals)[mask], np.array(vals)[~mask]
    assert chosen.min() >= rest.max()


def test_table_round_trip(tmp_path, nonindexable):
    inst = nonindexable.instance
    t = IndexTable.for_instance(inst, [np.arange(6.0)], kind="learned", lam=0.5, meta={"seed": 3})
    t.save(tmp_path / "t.json")
    u = IndexTable.load(tmp_path / "t.json")
    assert np.array_equal(u.values[0], t.values[0]) and u.lam == 0.5 and u.labels == t.labels


def test_missing_index_names_class_and_state(nonindexable):
    inst = nonindexable.instance
    vals = np.arange(6.0)
    vals[3] = np.nan
    pol = IndexPolicy(IndexTable.for_instance(inst, [vals]), inst)
    with pytest.raises(KeyError, match=r"arm.*4"):
        pol.indices(np.full(inst.M, 3))


def test_policy_selects_budget(nonindexable):
    inst = nonindexable.instance
    pol = IndexPolicy(IndexTable.for_instance(inst, [np.arange(6.0)]), inst)
    a = pol.select(np.array([0, 1, 2, 3, 4, 5, 0, 1, 2, 3]), inst.budget)
    assert a.sum() == inst.budget
    assert a[5] == 1 and a[0] == 0
