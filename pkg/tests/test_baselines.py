import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import resp
from oracles import brute_pool_selection
from slotstack.baselines import (
    PrCurve, VotingConfig, learn_threshold, oracle_threshold, pool_size, pr_curve, union_ensemble,
    voting_ensemble,
)
from slotstack.model import Judgment, KeyEntry, group_candidates


def test_union_list_and_single():
    lst = group_candidates([resp("Q", "per:children", "a", f"c{i}") for i in range(5)])
    assert len(union_ensemble(lst)) == 5
    single = group_candidates([resp("Q", "per:age", "a", "40", conf=0.9), resp("Q", "per:age", "b", "41", conf=0.7)])
    assert [c.fill_norm for c in union_ensemble(single)] == ["40"]
    lone = group_candidates([resp("Q", "per:age", "a", "40", conf=0.01)])
    assert len(union_ensemble(lone)) == 1


def test_voting_boundaries():
    lines = [resp("Q", "per:children", f"s{i}", "x") for i in range(3)] + \
            [resp("Q", "per:children", f"s{i}", "y") for i in range(10)]
    cands = group_candidates(lines)
    assert {c.fill_norm for c in voting_ensemble(cands, 3)} == {"x", "y"}
    assert {c.fill_norm for c in voting_ensemble(cands, 4)} == {"y"}
    assert {c.fill_norm for c in voting_ensemble(cands, 10)} == {"y"}
    assert voting_ensemble(cands, 1) == union_ensemble(cands)
    assert pool_size(cands) == 10


def test_voting_config_range():
    VotingConfig(3, 10)
    with pytest.raises(ValueError):
        VotingConfig(0, 10)
    with pytest.raises(ValueError):
        VotingConfig(11, 10)


def _fixture_k3():
    """10 systems; gold fills are produced by 3..10 systems, wrong ones by 1..2."""
    lines, key = [], []
    for q in range(6):
        for j, n in enumerate((3, 5, 10)):
            f = f"g{j}"
            lines += [resp(f"Q{q}", "per:children", f"s{i}", f) for i in range(n)]
            key.append(KeyEntry(f"Q{q}", "per:children", f, Judgment.CORRECT))
        for j, n in enumerate((1, 2, 2)):
            f = f"w{j}"
            lines += [resp(f"Q{q}", "per:children", f"s{i}", f) for i in range(n)]
            key.append(KeyEntry(f"Q{q}", "per:children", f, Judgment.WRONG))
    return group_candidates(lines), key


def test_learned_threshold_fixture():
    cands, key = _fixture_k3()
    assert learn_threshold(cands, key) == 3
    curve = pr_curve(cands, key)
    assert len(curve.rows) == 10
    assert all(b[2] <= a[2] for a, b in zip(curve.rows, curve.rows[1:]))


def test_ties_and_single_system():
    unanimous = group_candidates([resp("Q", "per:children", s, "x") for s in "abc"])
    key = [KeyEntry("Q", "per:children", "x", Judgment.CORRECT)]
    assert learn_threshold(unanimous, key) == 1
    solo = group_candidates([resp("Q", "per:children", "a", "x")])
    assert learn_threshold(solo, key) == 1
    with pytest.raises(ValueError):
        learn_threshold([], key)


def test_oracle_labeled_and_dominant():
    cands, key = _fixture_k3()
    k, curve = oracle_threshold(cands, key)
    assert curve.oracle and curve.to_csv().startswith("# oracle")
    assert not PrCurve(curve.rows).to_csv().startswith("#")
    assert curve.rows[k - 1][3] == max(r[3] for r in curve.rows)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.sampled_from(["Q1", "Q2"]), st.sampled_from(["per:children", "per:age"]),
                          st.sampled_from(["s1", "s2", "s3", "s4"]), st.sampled_from("abcd"), st.floats(0, 1)),
                min_size=1, max_size=40))
def test_voting_matches_counting(rows):
    cands = group_candidates([resp(q, s, r, f, conf=c) for q, s, r, f, c in rows])
    for k in range(1, pool_size(cands) + 1):
        assert sorted(c.key for c in voting_ensemble(cands, k, resolve_single=False)) == \
            brute_pool_selection(cands, k)
