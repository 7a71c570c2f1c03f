import io

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import resp
from slotstack.ingest import load_alias_table
from slotstack.model import Judgment, KeyEntry, Origin
from slotstack.scorer import compare_reports, format_deltas, prf, score, score_triples

C, W = Judgment.CORRECT, Judgment.WRONG


def _key():
    return [KeyEntry("Q", "per:children", f, C) for f in ("a", "b", "c", "d")] + \
           [KeyEntry("Q", "per:children", "z", W)]


def test_hand_arithmetic():
    rep = score_triples([("Q", "per:children", f) for f in ("a", "b", "z")], _key())
    assert (rep.correct, rep.returned, rep.gold) == (2, 3, 4)
    assert rep.precision == pytest.approx(2 / 3) and rep.recall == 0.5
    assert rep.f1 == pytest.approx(0.5714, abs=1e-4)


def test_empty_and_perfect():
    assert score([], _key()).f1 == 0.0
    perfect = score_triples([e.key for e in _key() if e.judgment is C], _key())
    assert perfect.precision == perfect.recall == perfect.f1 == 1.0
    assert prf(0, 0, 0) == (0.0, 0.0, 0.0)


def test_nil_lines_ignored():
    from slotstack.model import ResponseLine
    rep = score([ResponseLine("Q", "per:children", "r"), resp("Q", "per:children", "r", "a")], _key())
    assert rep.returned == 1 and rep.correct == 1


def test_unassessed_counts_as_wrong():
    rep = score_triples([("Q", "per:children", "a"), ("Q", "per:children", "never-seen")], _key())
    assert rep.unassessed == 1 and rep.precision == 0.5


def test_unofficial_drops_manual_rows():
    key = _key() + [KeyEntry("Q", "per:children", "m", C, Origin.MANUAL)]
    run = [("Q", "per:children", "a")]
    assert score_triples(run, key, "official").gold == 5
    assert score_triples(run, key, "unofficial").gold == 4
    with pytest.raises(ValueError):
        score_triples(run, key, "lenient")


def test_alias_classes_count_once():
    table = load_alias_table(io.StringIO("barack obama\tobama\t9\n"))
    key = [KeyEntry("Q", "per:alternate_names", "barack obama", C), KeyEntry("Q", "per:alternate_names", "obama", C)]
    run = [("Q", "per:alternate_names", "barack obama"), ("Q", "per:alternate_names", "obama")]
    plain = score_triples(run, key)
    assert (plain.correct, plain.gold) == (2, 2)
    merged = score_triples(run, key, alias_table=table)
    assert (merged.correct, merged.returned, merged.gold, merged.redundant) == (1, 2, 1, 1)


def test_report_text_and_csv():
    rep = score_triples([("Q", "per:children", "a")], _key())
    assert rep.to_text().splitlines()[-1].startswith("ALL")
    assert rep.to_csv().splitlines()[0] == "slot,correct,returned,gold,precision,recall,f1"


def test_compare_reports():
    a = score_triples([("Q", "per:children", "a")], _key())
    assert all(d == 0 for _, _, d in compare_reports(a, a))
    b = score_triples([("Q", "per:children", f) for f in "ab"] + [("Q2", "per:age", "1")],
                      _key() + [KeyEntry("Q2", "per:age", "1", C)])
    rows = compare_reports(a, b)
    assert {s for s, _, _ in rows} == {"ALL", "per:children", "per:age"}
    assert "\t+0.3500" in format_deltas(rows)
    assert "\t-0.3500" in format_deltas(compare_reports(b, a))
    unofficial = score_triples([], _key(), "unofficial")
    with pytest.raises(ValueError):
        compare_reports(a, unofficial)


@given(st.sets(st.sampled_from("abcdefgz")), st.sets(st.sampled_from("abcdefgz")))
def test_bounds_and_counts(run, gold):
    key = [KeyEntry("Q", "per:children", f, C if f in gold else W) for f in "abcdefgz"]
    rep = score_triples([("Q", "per:children", f) for f in run], key)
    assert rep.correct == len(run & gold)
    assert 0 <= rep.precision <= 1 and 0 <= rep.recall <= 1
    assert min(rep.precision, rep.recall) - 1e-12 <= rep.f1 <= max(rep.precision, rep.recall) + 1e-12
