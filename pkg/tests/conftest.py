import pytest

from slotstack.model import Provenance, ResponseLine

CRITERIA = {
    "AC1": "provenance formulas match hand-derived DPS/OP values",
    "AC2": "aggregation solver matches grid brute force and KKT",
    "AC3": "meta-classifier optimizer laws",
    "AC4": "baseline laws on generated pools",
    "AC5": "stacking beats best single and oracle voting (>= 8/10 seeds)",
    "AC6": "dps+op features do not reduce mean F1",
    "AC7": "run/key file round-trips",
    "AC8": "pipeline artifacts are SHA-256 identical across runs",
    "AC9": "NIL cluster merging",
}

_outcomes: dict[str, list[bool]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(id): acceptance criterion this test checks")


def pytest_runtest_logreport(report):
    marks = getattr(report, "criteria", None)
    if not marks:
        return
    if report.when == "call" or (report.when == "setup" and not report.passed):
        for cid in marks:
            _outcomes.setdefault(cid, []).append(report.passed)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    rep.criteria = [m.args[0] for m in item.iter_markers("criterion")]


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(_outcomes):
        ok = all(_outcomes[cid])
        n = len(_outcomes[cid])
        terminalreporter.write_line(f"{cid} {'PASS' if ok else 'FAIL'}  {CRITERIA.get(cid, '')}  ({n} checks)")


def resp(qid, slot, run, fill, doc="D1", spans=((0, 5),), conf=1.0, rel_doc=None, rel_spans=None):
    """Compact ResponseLine builder for tests."""
    fp = Provenance(doc, tuple(spans))
    rp = Provenance(rel_doc or doc, tuple(rel_spans or spans))
    return ResponseLine(qid, slot, run, rp, fill, fp, conf)


@pytest.fixture
def make_resp():
    return resp
