"""Shared fixtures and the acceptance summary printed after a run."""

import re

import numpy as np
import pytest

_CRITERIA: dict[str, dict] = {}


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    crit = dict(report.user_properties).get("criterion")
    if crit is None:
        return
    cid, title = crit
    entry = _CRITERIA.setdefault(cid, {"title": title, "passed": 0, "failed": []})
    if report.passed:
        entry["passed"] += 1
    elif not report.skipped:
        entry["failed"].append(report.nodeid.split("::")[-1])


def pytest_collection_modifyitems(items):
    for item in items:
        m = item.get_closest_marker("criterion")
        if m is not None:
            item.user_properties.append(("criterion", tuple(m.args)))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for cid in sorted(_CRITERIA, key=lambda c: (int(re.match(r"\d+", c).group()), c)):
        e = _CRITERIA[cid]
        status = "FAIL" if e["failed"] else "PASS"
        detail = f" (failing: {', '.join(e['failed'])})" if e["failed"] else ""
        tr.write_line(f"{status} criterion {cid}: {e['title']}{detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
