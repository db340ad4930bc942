from __future__ import annotations

import re

import pytest

from lazyctrl.traffic import generate_synthetic_trace

_CRITERION = re.compile(r"test_acceptance\.py::test_criterion_(\d+)_(\w+)")
_outcomes: dict[tuple[int, str], tuple[str, str]] = {}


@pytest.fixture(scope="session")
def desk_trace():
    """Desk-scale trace shared by the heavier tests: 50 switches, 1000 hosts, 10^5 flows."""
    return generate_synthetic_trace(50, 1000, (20, 100), p=90, q=10, duration=86_400,
                                    n_flows=100_000, seed=1)


def pytest_runtest_logreport(report):
    m = _CRITERION.search(report.nodeid)
    if m is None:
        return
    key = (int(m.group(1)), m.group(2))
    if report.when == "call" or report.outcome != "passed":
        if report.outcome == "skipped" and hasattr(report, "wasxfail"):
            outcome = "XFAIL"
        else:
            outcome = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[report.outcome]
        detail = dict(report.user_properties).get("detail", "")
        if _outcomes.get(key, ("",))[0] != "FAIL":
            _outcomes[key] = (outcome, detail)


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for (num, name), (outcome, detail) in sorted(_outcomes.items()):
        line = f"criterion {num:2d} {name.replace('_', ' '):<32} {outcome:<5}"
        terminalreporter.write_line(f"{line} {detail}".rstrip())
