from __future__ import annotations

import pytest

# criterion name -> (passed, note), filled as acceptance tests finish
CRITERIA: dict[str, tuple[bool, str]] = {}


def pytest_configure(config) -> None:
    config.addinivalue_line("markers", "criterion(name): an acceptance criterion reported in the summary")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when != "call" and not report.failed:
        return
    name = marker.args[0]
    note = getattr(item, "criterion_note", "")
    if report.failed and report.when != "call":
        note = f"{report.when} error"
    CRITERIA[name] = (report.passed, note)


def pytest_terminal_summary(terminalreporter) -> None:
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name, (ok, note) in CRITERIA.items():
        line = f"{'PASS' if ok else 'FAIL'}  {name}"
        terminalreporter.write_line(line + (f"  [{note}]" if note else ""))
