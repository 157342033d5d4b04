"""Print one verdict line per acceptance criterion after the run.

Acceptance tests attach ``("acceptance", line)`` through ``record_property``;
a test that fails before recording anything is reported by its name.
"""

_LINES = []


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and not report.passed):
        text = dict(report.user_properties).get("acceptance", report.nodeid.split("::")[-1])
        _LINES.append(f"{'PASS' if report.passed else 'FAIL'} {text}")


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in _LINES:
            terminalreporter.write_line(line)
