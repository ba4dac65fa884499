import re

_CRITERION = re.compile(r"::test_(a\d+)_")
_results = {}


def pytest_runtest_logreport(report):
    match = _CRITERION.search(report.nodeid)
    if not match:
        return
    name = match.group(1).upper()
    if report.when == "call":
        _results[name] = "PASS" if report.passed else "FAIL"
    elif report.failed:  # setup/teardown error
        _results[name] = "FAIL"


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_results, key=lambda n: int(n[1:])):
        terminalreporter.write_line(f"{name}: {_results[name]}")
