"""Shared pytest hooks: one pass/fail line per acceptance criterion at the end of the run."""

_criteria = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(label): acceptance criterion with a printable label")


def pytest_runtest_makereport(item, call):
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    label = mark.args[0]
    if call.when == "call" or (call.when == "setup" and call.excinfo is not None):
        _criteria[item.nodeid] = (label, call.excinfo is None)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for label, ok in _criteria.values():
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {label}")
