"""Shared pytest configuration: per-criterion PASS/FAIL lines for the acceptance suite."""

_RESULTS = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance: acceptance criterion (one test per criterion)")


def pytest_runtest_makereport(item, call):
    crit = getattr(getattr(item, "function", None), "criterion", None)
    if crit is None:
        return
    if call.when == "call" or (call.when == "setup" and call.excinfo is not None):
        _RESULTS[crit] = (call.excinfo is None, call.duration)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for (num, title), (ok, secs) in sorted(_RESULTS.items()):
        tr.write_line(f"criterion {num:2d}: {'PASS' if ok else 'FAIL'}  ({secs:5.1f} s)  {title}")
    passed = sum(ok for ok, _ in _RESULTS.values())
    tr.write_line(f"{passed}/{len(_RESULTS)} criteria passed")
