from __future__ import annotations

# Each acceptance test carries @pytest.mark.acceptance("<criterion name>"); the
# terminal summary prints one PASS/FAIL line per criterion.

_criteria: dict[str, str] = {}
_failed: set[str] = set()
_seen: set[str] = set()


def pytest_collection_modifyitems(config, items):
    for item in items:
        mark = item.get_closest_marker("acceptance")
        if mark is not None and mark.args:
            _criteria[item.nodeid] = mark.args[0]


def pytest_runtest_logreport(report):
    name = _criteria.get(report.nodeid)
    if name is None:
        return
    if report.when == "call" or report.failed:
        _seen.add(name)
    if report.failed:
        _failed.add(name)


def pytest_terminal_summary(terminalreporter):
    if not _seen:
        return
    terminalreporter.section("acceptance criteria")
    for name in dict.fromkeys(_criteria.values()):
        if name not in _seen:
            continue
        terminalreporter.write_line(f"{'FAIL' if name in _failed else 'PASS'}  {name}")
