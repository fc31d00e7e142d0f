import pytest

# criterion number -> printed line; filled from test outcomes
ACCEPTANCE_LINES: dict[int, str] = {}
_DETAILS: dict[str, list[str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number and title")


@pytest.fixture
def measured(request):
    """Attach measured values to the criterion line of the calling test."""
    notes = _DETAILS.setdefault(request.node.nodeid, [])
    return notes.append


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when != "call":
        return
    n, title = mark.args
    notes = "; ".join(_DETAILS.get(item.nodeid, []))
    line = f"{'PASS' if rep.passed else 'FAIL'} criterion {n}: {title}" + (f" [{notes}]" if notes else "")
    ACCEPTANCE_LINES[n] = line
    print(f"\n{line}")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
