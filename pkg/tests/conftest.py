import pytest

_RESULTS = {}


@pytest.fixture
def criterion():
    """Record the outcome of an acceptance criterion for the summary table."""

    def record(name, passed, detail=""):
        _RESULTS[name] = (bool(passed), detail)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_RESULTS, key=lambda k: int(k[1:])):
        passed, detail = _RESULTS[name]
        terminalreporter.write_line(f"{name} {'PASS' if passed else 'FAIL'} {detail}".rstrip())
