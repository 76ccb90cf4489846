import pytest

_RESULTS_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_RESULTS_KEY] = []


@pytest.fixture
def criterion(request):
    """Record one acceptance line: ``criterion(number, passed, detail)``."""
    results = request.config.stash[_RESULTS_KEY]

    def record(number: int, passed: bool, detail: str) -> None:
        results.append((number, passed, detail))

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = sorted(config.stash.get(_RESULTS_KEY, []))
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, detail in results:
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] criterion {number:2d}: {detail}")
