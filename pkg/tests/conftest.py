import pytest

_ACCEPTANCE_LINES = []


def record_criterion(criterion, passed, detail):
    """Log one acceptance line; returns ``passed`` so callers can assert on it."""
    line = f"[{'PASS' if passed else 'FAIL'}] {criterion}: {detail}"
    _ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


@pytest.fixture
def criterion():
    return record_criterion


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
