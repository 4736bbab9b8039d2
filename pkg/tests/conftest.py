import pytest

_LINES = []


@pytest.fixture
def report_line():
    """Record a one-line pass/fail summary that is echoed after the run."""
    def add(text):
        _LINES.append(text)
        print(text)
    return add


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in _LINES:
            terminalreporter.write_line(line)
