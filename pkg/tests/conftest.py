"""Collects acceptance-criterion verdicts and prints them after the run."""
import pytest

_VERDICTS = {}


@pytest.fixture
def verdict():
    """Record ``(criterion, passed, detail)``; the line is printed in the terminal summary."""
    def record(criterion: int, passed: bool, detail: str):
        line = f"criterion {criterion:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
        _VERDICTS[criterion] = line
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_VERDICTS):
        terminalreporter.write_line(_VERDICTS[key])
