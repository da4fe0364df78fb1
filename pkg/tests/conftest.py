import pytest

ACCEPTANCE_VERDICTS: list[str] = []


@pytest.fixture(scope="session")
def acceptance_log():
    """Collector for per-criterion verdict lines, echoed after the run."""
    return ACCEPTANCE_VERDICTS


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_VERDICTS:
        terminalreporter.section("acceptance verdicts")
        for line in ACCEPTANCE_VERDICTS:
            terminalreporter.write_line(line)
