import pytest

ACCEPTANCE_LINES: dict[str, str] = {}


@pytest.fixture
def record_criterion():
    """Store a one-line verdict for an acceptance criterion; printed at session end."""

    def record(key: str, passed: bool, detail: str) -> None:
        ACCEPTANCE_LINES[key] = f"{key}: {'PASS' if passed else 'FAIL'} | {detail}"

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES, key=lambda k: (int(k.split()[1].rstrip("abc")), k)):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
