import pytest

# criterion id -> (passed, detail), filled by test_acceptance.py
VERDICTS: dict = {}


def record(criterion: int, name: str, passed: bool, detail: str) -> None:
    line = f"[criterion {criterion}] {'PASS' if passed else 'FAIL'} {name}: {detail}"
    VERDICTS[criterion] = line
    print(line)


@pytest.fixture
def verdict():
    return record


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(VERDICTS):
        terminalreporter.write_line(VERDICTS[key])
