import pytest

ACCEPTANCE: dict[int, str] = {}


@pytest.fixture
def gate():
    """Record one pass/fail line for an acceptance criterion."""

    def record(number: int, name: str, ok: bool, detail: str) -> None:
        ACCEPTANCE[number] = f"criterion {number} {name}: {'PASS' if ok else 'FAIL'} ({detail})"

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance gate")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
