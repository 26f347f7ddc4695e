import pytest

_VERDICTS: dict[int, str] = {}


@pytest.fixture
def criterion():
    """Record one acceptance verdict line; printed in the terminal summary."""

    def record(number: int, title: str, passed: bool, detail: str) -> bool:
        _VERDICTS[number] = f"criterion {number:2d} {'PASS' if passed else 'FAIL'}  {title}: {detail}"
        print(_VERDICTS[number])
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for k in sorted(_VERDICTS):
            terminalreporter.write_line(_VERDICTS[k])
