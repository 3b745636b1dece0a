import pytest

_CRITERIA = []


@pytest.fixture
def record_criterion():
    """Record a PASS/FAIL line for an acceptance criterion."""

    def record(number, passed, detail):
        _CRITERIA.append((number, bool(passed), detail))
        print(f"CRITERION {number}: {'PASS' if passed else 'FAIL'} - {detail}")
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, detail in sorted(_CRITERIA):
        terminalreporter.write_line(f"CRITERION {number:>2}: {'PASS' if passed else 'FAIL'} - {detail}")
