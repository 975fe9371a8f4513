import warnings

import pytest

from srwalk.model import OutsideRangeWarning

CRITERIA: list[str] = []


@pytest.fixture
def report():
    def _report(number, ok, detail):
        CRITERIA.append(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
        return ok

    return _report


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in CRITERIA:
            terminalreporter.write_line(line)


@pytest.fixture(autouse=True)
def _quiet_alpha_warnings():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", OutsideRangeWarning)
        yield
