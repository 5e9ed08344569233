import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from abuild.toy import toy_world  # noqa: E402

# (criterion number, passed, summary) rows filled in by test_acceptance.py
ACCEPTANCE_RESULTS: list[tuple[int, bool, str]] = []


@pytest.fixture
def world():
    return toy_world()


@pytest.fixture
def report():
    def record(criterion: int, passed: bool, summary: str) -> None:
        line = f"{'PASS' if passed else 'FAIL'} criterion {criterion}: {summary}"
        ACCEPTANCE_RESULTS.append((criterion, passed, summary))
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, passed, summary in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'} criterion {criterion}: {summary}")
