import os
import sys

from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("repo", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")

import pytest

_CRITERIA = []


@pytest.fixture
def criterion():
    """record(n, ok, detail): log one acceptance line, then assert it."""
    def record(n, ok, detail):
        line = "criterion %2d: %s  %s" % (n, "PASS" if ok else "FAIL", detail)
        _CRITERIA.append(line)
        print(line)
        assert ok, line
    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_CRITERIA):
            terminalreporter.write_line(line)
