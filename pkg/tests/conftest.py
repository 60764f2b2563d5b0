import contextlib
import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("repo", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "repo"))

_CRITERIA = {}


class CriterionChecks:
    """Collects every sub-check of one acceptance criterion before asserting."""

    def __init__(self, number, title):
        self.number, self.title = number, title
        self.failures = []
        self.notes = []

    def check(self, ok, message):
        self.notes.append(message)
        if not ok:
            self.failures.append(message)

    def close(self):
        assert not self.failures, "; ".join(self.failures)


@contextlib.contextmanager
def criterion(number, title):
    c = CriterionChecks(number, title)
    ok = False
    try:
        yield c
        ok = not c.failures
    finally:
        detail = "; ".join(c.failures) if c.failures else (c.notes[-1] if c.notes else "")
        _CRITERIA[number] = (title, ok, detail)
        line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}"
        print(line + (f"  [{detail}]" if detail else ""))
    c.close()


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        title, ok, detail = _CRITERIA[n]
        line = f"criterion {n:2d} {'PASS' if ok else 'FAIL'}  {title}"
        if not ok:
            line += f"  [{detail}]"
        terminalreporter.write_line(line)
