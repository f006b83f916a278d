import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance criterion -> list of (part, passed, detail); printed once per criterion at the end
_CRITERIA: dict[int, list] = {}
CRITERION_COUNT = 10


@pytest.fixture
def criterion_log():
    def record(number: int, part: str, passed: bool, detail: str = ""):
        _CRITERIA.setdefault(number, []).append((part, bool(passed), detail))

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    tr = terminalreporter
    tr.write_sep("=", "acceptance criteria")
    for n in range(1, CRITERION_COUNT + 1):
        parts = _CRITERIA.get(n)
        if not parts:
            tr.write_line(f"criterion {n:2d}: NOT RUN")
            continue
        failed = [p for p in parts if not p[1]]
        if failed:
            what = "; ".join(f"{p}: {d}" if d else p for p, _, d in failed)
            tr.write_line(f"criterion {n:2d}: FAIL ({len(parts) - len(failed)}/{len(parts)} parts pass; failing {what})")
        else:
            tr.write_line(f"criterion {n:2d}: PASS ({len(parts)} parts)")
