import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one summary line per acceptance criterion, filled by tests/test_acceptance.py
ACCEPTANCE: dict = {}


def record(criterion, check, ok, detail):
    ACCEPTANCE.setdefault(criterion, []).append((check, bool(ok), detail))
    return bool(ok)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for criterion in sorted(ACCEPTANCE):
        checks = ACCEPTANCE[criterion]
        verdict = "PASS" if all(ok for _, ok, _ in checks) else "FAIL"
        parts = "; ".join(f"{c}{'' if ok else ' [FAIL]'}: {d}" for c, ok, d in checks)
        terminalreporter.write_line(f"{criterion} {verdict}  {parts}")
