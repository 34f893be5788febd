import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- acceptance summary -------------------------------------------------------

ACCEPTANCE: dict[str, list[tuple[bool, str]]] = {}


def record(criterion: str, ok: bool, detail: str):
    """Register one part of an acceptance criterion for the end-of-run summary."""
    ACCEPTANCE.setdefault(criterion, []).append((bool(ok), detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for crit in sorted(ACCEPTANCE, key=lambda c: int(c[1:])):
        parts = ACCEPTANCE[crit]
        status = "PASS" if all(ok for ok, _ in parts) else "FAIL"
        terminalreporter.write_line(f"{crit} {status}: " + "; ".join(d for _, d in parts))
