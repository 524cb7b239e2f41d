import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from hagrisk import TABLE2_PARAMS, TABLE2_THRESHOLD, simulate_panel

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def table2_panel():
    data, truth = simulate_panel(TABLE2_PARAMS, 15, TABLE2_THRESHOLD, seed=1)
    return data, truth


@pytest.fixture
def rng():
    return np.random.default_rng(20240517)


ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def record():
    """Log one PASS/FAIL line for an acceptance criterion and return the verdict."""

    def _record(label, ok, detail):
        ACCEPTANCE_LINES.append(f"[{'PASS' if ok else 'FAIL'}] {label}: {detail}")
        return ok

    return _record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
