import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", max_examples=100, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def rel_err(a, b):
    return abs(a - b) / max(abs(b), 1e-300)


PI = math.pi


_ACCEPTANCE: dict[int, str] = {}


@pytest.fixture
def report():
    """Record the outcome line of an acceptance criterion for the end-of-run summary."""

    def add(number: int, passed: bool, detail: str) -> bool:
        _ACCEPTANCE[number] = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        return passed

    return add


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[k])
