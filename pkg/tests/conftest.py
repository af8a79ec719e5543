"""Shared fixtures and acceptance-summary reporting for the test suite."""
from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from auglab._rng import tagged_sequence
from auglab.datagen import default_config, sample_domains

settings.register_profile(
    "artifact",
    derandomize=True,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("artifact")

# Acceptance results are collected here so the terminal summary can print one
# pass/fail line per criterion even though pytest captures test stdout.
ACCEPTANCE_LINES: list[str] = []


def record_acceptance(name: str, passed: bool, detail: str) -> None:
    status = "PASS" if passed else "FAIL"
    ACCEPTANCE_LINES.append(f"{name} {status}: {detail}")
    assert passed, f"{name}: {detail}"


def pytest_terminal_summary(terminalreporter, exitstatus, config) -> None:
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_LINES:
        terminalreporter.write_line(line)


@pytest.fixture
def tiny_config():
    """Small-dimensional config so matrix work in unit tests stays instant."""
    return default_config(seed=0, d_obj=2, d_noise=4, d_core=2, d_spu=3)


@pytest.fixture
def small_config():
    """Mid-sized config for checks that need nontrivial block widths."""
    return default_config(seed=1, d_obj=3, d_noise=30, d_core=3, d_spu=20)


@pytest.fixture
def benchmark_config():
    """The full-scale default configuration used by the headline experiments."""
    return default_config(seed=0)


@pytest.fixture
def tiny_domains(tiny_config):
    return sample_domains(tiny_config, 6, tagged_sequence(0, "test|domains"))


@pytest.fixture
def rng():
    return np.random.Generator(np.random.PCG64(1234))
