import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from vevp.experiments import EXAMPLE1_SIDES
from vevp.mesh import generate_rectangle

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", deadline=None, max_examples=300)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

ALL_CLAMPED = {"left": ("D", "A"), "right": ("D", "A"), "bottom": ("D", "A"), "top": ("D", "A")}


@pytest.fixture
def unit_square():
    """Two triangles, every side clamped and grounded."""
    return generate_rectangle(1.0, 1.0, 1, 1, ALL_CLAMPED)


@pytest.fixture
def ex1_mesh():
    return generate_rectangle(1.0, 1.0, 8, 8, EXAMPLE1_SIDES)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


_CRITERIA: dict[int, str] = {}


def record_criterion(number: int, status: str, detail: str) -> None:
    """Print and remember one acceptance line for the terminal summary."""
    line = f"CRITERION {number} {status}: {detail}"
    _CRITERIA[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[n])
