import math

import numpy as np
import pytest

from saiga.analytic import TI6AL4V, LaserSpec, ScanPath
from saiga.splines import elevate_degree, quarter_cylinder_part

# single pulse 1.1 mm from the cylinder axis at 45 degrees, on the top surface
PULSE_XY = (2e-3 - 1.1e-3 * math.sqrt(0.5), 1.1e-3 * math.sqrt(0.5))


@pytest.fixture(scope="session")
def part():
    return quarter_cylinder_part()


@pytest.fixture(scope="session")
def part_p2(part):
    return elevate_degree(part, (2, 2, 2))


@pytest.fixture(scope="session")
def laser():
    return LaserSpec(power=82.5, speed=0.5, spot_radius=20e-6, absorptivity=0.77)


@pytest.fixture(scope="session")
def mat():
    return TI6AL4V


@pytest.fixture(scope="session")
def pulse_path():
    return ScanPath([PULSE_XY], z=2e-3)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for key in sorted(RESULTS, key=str):
            terminalreporter.write_line(RESULTS[key])
