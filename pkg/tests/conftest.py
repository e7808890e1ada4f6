import numpy as np
import pytest

from gloloc.gpe import GpeParams, SpatialGrid
from gloloc.problems import build_problem


class Harmonic:
    """V = 1/2 w^2 (x - u)^2 on a symmetric grid."""

    def __init__(self, half_width=10.0, n_points=256, omega=1.0):
        self.grid = SpatialGrid.symmetric(half_width, n_points)
        self.omega = omega

    def potential(self, x, u):
        return 0.5 * self.omega**2 * (np.asarray(x) - u) ** 2

    def dV_du(self, x, u):
        return -(self.omega**2) * (np.asarray(x) - u)


class Free:
    def __init__(self, half_width=40.0, n_points=1024):
        self.grid = SpatialGrid.symmetric(half_width, n_points)

    def potential(self, x, u):
        return np.zeros(np.broadcast(np.asarray(x), np.asarray(u)).shape)


@pytest.fixture(scope="session")
def harmonic():
    return Harmonic()


@pytest.fixture(scope="session")
def params():
    return GpeParams(mass=1.0, beta=0.0, dt=1e-3)


@pytest.fixture(scope="session")
def cd_problem():
    return build_problem("CD")


@pytest.fixture(scope="session")
def cs_problem():
    return build_problem("CS")


def gaussian(grid, x0=0.0, sigma=1.0, k0=0.0):
    x = grid.x
    a = np.exp(-((x - x0) ** 2) / (4 * sigma**2) + 1j * k0 * x) / (2 * np.pi * sigma**2) ** 0.25
    return a


# One line per acceptance criterion, printed after the run (pass, fail or skip).
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
