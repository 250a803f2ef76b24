"""Shared fixtures and the acceptance summary printed at the end of the run."""
import numpy as np
import pytest

from kinlab.collision import CollisionModel, VelocityQuadrature
from kinlab.geometry.domains import Ball, Ellipsoid, Superellipsoid

ACCEPTANCE_LINES: list = []


@pytest.fixture
def ball():
    return Ball((1.0,))


@pytest.fixture
def ellipsoid():
    return Ellipsoid((2.0, 1.0, 1.0))


@pytest.fixture
def superellipsoid():
    return Superellipsoid()


@pytest.fixture
def model():
    return CollisionModel()


@pytest.fixture
def coarse_quad():
    return VelocityQuadrature(n_r=8, n_mu=8, n_phi=6)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
