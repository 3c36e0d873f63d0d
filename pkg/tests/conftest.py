# tests/conftest.py

import sys
from pathlib import Path

import numpy as np
import pytest

# Add parent directory to path
sys.path.append(str(Path(__file__).parent.parent))

from numerics.eigensolver import GroundState, SolverOptions, infinity_ground_state
from numerics.field import distance_field, rasterize
from numerics.geometry import ConvexDomain


@pytest.fixture
def disc():
    return ConvexDomain.disc((0.0, 0.0), 1.0)


@pytest.fixture
def square():
    return ConvexDomain.square(1.0)


@pytest.fixture
def stadium():
    return ConvexDomain.stadium([(-1.0, 0.0), (1.0, 0.0)], 0.5)


@pytest.fixture
def disc_grid(disc):
    return rasterize(disc, 1.0 / 32.0)


@pytest.fixture
def square_grid(square):
    return rasterize(square, 1.0 / 32.0)


@pytest.fixture
def disc_distance(disc, disc_grid):
    return GroundState.from_field(distance_field(disc, disc_grid), disc)


@pytest.fixture
def square_distance(square, square_grid):
    return GroundState.from_field(distance_field(square, square_grid), square)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def _solve(dom: ConvexDomain, h: float, schedule=(2, 4, 8, 16, 32, 64)) -> GroundState:
    return infinity_ground_state(dom, rasterize(dom, h), SolverOptions(p_schedule=schedule))


@pytest.fixture(scope="session")
def disc_ground_state():
    return _solve(ConvexDomain.disc((0.0, 0.0), 1.0), 1.0 / 32.0)


@pytest.fixture(scope="session")
def stadium_ground_state():
    dom = ConvexDomain.stadium([(-1.0, 0.0), (1.0, 0.0)], 0.5)
    return _solve(dom, 1.0 / 32.0, schedule=(2, 4, 8, 16, 32, 64, 128))


@pytest.fixture(scope="session")
def square_ground_states():
    """Square ground states at h = 1/16 and 1/32"""
    dom = ConvexDomain.square(1.0)
    return _solve(dom, 1.0 / 16.0), _solve(dom, 1.0 / 32.0)
