"""
Shared fixtures: small dyadic grids whose coordinates are exact binary fractions
"""

import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), 'src'))

import numpy as np
import pytest

from geometry.dyadic import build_shifted_grids
from geometry.space import build_euclidean_grid


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: acceptance-size runs; deselect with -m \"not slow\"")


@pytest.fixture
def line64():
    """64 points on [0, 1) at spacing 1/64."""
    return build_euclidean_grid(1, 64, 1.0 / 64)


@pytest.fixture
def line256():
    return build_euclidean_grid(1, 256, 1.0 / 256)


@pytest.fixture
def line_system(line64):
    """Unshifted dyadic system on line64: singletons at scale -6, one cube at scale 0."""
    return build_shifted_grids(line64, range(-6, 1))[0]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
