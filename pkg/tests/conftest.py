"""
Shared fixtures for the test suite.
"""

import os
import sys

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import numpy as np
import pytest

from src.core import NoiseMode, Params, RngStream, Scheme
from src.objectives import registry_get


@pytest.fixture
def rastrigin2():
    return registry_get("rastrigin", 2, {"B": 0.0, "C": 0.0})


@pytest.fixture
def sphere2():
    return registry_get("sphere", 2)


@pytest.fixture
def default_params():
    """N=100, d=2, lambda=1, sigma=1, beta=10, h=0.01."""
    return Params(lam=1.0, sigma=1.0, beta=10.0, h=0.01, n_particles=100, dim=2)


@pytest.fixture
def make_params():
    def make(**changes):
        values = dict(lam=1.0, sigma=1.0, beta=10.0, h=0.01, n_particles=10, dim=2,
                      noise_mode=NoiseMode.COMMON, scheme=Scheme.EULER)
        values.update(changes)
        return Params(**values)
    return make


@pytest.fixture
def rng():
    return RngStream(12345, 0)


@pytest.fixture
def np_rng():
    """Plain numpy generator for drawing test inputs."""
    return np.random.default_rng(20240601)
