import numpy as np
import pytest

from hitlab import geometry
from hitlab.montecarlo import SimConfig


@pytest.fixture
def unit_ball3():
    return geometry.ball(3, 1.0)


@pytest.fixture
def unit_disc():
    return geometry.ball(2, 1.0)


@pytest.fixture
def quick_cfg():
    return SimConfig(step=1e-3, horizon=50.0, n_paths=20000, seed=12345)


def rel(a, b):
    return abs(a - b) / abs(b)


@pytest.fixture
def rng():
    return np.random.default_rng(2024)
