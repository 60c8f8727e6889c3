import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from kinlub.collision import CollisionModel
from kinlub.slab import uniform_zgrid
from kinlub.velocity import build_velocity_grid


@pytest.fixture(scope="session")
def grid4():
    return build_velocity_grid(4)


@pytest.fixture(scope="session")
def grid6():
    return build_velocity_grid(6)


@pytest.fixture(scope="session")
def grid8():
    return build_velocity_grid(8)


@pytest.fixture(scope="session")
def model():
    return CollisionModel()


@pytest.fixture(scope="session")
def zgrid16():
    return uniform_zgrid(16, 1.0)


@pytest.fixture(scope="session")
def zgrid24():
    return uniform_zgrid(24, 1.0)


@pytest.fixture(scope="session")
def zgrid48():
    return uniform_zgrid(48, 1.0)


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)
