import numpy as np
import pytest
from hypothesis import settings

from pshsym.model_measure import MCConfig, ModelGeometry

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


@pytest.fixture
def geom1():
    return ModelGeometry(1, 1.0)


@pytest.fixture
def mc_small():
    return MCConfig(samples=200_000, seed=3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
