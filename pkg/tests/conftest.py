import random

import pytest
from hypothesis import HealthCheck, settings

from dqindex.weyl import ModelConfig

settings.register_profile("ci", deadline=None, max_examples=30, derandomize=True,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("ci")


@pytest.fixture
def plane():
    return ModelConfig("plane", 2, Y_max=4, H_max=2)


@pytest.fixture
def torus():
    return ModelConfig("torus", 2, Y_max=4, H_max=2)


@pytest.fixture
def rng():
    return random.Random(1234)
