import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from lambdapi import GeneratorSpec, random_mdp

settings.register_profile(
    "default",
    max_examples=40,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture
def small_mdp():
    return random_mdp(GeneratorSpec(n_states=5, n_actions=3, branching=3, seed=7, gamma=0.9))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
