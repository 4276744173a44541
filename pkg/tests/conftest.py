import numpy as np
import pytest

from rulecast.data import SwitchingGaussianSpec, generate_switching
from rulecast.models import train_logistic
from rulecast.simulation import make_expert_pool


@pytest.fixture(scope="session")
def switching():
    return generate_switching(SwitchingGaussianSpec(seed=0))


@pytest.fixture(scope="session")
def hist_model(switching):
    train, _ = switching
    return train_logistic(train)


@pytest.fixture(scope="session")
def expert_pool(switching):
    train, test = switching
    return make_expert_pool(train, test)


@pytest.fixture
def rng():
    return np.random.Generator(np.random.Philox(1234))
