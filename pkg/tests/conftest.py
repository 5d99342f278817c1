import numpy as np
import pytest

from uvmsid.dynamics import GeneralizedState
from uvmsid.harness import default_model
from uvmsid.model import parameters_from_model


@pytest.fixture(scope="session")
def model():
    return default_model()


@pytest.fixture(scope="session")
def pi_true(model):
    return parameters_from_model(model)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_state(rng, n_links=4, pose_scale=1.0):
    return GeneralizedState(
        eta=rng.uniform(-1, 1, 6) * np.array([2, 2, 2, 0.4, 0.4, np.pi]) * pose_scale,
        nu=rng.uniform(-0.6, 0.6, 6),
        mu=rng.uniform(-1.5, 1.5, n_links),
        mu_dot=rng.uniform(-1.0, 1.0, n_links),
        mu_ddot=rng.uniform(-2.0, 2.0, n_links),
        nu_dot=rng.uniform(-1.0, 1.0, 6),
    )
