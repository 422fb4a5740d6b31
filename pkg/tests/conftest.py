import numpy as np
import pytest

from mcmccv.samplers import GaussianTarget, rwm_sample


@pytest.fixture(scope="session")
def target():
    return GaussianTarget.correlated_2d(0.99, 10.0)


@pytest.fixture(scope="session")
def rwm_chain(target):
    return rwm_sample(target, 100, target.covariance, [0.5, 0.5], seed=0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
