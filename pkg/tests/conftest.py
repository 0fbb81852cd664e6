import numpy as np
import pytest

from plgibbs.distributions import RngStream
from plgibbs.model_core import Dataset, GroupStructure, Hyperparameters


@pytest.fixture
def small_data():
    rng = RngStream(1001, 0)
    n, p = 8, 4
    x_mat = rng.gen.standard_normal((n, p))
    y = x_mat @ np.array([1.0, -0.5, 0.0, 0.8]) + 0.7 * rng.gen.standard_normal(n)
    return Dataset(y=y, X=x_mat)


@pytest.fixture
def groups22():
    return GroupStructure((2, 2))


@pytest.fixture
def hyper():
    return Hyperparameters(lambda1=1.0, lambda2=1.5, alpha=1.0, xi=1.0)


def mcse_of(samples):
    samples = np.asarray(samples, dtype=float)
    return samples.std(ddof=1) / np.sqrt(samples.shape[0])
