import numpy as np
import pytest

from admshp import Dataset


def equal_variance_dataset(k, V, S, center=3.0, X=None):
    """Intercept-only data with sum (y - ybar)^2 == S exactly."""
    z = np.arange(k, dtype=float) - (k - 1) / 2.0
    y = center + z * np.sqrt(S / np.sum(z * z))
    return Dataset.from_arrays(y, V, X)


def random_dataset(rng, k=None, r=1, equal=False):
    k = k if k is not None else int(rng.integers(r + 3, 25))
    V = np.full(k, rng.uniform(0.2, 3.0)) if equal else rng.uniform(0.2, 3.0, k)
    X = np.ones((k, 1)) if r else np.zeros((k, 0))
    if r > 1:
        X = np.column_stack([X, rng.normal(size=(k, r - 1))])
    A = rng.choice([0.0, 0.3, 1.0, 4.0])
    theta = X @ rng.normal(size=r) + np.sqrt(A) * rng.normal(size=k)
    y = theta + np.sqrt(V) * rng.normal(size=k)
    return Dataset.from_arrays(y, V, X)


@pytest.fixture
def rng():
    return np.random.default_rng(20261015)


@pytest.fixture
def s18():
    return equal_variance_dataset(10, 1.0, 18.0)
