import numpy as np
import pytest

from wassbary import build_cost_matrix


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def random_simplex(rng, n, floor=0.05):
    """Simplex vector bounded away from the boundary."""
    w = rng.uniform(floor, 1.0, n)
    return w / w.sum()


def random_instance(rng, n, m, d=2, scale=1.0):
    """Random transport instance (a, b, M) with squared-Euclidean costs."""
    X = rng.uniform(-scale, scale, (d, n))
    Y = rng.uniform(-scale, scale, (d, m))
    M = build_cost_matrix(X, Y, 2.0).entries
    a = random_simplex(rng, n)
    b = random_simplex(rng, m)
    return a, b, M
