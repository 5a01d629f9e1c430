import numpy as np
import pytest

from camdag.data import Dataset
from camdag.graph import Dag
from camdag.simulate import make_sem, simulate, simulate_data


def chain_data(seed, p=3, n=300):
    """GP chain 0 -> 1 -> ... -> p-1."""
    rng = np.random.default_rng(seed)
    dag = Dag(p, frozenset((i, i + 1) for i in range(p - 1)))
    spec = make_sem(dag, rng)
    return dag, simulate_data(spec, n, rng)


def two_node_data(seed, n=300):
    """X1 = strongly nonlinear function of X0 plus Gaussian noise."""
    rng = np.random.default_rng(seed)
    x0 = rng.normal(size=n)
    x1 = 1.5 * np.sin(2 * x0) + x0**2 / 2 + rng.normal(0, 0.3, n)
    return Dataset(np.c_[x0, x1])


def sparse_cam(seed, p, n, **kwargs):
    spec, data = simulate(p, n, seed, **kwargs)
    return spec.dag, data


@pytest.fixture
def small_chain():
    return chain_data(0)


def fixed_chain_data(seed, p=5, n=300):
    """Chain with the same strongly nonlinear link at every step."""
    rng = np.random.default_rng(seed)
    x = np.empty((n, p))
    x[:, 0] = rng.normal(size=n)
    for i in range(1, p):
        z = (x[:, i - 1] - x[:, i - 1].mean()) / x[:, i - 1].std()
        x[:, i] = 1.5 * np.sin(2 * z) + z**2 / 2 + rng.normal(0, 0.3, n)
    return Dag(p, frozenset((i, i + 1) for i in range(p - 1))), Dataset(x)
