import numpy as np
import pytest

from ttsense import tt as ttm


def uniform_weights(N, I):
    return [np.full(I, 1.0 / I)] * N


def random_model(rng, N, I, rank):
    """Random TT used directly as a surrogate, with its uniform grid weights."""
    return ttm.random_tt([I] * N, rank, rng), uniform_weights(N, I)


def sobol_g_grid_variance(I):
    """Variance of |4x - 2| over the I-point midpoint grid on [0, 1]."""
    return 1.0 / 3.0 - 4.0 / (3.0 * I * I)


def sobol_g_grid_index(order, N, I):
    """Exact discrete Sobol index of any order-``order`` tuple of Sobol G (a = 0)."""
    v = sobol_g_grid_variance(I)
    return v**order / ((1.0 + v) ** N - 1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
