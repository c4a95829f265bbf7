import itertools

import numpy as np
import pytest

from conftest import random_model, sobol_g_grid_index, uniform_weights
from ttsense import tt as ttm
from ttsense.baselines import anova_from_tt
from ttsense.errors import DegenerateModelError, DomainError, RangeError, ShapeError
from ttsense.sobol import (
    build_sobol_tt,
    closed_index,
    closed_tt,
    load_sobol,
    query_index,
    save_sobol,
    total_index,
    tuple_to_bits,
)
from ttsense.space import uniform_space


def additive_surrogate(I=5):
    """``f = x1 + x2`` on uniform grids: rank 2."""
    x = (np.arange(I) + 0.5) / I
    c0 = np.stack([x, np.ones(I)], axis=1)[None]
    c1 = np.stack([np.ones(I), x], axis=1).T[:, :, None]
    return ttm.TTTensor((c0, c1)), uniform_weights(2, I)


def test_additive_model():
    t, w = additive_surrogate()
    s = build_sobol_tt(t, w)
    assert query_index(s, [0]) == pytest.approx(0.5, abs=1e-10)
    assert query_index(s, [1]) == pytest.approx(0.5, abs=1e-10)
    assert query_index(s, [0, 1]) == pytest.approx(0.0, abs=1e-10)
    assert query_index(s, []) == 0.0
    assert closed_index(s, [0]) == pytest.approx(0.5, abs=1e-10)
    assert closed_index(s, [0, 1]) == pytest.approx(1.0, abs=1e-10)
    assert s.mean == pytest.approx(1.0)


def test_matches_oracle_random_model(rng):
    t, w = random_model(rng, 5, 6, 2)
    s = build_sobol_tt(t, w)
    oracle = anova_from_tt(t, w)
    np.testing.assert_allclose(ttm.full(s.tensor).reshape(-1), oracle.indices, atol=1e-10)
    np.testing.assert_allclose(ttm.full(closed_tt(s)).reshape(-1), oracle.closed(), atol=1e-10)
    for alpha in [[0], [1, 3], [0, 2, 4]]:
        assert total_index(s, alpha) == pytest.approx(oracle.total_index(alpha), abs=1e-10)
    assert s.variance == pytest.approx(oracle.total_variance, rel=1e-12)
    assert s.mean == pytest.approx(oracle.mean, rel=1e-12, abs=1e-14)


def test_sobol_g_grid_oracle():
    N, I = 8, 10
    sp = uniform_space(N, I)
    nodes = sp.axes[0].nodes
    core = np.abs(4 * nodes - 2).reshape(1, I, 1)
    s = build_sobol_tt(ttm.TTTensor((core,) * N), sp)
    for order in range(1, N + 1):
        assert query_index(s, range(order)) == pytest.approx(sobol_g_grid_index(order, N, I), rel=1e-9)


def test_invariants_random_models(rng):
    for _ in range(5):
        N = int(rng.integers(3, 7))
        t, w = random_model(rng, N, 4, 3)
        s = build_sobol_tt(t, w)
        assert ttm.dot(s.tensor, ttm.ones([2] * N)) == pytest.approx(1.0, abs=1e-6)
        assert abs(ttm.evaluate(s.tensor, [0] * N)) <= 1e-9
        F = ttm.full(s.tensor)
        C = ttm.full(closed_tt(s))
        assert F.min() >= -1e-9 * F.max()
        assert C[(1,) * N] == pytest.approx(1.0, abs=1e-6)
        for bits in itertools.islice(itertools.product([0, 1], repeat=N), 1, None):
            alpha = [n for n in range(N) if bits[n]]
            st = total_index(s, alpha)
            assert F[bits] <= C[bits] + 1e-8 and C[bits] <= st + 1e-8


def test_closed_is_monotone(rng):
    t, w = random_model(rng, 4, 5, 2)
    s = build_sobol_tt(t, w)
    assert closed_index(s, [0]) <= closed_index(s, [0, 1]) + 1e-12


def test_total_of_everything_is_one(rng):
    t, w = random_model(rng, 4, 3, 2)
    s = build_sobol_tt(t, w)
    assert total_index(s, range(4)) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(DomainError):
        total_index(s, [])


def test_query_by_name_and_range():
    t, w = additive_surrogate()
    s = build_sobol_tt(t, w, names=["a", "b"])
    assert query_index(s, ["b"]) == pytest.approx(0.5, abs=1e-10)
    with pytest.raises(RangeError):
        query_index(s, [2])
    with pytest.raises(RangeError):
        query_index(s, ["c"])


def test_binary_index_pattern():
    assert tuple_to_bits(7, [3, 6]) == [0, 0, 0, 1, 0, 0, 1]


def test_degenerate_model():
    with pytest.raises(DegenerateModelError):
        build_sobol_tt(ttm.ones([4, 4, 4]), uniform_weights(3, 4))


def test_shape_mismatch():
    with pytest.raises(ShapeError):
        build_sobol_tt(ttm.ones([4, 4]), uniform_weights(2, 5))


def test_tiny_but_real_variance():
    # 1 + 1e-8 * x1: the variance is far below E[f]^2 yet computed without cancellation
    I = 6
    x = (np.arange(I) + 0.5) / I
    t = ttm.TTTensor(((1 + 1e-8 * x).reshape(1, I, 1), np.ones((1, I, 1))))
    s = build_sobol_tt(t, uniform_weights(2, I))
    assert s.variance == pytest.approx(1e-16 * np.var(x), rel=1e-6)
    assert query_index(s, [0]) == pytest.approx(1.0, abs=1e-9)


def test_save_load(tmp_path, rng):
    t, w = random_model(rng, 4, 3, 2)
    s = build_sobol_tt(t, w, names=["p", "q", "r", "s"])
    save_sobol(s, tmp_path / "s.tt")
    back = load_sobol(tmp_path / "s.tt")
    assert back.names == ("p", "q", "r", "s")
    assert back.variance == s.variance and back.mean == s.mean and back.round_tol == s.round_tol
    assert query_index(back, [1, 2]) == query_index(s, [1, 2])
