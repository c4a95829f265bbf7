import itertools

import numpy as np
import pytest

from ttsense import tt as ttm
from ttsense.errors import ApproximationError, DomainError
from ttsense.masks import (
    hamming_mask_tt,
    hamming_state_tt,
    hamming_weight_tt,
    length_mask_tt,
    length_state_tt,
    nonempty_mask_tt,
    reciprocal_weight_tt,
    tuple_length,
)


def all_tuples(N):
    return np.array(list(itertools.product([0, 1], repeat=N)))


def lengths(B):
    return np.array([tuple_length(b) for b in B])


def dense(t):
    return ttm.full(t).reshape(2 ** t.ndim, -1)


@pytest.mark.parametrize("N", range(1, 9))
def test_weight_exact(N):
    W = hamming_weight_tt(N)
    assert np.array_equal(dense(W)[:, 0], all_tuples(N).sum(axis=1))
    assert all(r <= 2 for r in W.ranks)
    if N >= 2:
        assert W.size == 8 * N - 8


@pytest.mark.parametrize("N", range(1, 9))
def test_hamming_mask_exact(N):
    w = all_tuples(N).sum(axis=1)
    for n in range(N + 1):
        M = hamming_mask_tt(N, n)
        assert np.array_equal(dense(M)[:, 0], (w <= n).astype(float))
        assert max(M.ranks) <= n + 1
        if N >= 2:
            assert M.size == 2 * (n + 1) ** 2 * (N - 2) + 4 * (n + 1)


@pytest.mark.parametrize("N", range(1, 9))
def test_hamming_state_exact(N):
    M = hamming_state_tt(N)
    assert M.trailing_rank_open and M.n_outputs == N + 1
    assert np.array_equal(dense(M), np.eye(N + 1)[all_tuples(N).sum(axis=1)])
    assert max(M.ranks) <= N + 1


@pytest.mark.parametrize("N", range(1, 9))
def test_length_mask_exact(N):
    L = lengths(all_tuples(N))
    for n in range(N + 1):
        M = length_mask_tt(N, n)
        assert np.array_equal(dense(M)[:, 0], (L <= n).astype(float))
        assert max(M.ranks) <= n + 1


@pytest.mark.parametrize("N", range(1, 9))
def test_length_state_exact(N):
    M = length_state_tt(N)
    assert np.array_equal(dense(M), np.eye(N + 1)[lengths(all_tuples(N))])
    assert list(M.ranks[1:N]) == [2 * p for p in range(1, N)]
    for c in M.cores:
        assert np.array_equal(c, np.rint(c))


def test_length_state_ranks_are_minimal():
    # the unfolding rank at bond p is 2p, so no exact TT has ranks <= N + 1 for N >= 4
    N = 8
    t = length_state_tt(N)
    F = ttm.full(t)
    for p in range(1, N):
        assert np.linalg.matrix_rank(F.reshape(2**p, -1)) == 2 * p == t.ranks[p]


def test_nonempty_mask():
    for N in range(1, 7):
        v = dense(nonempty_mask_tt(N))[:, 0]
        assert v[0] == 0 and np.all(v[1:] == 1)


def test_documented_examples():
    # alpha = {1, 5} with N = 5
    a = [1, 0, 0, 0, 1]
    assert ttm.evaluate(length_mask_tt(5, 3), a) == 0
    assert ttm.evaluate(length_mask_tt(5, 3), [0, 0, 0, 0, 1]) == 1
    assert np.argmax(ttm.full(hamming_state_tt(5))[tuple(a)]) == 2
    assert np.argmax(ttm.full(length_state_tt(5))[tuple(a)]) == 5
    assert ttm.evaluate(hamming_mask_tt(3, 2), [1, 1, 1]) == 0
    assert ttm.evaluate(hamming_mask_tt(3, 2), [0, 1, 1]) == 1
    assert ttm.evaluate(hamming_weight_tt(3), [1, 0, 1]) == 2


def test_state_channels_partition_unity():
    for t in (hamming_state_tt(6), length_state_tt(6)):
        np.testing.assert_array_equal(dense(t).sum(axis=1), 1.0)


def test_mask_range_errors():
    with pytest.raises(DomainError):
        hamming_mask_tt(3, 4)
    with pytest.raises(DomainError):
        length_mask_tt(3, -1)
    with pytest.raises(DomainError):
        hamming_weight_tt(0)


def test_delta_consistency(rng):
    N = 10
    for _ in range(20):
        alpha = rng.integers(0, 2, N)
        n = int(rng.integers(0, N + 1))
        d = ttm.delta([2] * N, alpha)
        assert ttm.dot(d, hamming_mask_tt(N, n)) == float(alpha.sum() <= n)


@pytest.mark.parametrize("N", [1, 2, 3, 7, 12, 15])
def test_reciprocal_exhaustive(N):
    r = reciprocal_weight_tt(N, rel_tol=1e-6)
    w = all_tuples(N).sum(axis=1)
    exact = 1.0 / np.maximum(w, 1)
    got = dense(r.tensor)[:, 0]
    rel = np.abs(got - exact) / exact
    assert rel.max() <= 1e-6
    assert rel.max() == pytest.approx(r.max_rel_error, rel=1e-3, abs=1e-13)
    assert got[0] == pytest.approx(1.0, abs=1e-12)


def test_reciprocal_frobenius_metric():
    N = 14
    r = reciprocal_weight_tt(N, rel_tol=1e-6, metric="frobenius")
    w = all_tuples(N).sum(axis=1)
    exact = 1.0 / np.maximum(w, 1)
    got = dense(r.tensor)[:, 0]
    fro = np.linalg.norm(got - exact) / np.linalg.norm(exact)
    assert fro <= 1e-6
    assert fro == pytest.approx(r.fro_rel_error, rel=1e-3, abs=1e-13)


def test_reciprocal_rank_cap():
    with pytest.raises(ApproximationError):
        reciprocal_weight_tt(60, rel_tol=1e-12, max_rank=3)
    with pytest.raises(DomainError):
        reciprocal_weight_tt(5, rel_tol=0)
    with pytest.raises(DomainError):
        reciprocal_weight_tt(5, metric="l1")


def test_reciprocal_entry_example():
    r = reciprocal_weight_tt(20, rel_tol=1e-8)
    assert ttm.evaluate(r.tensor, [1, 1, 1, 1] + [0] * 16) == pytest.approx(0.25, rel=1e-8)
