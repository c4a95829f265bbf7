import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ttsense import tt as ttm
from ttsense.cross import CrossConfig, maxvol, tt_cross
from ttsense.errors import DataError, DomainError
from ttsense.models import FunctionEvaluator, sobol_g_evaluator
from ttsense.space import uniform_space


def tt_model(t, space):
    """Evaluator whose ground truth is the grid tensor of ``t``."""
    nodes = [ax.nodes for ax in space.axes]

    def fn(X):
        idx = np.column_stack([np.searchsorted(nodes[n], X[:, n]) for n in range(X.shape[1])])
        return ttm.evaluate_many(t, idx)

    return FunctionEvaluator(fn, space.ndim)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 40), st.integers(1, 6), st.integers(0, 10_000))
def test_maxvol_dominance(K, R, seed):
    R = min(R, K)
    A = np.random.default_rng(seed).standard_normal((K, R))
    rows = maxvol(A, tol=0.05)
    assert len(set(rows.tolist())) == R
    B = A @ np.linalg.inv(A[rows])
    assert np.abs(B).max() <= 1.05 + 1e-10
    np.testing.assert_allclose(B[rows], np.eye(R), atol=1e-10)


def test_maxvol_rank_deficient_flag():
    A = np.ones((6, 2))
    rows, info = maxvol(A, return_info=True)
    assert info["rank_deficient"] and len(rows) == 2
    with pytest.raises(DomainError):
        maxvol(np.ones((2, 3)))


def test_rank_one_model():
    sp = uniform_space(6, 10)
    f = FunctionEvaluator(lambda X: np.prod(1 + X, axis=1), 6)
    t, rep = tt_cross(f, sp, CrossConfig(val_rel_tol=1e-10))
    assert rep.converged and set(rep.ranks) == {1}
    assert rep.eval_count == f.eval_count


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_recovers_low_rank_tensor(seed):
    rng = np.random.default_rng(seed)
    sp = uniform_space(5, 7)
    truth = ttm.random_tt([7] * 5, 3, rng)
    t, rep = tt_cross(tt_model(truth, sp), sp, CrossConfig(val_rel_tol=1e-9, seed=seed))
    F, G = ttm.full(truth), ttm.full(t)
    assert rep.converged
    assert np.linalg.norm(F - G) <= 1e-7 * np.linalg.norm(F)
    assert max(rep.ranks) <= 3 + CrossConfig().kick_rank


def test_sobol_g_is_rank_one_and_cheap():
    sp = uniform_space(20, 100)
    t, rep = tt_cross(sobol_g_evaluator(20), sp, CrossConfig(val_rel_tol=1e-4))
    assert rep.converged and rep.val_error <= 1e-4
    assert max(rep.ranks) == 1
    assert rep.eval_count <= 2e5


def test_single_variable():
    sp = uniform_space(1, 9)
    t, rep = tt_cross(FunctionEvaluator(lambda X: X[:, 0] ** 2, 1), sp)
    np.testing.assert_allclose(ttm.full(t), sp.axes[0].nodes ** 2)
    assert rep.converged


def test_deterministic_given_seed():
    sp = uniform_space(4, 6)
    f = FunctionEvaluator(lambda X: np.sin(X.sum(axis=1)) + X[:, 0] * X[:, 3], 4)
    a, _ = tt_cross(f, sp, CrossConfig(seed=7))
    b, _ = tt_cross(f, sp, CrossConfig(seed=7))
    for ca, cb in zip(a.cores, b.cores):
        assert np.array_equal(ca, cb)


def test_nonconvergence_returns_best_iterate():
    sp = uniform_space(4, 8)
    rng = np.random.default_rng(5)
    table = rng.standard_normal((8,) * 4)
    nodes = sp.axes[0].nodes
    f = FunctionEvaluator(lambda X: table[tuple(np.searchsorted(nodes, X[:, n]) for n in range(4))], 4)
    cfg = CrossConfig(max_rank=2, max_sweeps=3, val_rel_tol=1e-8)
    t, rep = tt_cross(f, sp, cfg)
    assert not rep.converged
    assert rep.val_error == min(h["val_error"] for h in rep.history)
    assert max(t.ranks) <= 2


def test_arity_mismatch_and_nan():
    sp = uniform_space(3, 4)
    with pytest.raises(DomainError):
        tt_cross(FunctionEvaluator(lambda X: X[:, 0], 2), sp)
    with pytest.raises(DataError):
        tt_cross(FunctionEvaluator(lambda X: np.where(X[:, 0] > 0.5, np.nan, X[:, 0]), 3), sp)


def test_config_validation():
    with pytest.raises(DomainError):
        CrossConfig(max_rank=0)
    with pytest.raises(DomainError):
        CrossConfig(val_rel_tol=0.0)
