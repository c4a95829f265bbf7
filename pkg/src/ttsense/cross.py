"""Rank-adaptive TT cross-approximation of black-box models on a grid.

Each half-sweep walks the cores in one direction. At core ``k`` it samples
the fiber tensor ``f(J_left[k], i_k, J_right[k+1])``, keeps its numerical
column space (plus ``kick`` random directions when the previous sweeps
stagnated), and picks new pivot rows with maxvol. The cores visited so far
become interpolation matrices ``Q @ inv(Q[pivots])`` and the last core is the
raw fiber, so every half-sweep yields a complete surrogate that interpolates
the model at its pivots.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.linalg

from . import tt as ttm
from .errors import DomainError
from .models import Evaluator, check_finite
from .space import ModelSpace

__all__ = ["CrossConfig", "CrossReport", "maxvol", "tt_cross"]

log = logging.getLogger(__name__)


@dataclass
class CrossConfig:
    initial_rank: int = 2
    kick_rank: int = 2
    max_rank: int = 50
    max_sweeps: int = 25
    val_samples: int = 1000
    val_rel_tol: float = 1e-4
    seed: int = 0
    # singular values below svd_tol * largest are treated as numerical zero
    svd_tol: float = 1e-12
    maxvol_tol: float = 0.05

    def __post_init__(self):
        for name in ("initial_rank", "kick_rank", "max_rank", "max_sweeps", "val_samples"):
            if getattr(self, name) < 1:
                raise DomainError(f"{name} must be positive")
        if not self.val_rel_tol > 0:
            raise DomainError("val_rel_tol must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class CrossReport:
    eval_count: int
    sweeps: int
    ranks: list
    val_error: float
    converged: bool
    val_samples: int
    history: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def maxvol(m, tol: float = 0.05, max_iters: int = 200, return_info: bool = False):
    """Rows of a tall ``K x R`` matrix spanning a quasi-maximal-volume submatrix.

    Starts from column-pivoted QR row selection and swaps rows greedily until
    every entry of ``m @ inv(m[rows])`` is at most ``1 + tol`` in magnitude.
    A rank-deficient ``m`` keeps the QR selection and is flagged in the info.
    """
    A = np.asarray(m, dtype=np.float64)
    K, R = A.shape
    if K < R:
        raise DomainError(f"maxvol needs at least as many rows as columns ({K} < {R})")
    _, rr, piv = scipy.linalg.qr(A.T, mode="economic", pivoting=True)
    rows = np.array(piv[:R], dtype=np.int64)
    diag = np.abs(np.diag(rr)) if rr.size else np.zeros(0)
    info = {"iterations": 0, "rank_deficient": False}
    if R == 0:
        return (rows, info) if return_info else rows
    if diag.size < R or diag[R - 1] <= 1e-13 * max(diag[0], 1e-300):
        info["rank_deficient"] = True
        return (rows, info) if return_info else rows
    for it in range(max_iters):
        B = scipy.linalg.solve(A[rows].T, A.T).T  # B = A @ inv(A[rows])
        i, j = np.unravel_index(np.argmax(np.abs(B)), B.shape)
        if abs(B[i, j]) <= 1.0 + tol:
            break
        rows[j] = i
        info["iterations"] = it + 1
    return (rows, info) if return_info else rows


class _Sampler:
    """Evaluates the model on grid multi-indices and tallies evaluations."""

    def __init__(self, f: Evaluator, space: ModelSpace):
        self.f = f
        self.space = space
        self.count = 0

    def __call__(self, idx: np.ndarray) -> np.ndarray:
        X = self.space.points(idx)
        y = self.f.evaluate_batch(X)
        check_finite(X, y)
        self.count += idx.shape[0]
        return y


def _fiber_indices(left: np.ndarray, I: int, right: np.ndarray) -> np.ndarray:
    """All (left row, i, right row) combinations in C order."""
    rl, rr = left.shape[0], right.shape[0]
    a, i, b = np.meshgrid(np.arange(rl), np.arange(I), np.arange(rr), indexing="ij")
    a, i, b = a.ravel(), i.ravel(), b.ravel()
    return np.hstack([left[a], i[:, None], right[b]])


def _basis(C: np.ndarray, svd_tol: float, kick: int, max_rank: int, rng) -> np.ndarray:
    """Orthonormal basis of the numerical column space of ``C`` plus random kick directions."""
    u, s, _ = np.linalg.svd(C, full_matrices=False)
    if s.size == 0 or s[0] == 0:
        r = 1
    else:
        r = max(int(np.sum(s > svd_tol * s[0])), 1)
    r_target = min(r + kick, max_rank, C.shape[0])
    r = min(r, r_target)
    Q = u[:, :r]
    if r_target > r:
        extra = rng.standard_normal((C.shape[0], r_target - r))
        Q, _ = np.linalg.qr(np.hstack([Q, extra]))
    return Q


def _half_sweep(sample, sizes, Jl, Jr, cfg, kick, rng, left_to_right: bool):
    N = len(sizes)
    cores = [None] * N
    if left_to_right:
        for k in range(N - 1):
            I = sizes[k]
            idx = _fiber_indices(Jl[k], I, Jr[k + 1])
            C = sample(idx).reshape(Jl[k].shape[0] * I, Jr[k + 1].shape[0])
            Q = _basis(C, cfg.svd_tol, kick, cfg.max_rank, rng)
            rows = maxvol(Q, cfg.maxvol_tol)
            P = scipy.linalg.solve(Q[rows].T, Q.T).T
            cores[k] = P.reshape(Jl[k].shape[0], I, len(rows))
            a, i = rows // I, rows % I
            Jl[k + 1] = np.hstack([Jl[k][a], i[:, None]])
        idx = _fiber_indices(Jl[N - 1], sizes[N - 1], Jr[N])
        cores[N - 1] = sample(idx).reshape(Jl[N - 1].shape[0], sizes[N - 1], 1)
    else:
        for k in range(N - 1, 0, -1):
            I = sizes[k]
            idx = _fiber_indices(Jl[k], I, Jr[k + 1])
            rl, rr = Jl[k].shape[0], Jr[k + 1].shape[0]
            C = sample(idx).reshape(rl, I * rr).T
            Q = _basis(C, cfg.svd_tol, kick, cfg.max_rank, rng)
            cols = maxvol(Q, cfg.maxvol_tol)
            P = scipy.linalg.solve(Q[cols].T, Q.T).T
            cores[k] = P.T.reshape(len(cols), I, rr)
            i, b = cols // rr, cols % rr
            Jr[k] = np.hstack([i[:, None], Jr[k + 1][b]])
        idx = _fiber_indices(Jl[0], sizes[0], Jr[1])
        cores[0] = sample(idx).reshape(1, sizes[0], Jr[1].shape[0])
    return ttm.TTTensor(tuple(cores))


def _validation_error(t: ttm.TTTensor, idx: np.ndarray, y: np.ndarray) -> float:
    approx = ttm.evaluate_many(t, idx)
    ref = np.linalg.norm(y)
    err = np.linalg.norm(approx - y)
    return float(err / ref) if ref > 0 else float(err)


def tt_cross(f: Evaluator, space: ModelSpace, cfg: CrossConfig | None = None):
    """Build a TT surrogate of ``f`` on the grid of ``space``.

    Returns ``(surrogate, CrossReport)``. The validation error is measured on
    ``cfg.val_samples`` uniformly drawn grid points; if it never drops below
    ``cfg.val_rel_tol`` the best iterate is returned with ``converged=False``.
    """
    cfg = cfg or CrossConfig()
    if f.arity != space.ndim:
        raise DomainError(f"model arity {f.arity} does not match {space.ndim} variables")
    sizes = space.mode_sizes
    N = len(sizes)
    rng = np.random.default_rng(cfg.seed)
    sample = _Sampler(f, space)

    val_idx = np.column_stack([rng.integers(0, I, size=cfg.val_samples) for I in sizes])
    y_val = sample(val_idx)
    n_val = sample.count

    if N == 1:
        full_idx = np.arange(sizes[0])[:, None]
        t = ttm.TTTensor((sample(full_idx).reshape(1, sizes[0], 1),))
        err = _validation_error(t, val_idx, y_val)
        report = CrossReport(sample.count, 1, list(t.ranks), err, err <= cfg.val_rel_tol, n_val,
                             [{"sweep": 1, "direction": "full", "val_error": err,
                               "ranks": list(t.ranks), "evals": sizes[0]}])
        return t, report

    Jl = [None] * (N + 1)
    Jr = [None] * (N + 1)
    Jl[0] = np.zeros((1, 0), dtype=np.int64)
    Jr[N] = np.zeros((1, 0), dtype=np.int64)
    for n in range(1, N):
        left_size = float(np.prod(sizes[:n], dtype=np.float64))
        right_size = float(np.prod(sizes[n:], dtype=np.float64))
        r = int(min(cfg.initial_rank, left_size, right_size, cfg.max_rank))
        Jr[n] = np.column_stack([rng.integers(0, I, size=r) for I in sizes[n:]])
        Jl[n] = np.column_stack([rng.integers(0, I, size=r) for I in sizes[:n]])

    history = []
    best_t, best_err = None, np.inf
    prev_err = None
    kick = 0
    converged = False
    for sweep in range(cfg.max_sweeps):
        left_to_right = sweep % 2 == 0
        before = sample.count
        t = _half_sweep(sample, sizes, Jl, Jr, cfg, kick, rng, left_to_right)
        err = _validation_error(t, val_idx, y_val)
        history.append({
            "sweep": sweep + 1,
            "direction": "lr" if left_to_right else "rl",
            "val_error": err,
            "ranks": list(t.ranks),
            "evals": sample.count - before,
            "kick": kick,
        })
        log.info("sweep %d: val error %.3e, ranks %s", sweep + 1, err, t.ranks)
        if err < best_err:
            best_t, best_err = t, err
        if err <= cfg.val_rel_tol:
            converged = True
            break
        stagnated = prev_err is None or err > 0.9 * prev_err
        kick = cfg.kick_rank if stagnated else 0
        prev_err = err

    report = CrossReport(
        eval_count=sample.count,
        sweeps=len(history),
        ranks=list(best_t.ranks),
        val_error=best_err,
        converged=converged,
        val_samples=n_val,
        history=history,
    )
    return best_t, report
