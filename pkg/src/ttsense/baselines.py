"""Reference computations that do not use tensor trains.

* ``brute_force_anova``: exact discrete ANOVA on the full grid, used as the
  oracle for every TT-derived quantity.
* ``saltelli_estimate``: quasi-Monte Carlo first-order and total indices.
* ``shapley_permutation_estimate``: permutation-sampling Shapley effects.

Tuples are stored at flat index ``sum_n alpha_n 2^(N-1-n)``, i.e. row-major
over ``(2,) * N``, matching the binary indexing of the Sobol TT.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import qmc

from . import tt as ttm
from .errors import DegenerateModelError, DomainError, ResourceError
from .metrics import DEFAULT_EPSILON, SensitivityReport, _check_eps, _first_hit
from .models import Evaluator, check_finite
from .space import ModelSpace

__all__ = [
    "BruteForceANOVA",
    "brute_force_anova",
    "anova_from_grid",
    "anova_from_tt",
    "SaltelliResult",
    "saltelli_estimate",
    "ShapleyMCResult",
    "shapley_permutation_estimate",
]

GRID_CAP = 2**22
MAX_BRUTE_DIM = 12


def _bits(N: int) -> np.ndarray:
    """``(2^N, N)`` table of tuple membership in row-major order."""
    return ((np.arange(2**N)[:, None] >> np.arange(N - 1, -1, -1)) & 1).astype(np.int64)


def _subset_sum(v: np.ndarray, N: int) -> np.ndarray:
    """Zeta transform: ``out[alpha] = sum_{beta subset of alpha} v[beta]``."""
    out = v.reshape((2,) * N).copy()
    for n in range(N):
        sl = [slice(None)] * N
        lo, hi = list(sl), list(sl)
        lo[n], hi[n] = 0, 1
        out[tuple(hi)] += out[tuple(lo)]
    return out.reshape(-1)


def _mobius(v: np.ndarray, N: int) -> np.ndarray:
    """Inverse of ``_subset_sum``."""
    out = v.reshape((2,) * N).copy()
    for n in range(N):
        lo = [slice(None)] * N
        hi = [slice(None)] * N
        lo[n], hi[n] = 0, 1
        out[tuple(hi)] -= out[tuple(lo)]
    return out.reshape(-1)


@dataclass
class BruteForceANOVA:
    closed_variances: np.ndarray
    indices: np.ndarray
    total_variance: float
    mean: float
    names: tuple = ()

    @property
    def ndim(self) -> int:
        return int(round(np.log2(self.indices.size)))

    def _flat(self, variables) -> int:
        N = self.ndim
        k = 0
        for v in variables:
            if not 0 <= int(v) < N:
                raise DomainError(f"variable {v} out of range [0, {N})")
            k |= 1 << (N - 1 - int(v))
        return k

    def index(self, variables) -> float:
        return float(self.indices[self._flat(variables)])

    def closed(self) -> np.ndarray:
        return _subset_sum(self.indices, self.ndim)

    def closed_index(self, variables) -> float:
        return float(self.closed_variances[self._flat(variables)] / self.total_variance)

    def total_index(self, variables) -> float:
        full = 2**self.ndim - 1
        return float(1.0 - self.closed()[full ^ self._flat(variables)])

    def orders(self) -> np.ndarray:
        return _bits(self.ndim).sum(axis=1)

    def lengths(self) -> np.ndarray:
        b = _bits(self.ndim)
        out = np.zeros(b.shape[0], dtype=np.int64)
        nz = b.any(axis=1)
        first = np.argmax(b, axis=1)
        last = b.shape[1] - 1 - np.argmax(b[:, ::-1], axis=1)
        out[nz] = (last - first + 1)[nz]
        return out

    def mean_dimension(self) -> float:
        return float(self.indices @ self.orders())

    def dimension_distribution(self) -> np.ndarray:
        return np.bincount(self.orders(), weights=self.indices, minlength=self.ndim + 1)

    def length_spectrum(self) -> np.ndarray:
        return np.bincount(self.lengths(), weights=self.indices, minlength=self.ndim + 1)

    def truncation_profile(self):
        closed = self.closed()
        orders = self.orders()
        bits = _bits(self.ndim)
        values, tuples = [], []
        for n in range(1, self.ndim + 1):
            masked = np.where(orders <= n, closed, -np.inf)
            k = int(np.argmax(masked))
            values.append(masked[k])
            tuples.append(tuple(int(j) for j in np.nonzero(bits[k])[0]))
        return np.array(values), tuples

    def shapley(self) -> np.ndarray:
        orders = self.orders()
        share = np.zeros_like(self.indices)
        nz = orders > 0
        share[nz] = self.indices[nz] / orders[nz]
        return _bits(self.ndim).T.astype(np.float64) @ share

    def report(self, eps: float = DEFAULT_EPSILON) -> SensitivityReport:
        _check_eps(eps)
        N = self.ndim
        names = list(self.names) if self.names else [f"x{n + 1}" for n in range(N)]
        nu = self.dimension_distribution()
        d_sup, v_sup = _first_hit(np.cumsum(nu[1:]), eps)
        values, tuples = self.truncation_profile()
        d_tr, v_tr = _first_hit(values, eps)
        d_suc, v_suc = _first_hit(np.cumsum(self.length_spectrum()[1:]), eps)
        totals = np.array([self.total_index([n]) for n in range(N)])
        ds = self.mean_dimension()
        return SensitivityReport(
            epsilon=eps,
            mean_dimension=ds,
            dimension_distribution=nu[1:].tolist(),
            residual=float(nu[0]),
            effective_superposition=d_sup,
            superposition_variance=v_sup,
            effective_truncation=d_tr,
            truncation_variance=float(v_tr),
            truncation_tuple=[names[k] for k in tuples[d_tr - 1]],
            effective_successive=d_suc,
            successive_variance=v_suc,
            shapley=self.shapley().tolist(),
            first_order=[self.index([n]) for n in range(N)],
            totals=totals.tolist(),
            names=names,
            liu_owen_discrepancy=float(ds - totals.sum()),
            mean=self.mean,
            variance=self.total_variance,
        )


def anova_from_grid(F, weights, names=()) -> BruteForceANOVA:
    """Exact ANOVA of a dense grid tensor under the product of the axis weights.

    Conditional means ``E[f | x_alpha]`` are formed level by level, averaging
    one axis out of a parent tuple, so each of the ``2^N`` tuples costs one
    weighted contraction of an already reduced array.
    """
    F = np.asarray(F, dtype=np.float64)
    N = F.ndim
    weights = [np.asarray(w, dtype=np.float64) for w in weights]
    if tuple(len(w) for w in weights) != F.shape:
        raise DomainError("one weight vector per axis, matching the grid shape")
    if N > MAX_BRUTE_DIM:
        raise ResourceError(f"brute-force ANOVA is limited to {MAX_BRUTE_DIM} variables")
    full = 2**N - 1
    mean = float(_weighted_mean(F, weights))
    closed = np.zeros(2**N)
    level = {full: F}
    for size in range(N, -1, -1):
        if size < N:
            # each tuple averages out its first absent variable from a parent one level up
            nxt = {}
            for k in range(2**N):
                if bin(k).count("1") != size:
                    continue
                n = next(m for m in range(N) if not k >> (N - 1 - m) & 1)
                parent = k | (1 << (N - 1 - n))
                axis = sum(1 for m in range(n) if parent >> (N - 1 - m) & 1)
                nxt[k] = np.tensordot(level[parent], weights[n], axes=([axis], [0]))
            level = nxt
        for k, cm in level.items():
            present = [m for m in range(N) if k >> (N - 1 - m) & 1]
            closed[k] = float(_weighted_mean((cm - mean) ** 2, [weights[m] for m in present]))
    variance = closed[full]
    if not variance > 0:
        raise DegenerateModelError("model variance is zero on the grid")
    indices = _mobius(closed, N) / variance
    indices[0] = 0.0
    return BruteForceANOVA(closed, indices, float(variance), mean, tuple(names))


def _weighted_mean(A, weights):
    out = np.asarray(A)
    for w in reversed(list(weights)):
        out = np.tensordot(out, w, axes=([out.ndim - 1], [0]))
    return out


def brute_force_anova(f: Evaluator, space: ModelSpace) -> BruteForceANOVA:
    """Evaluate ``f`` on the full grid of ``space`` and decompose exactly."""
    sizes = space.mode_sizes
    if space.ndim > MAX_BRUTE_DIM:
        raise ResourceError(f"brute-force ANOVA is limited to {MAX_BRUTE_DIM} variables")
    total = int(np.prod(sizes, dtype=np.float64))
    if total > GRID_CAP:
        raise ResourceError(f"grid has {total} points, cap is {GRID_CAP}")
    idx = np.stack(np.unravel_index(np.arange(total), sizes), axis=1)
    X = space.points(idx)
    y = f.evaluate_batch(X)
    check_finite(X, y)
    return anova_from_grid(y.reshape(sizes), [ax.weights for ax in space.axes], space.names)


def anova_from_tt(t: ttm.TTTensor, space_or_weights, names=()) -> BruteForceANOVA:
    """Oracle for a TT used directly as the model: decompose its dense grid tensor."""
    if isinstance(space_or_weights, ModelSpace):
        weights = [ax.weights for ax in space_or_weights.axes]
        names = names or space_or_weights.names
    else:
        weights = space_or_weights
    return anova_from_grid(ttm.full(t, cap=GRID_CAP), weights, names)


# --- Saltelli ----------------------------------------------------------------


@dataclass
class SaltelliResult:
    first_order: np.ndarray
    totals: np.ndarray
    first_order_se: np.ndarray
    totals_se: np.ndarray
    evaluations: int
    variance: float
    degenerate: bool
    variant: str = "first-order: Saltelli 2010; total: Jansen 1999; scrambled Sobol base"

    def to_dict(self) -> dict:
        d = asdict(self)
        return {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in d.items()}


def _saltelli_indices(yA, yB, yAB):
    V = np.var(np.concatenate([yA, yB]))
    if not V > 0:
        return np.zeros(yAB.shape[1]), np.zeros(yAB.shape[1]), True
    first = np.mean(yB[:, None] * (yAB - yA[:, None]), axis=0) / V
    total = 0.5 * np.mean((yA[:, None] - yAB) ** 2, axis=0) / V
    return first, total, False


def saltelli_estimate(f: Evaluator, space: ModelSpace, base_samples: int = 2**12, seed: int = 0,
                      bootstrap: int = 200) -> SaltelliResult:
    """First-order and total indices from ``base_samples * (N + 2)`` model runs.

    Points come from a scrambled Sobol sequence in ``2N`` dimensions mapped
    through the continuous marginals of ``space``. Standard errors are from a
    bootstrap over the base rows.
    """
    if base_samples < 64:
        raise DomainError("base_samples must be at least 64")
    N = space.ndim
    sampler = qmc.Sobol(d=2 * N, scramble=True, seed=seed)
    m = int(np.log2(base_samples))
    U = sampler.random_base2(m) if 2**m == base_samples else sampler.random(base_samples)
    # keep points strictly inside the cube so unbounded marginals stay finite
    U = np.clip(U, 1e-12, 1 - 1e-12)
    A = space.sample(U[:, :N])
    B = space.sample(U[:, N:])
    AB = np.repeat(A[None], N, axis=0)
    for i in range(N):
        AB[i, :, i] = B[:, i]
    X = np.concatenate([A, B, AB.reshape(-1, N)])
    y = f.evaluate_batch(X)
    check_finite(X, y)
    n = base_samples
    yA, yB, yAB = y[:n], y[n:2 * n], y[2 * n:].reshape(N, n).T
    first, total, degenerate = _saltelli_indices(yA, yB, yAB)
    rng = np.random.default_rng(seed)
    boot_f = np.empty((bootstrap, N))
    boot_t = np.empty((bootstrap, N))
    for b in range(bootstrap):
        r = rng.integers(0, n, size=n)
        boot_f[b], boot_t[b], _ = _saltelli_indices(yA[r], yB[r], yAB[r])
    return SaltelliResult(
        first_order=first,
        totals=total,
        first_order_se=boot_f.std(axis=0, ddof=1),
        totals_se=boot_t.std(axis=0, ddof=1),
        evaluations=int(X.shape[0]),
        variance=float(np.var(np.concatenate([yA, yB]))),
        degenerate=degenerate,
    )


# --- Shapley -----------------------------------------------------------------


@dataclass
class ShapleyMCResult:
    shapley: np.ndarray
    standard_errors: np.ndarray
    evaluations: int
    variance: float
    permutations: int
    inner_samples: int
    outer_samples: int
    degenerate: bool = False
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        return {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in d.items()}


def shapley_permutation_estimate(f: Evaluator, space: ModelSpace, permutations: int = 1000,
                                 inner_samples: int = 3, seed: int = 0, outer_samples: int = 1,
                                 variance_samples: int = 10_000, chunk_rows: int = 2**16) -> ShapleyMCResult:
    """Shapley effects by random permutations of incremental costs.

    For each permutation the cost ``c(J) = E[Var(Y | X_{-J})]`` of every
    prefix ``J`` is estimated with ``outer_samples`` draws of ``X_{-J}`` and
    ``inner_samples`` draws of ``X_J``; the full-set cost is the sample
    variance of ``Y``, so the increments telescope and the normalized
    estimates sum to one exactly.
    """
    if permutations < 1 or inner_samples < 2 or outer_samples < 1:
        raise DomainError("need permutations >= 1, inner_samples >= 2, outer_samples >= 1")
    N = space.ndim
    rng = np.random.default_rng(seed)

    def draw(k):
        return space.sample(rng.uniform(1e-12, 1 - 1e-12, size=(k, N)))

    Xv = draw(variance_samples)
    yv = f.evaluate_batch(Xv)
    check_finite(Xv, yv)
    var = float(np.var(yv, ddof=1))
    evals = variance_samples
    if not var > 0:
        return ShapleyMCResult(np.zeros(N), np.zeros(N), evals, var, permutations, inner_samples,
                               outer_samples, degenerate=True)

    increments = np.zeros((permutations, N))
    perms = np.array([rng.permutation(N) for _ in range(permutations)])
    no, ni = outer_samples, inner_samples
    # rows per permutation: prefix j (1..N-1) x outer o x inner i
    per_perm = (N - 1) * no * ni
    chunk = max(1, chunk_rows // per_perm)
    for start in range(0, permutations, chunk):
        block = perms[start:start + chunk]
        P = block.shape[0]
        outer = draw(P * (N - 1) * no).reshape(P, N - 1, no, 1, N)
        inner = draw(P * per_perm).reshape(P, N - 1, no, ni, N)
        # take[p, j, n] is True when variable n is among the first j+1 of permutation p
        rank_of = np.argsort(block, axis=1)
        take = rank_of[:, None, :] <= np.arange(N - 1)[None, :, None]
        X = np.where(take[:, :, None, None, :], inner, outer).reshape(-1, N)
        y = f.evaluate_batch(X)
        check_finite(X, y)
        evals += X.shape[0]
        cost = np.var(y.reshape(P, N - 1, no, ni), axis=3, ddof=1).mean(axis=2)
        steps = np.diff(np.concatenate([np.zeros((P, 1)), cost, np.full((P, 1), var)], axis=1), axis=1)
        np.put_along_axis(increments[start:start + P], block, steps, axis=1)
    phi = increments.mean(axis=0) / var
    se = increments.std(axis=0, ddof=1) / np.sqrt(permutations) / var if permutations > 1 else np.full(N, np.nan)
    return ShapleyMCResult(phi, se, evals, var, permutations, inner_samples, outer_samples)
