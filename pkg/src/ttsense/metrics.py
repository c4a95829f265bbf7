"""Sensitivity metrics as contractions of a Sobol TT with automaton masks."""

from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass, field

import numpy as np

from . import tt as ttm
from .errors import ConsistencyError, DomainError
from .masks import (
    hamming_mask_tt,
    hamming_state_tt,
    hamming_weight_tt,
    length_state_tt,
    reciprocal_weight_tt,
)
from .sobol import SobolTT, closed_tt, query_index, total_index

__all__ = [
    "SensitivityReport",
    "mean_dimension",
    "dimension_distribution",
    "effective_superposition",
    "truncation_profile",
    "effective_truncation",
    "length_spectrum",
    "effective_successive",
    "shapley_values",
    "first_order_indices",
    "total_indices",
    "full_report",
    "report_to_dict",
    "dims_table_csv",
    "indices_table_csv",
    "dimdist_csv",
]

DEFAULT_EPSILON = 0.05
RESIDUAL_WARN = 1e-6
RESIDUAL_FAIL = 1e-3


def _check_eps(eps: float):
    if not 0.0 < eps < 1.0:
        raise DomainError(f"epsilon must lie in (0, 1), got {eps}")


def _first_hit(cumulative: np.ndarray, eps: float):
    """First 1-based position where ``cumulative >= 1 - eps``; else the last one."""
    hits = np.nonzero(cumulative >= 1.0 - eps)[0]
    k = int(hits[0]) if hits.size else cumulative.size - 1
    return k + 1, float(cumulative[k])


def mean_dimension(s: SobolTT) -> float:
    """``D_S = <S, W>``."""
    return ttm.dot(s.tensor, hamming_weight_tt(s.ndim))


def _channels(s: SobolTT, state: ttm.TTTensor, what: str) -> np.ndarray:
    v = ttm.state_contract(s.tensor, state)
    if abs(v[0]) > RESIDUAL_FAIL:
        raise ConsistencyError(f"{what}: mass {v[0]:.3e} at the empty tuple; the Sobol TT is not zeroed there")
    return v


def dimension_distribution(s: SobolTT) -> np.ndarray:
    """``nu[k] = sum_{|alpha| = k} S_alpha`` for ``k = 1..N``; ``nu[0]`` holds the residual at the empty tuple."""
    return _channels(s, hamming_state_tt(s.ndim), "dimension distribution")


def effective_superposition(s: SobolTT, eps: float = DEFAULT_EPSILON):
    """Smallest order ``k`` whose cumulative variance share reaches ``1 - eps``."""
    _check_eps(eps)
    nu = dimension_distribution(s)
    return _first_hit(np.cumsum(nu[1:]), eps)


def truncation_profile(s: SobolTT, cap: int = ttm.DEFAULT_FULL_CAP):
    """``v(n) = max_{|alpha| <= n} S^C_alpha`` with its maximizing tuple, for ``n = 1..N``.

    Exhaustive over ``2^N`` entries per ``n``; raises ResourceError past ``cap``.
    """
    closed = closed_tt(s)
    values, tuples = [], []
    for n in range(1, s.ndim + 1):
        v, idx = ttm.max_entry(ttm.hadamard(closed, hamming_mask_tt(s.ndim, n)), cap=cap)
        values.append(v)
        tuples.append(tuple(k for k, b in enumerate(idx) if b))
    return np.array(values), tuples


def effective_truncation(s: SobolTT, eps: float = DEFAULT_EPSILON, cap: int = ttm.DEFAULT_FULL_CAP):
    """``(d_T, achieved, tuple)``: fewest variables whose closed index reaches ``1 - eps``.

    The tuple holds 0-based variable positions.
    """
    _check_eps(eps)
    values, tuples = truncation_profile(s, cap)
    d, achieved = _first_hit(values, eps)
    return d, achieved, tuples[d - 1]


def length_spectrum(s: SobolTT) -> np.ndarray:
    """``l[k] = sum_{len(alpha) = k} S_alpha``; ``l[0]`` is the empty-tuple residual."""
    return _channels(s, length_state_tt(s.ndim), "length spectrum")


def effective_successive(s: SobolTT, eps: float = DEFAULT_EPSILON):
    _check_eps(eps)
    return _first_hit(np.cumsum(length_spectrum(s)[1:]), eps)


def shapley_values(s: SobolTT, rel_tol: float = 1e-8) -> np.ndarray:
    """``phi_n = sum_{alpha containing n} S_alpha / |alpha|``.

    Weights ``S`` by ``1/W`` and sums over supersets with the per-core
    transform ``slice0 += slice1``; the singleton entries are the values.
    """
    N = s.ndim
    recip = reciprocal_weight_tt(N, rel_tol=rel_tol).tensor
    weighted = ttm.round_tt(ttm.hadamard(s.tensor, recip), 1e-12)
    cores = []
    for c in weighted.cores:
        new = c.copy()
        new[:, 0, :] = c[:, 0, :] + c[:, 1, :]
        cores.append(new)
    supersets = ttm.TTTensor(tuple(cores))
    singletons = np.eye(N, dtype=np.int64)
    return ttm.evaluate_many(supersets, singletons)


def first_order_indices(s: SobolTT) -> np.ndarray:
    return np.array([query_index(s, [n]) for n in range(s.ndim)])


def total_indices(s: SobolTT) -> np.ndarray:
    return np.array([total_index(s, [n]) for n in range(s.ndim)])


@dataclass
class SensitivityReport:
    epsilon: float
    mean_dimension: float
    dimension_distribution: list
    residual: float
    effective_superposition: int
    superposition_variance: float
    effective_truncation: int
    truncation_variance: float
    truncation_tuple: list
    effective_successive: int
    successive_variance: float
    shapley: list
    first_order: list
    totals: list
    names: list
    # D_S minus the sum of first-order total indices; zero in exact arithmetic
    liu_owen_discrepancy: float
    mean: float = float("nan")
    variance: float = float("nan")
    extra: dict = field(default_factory=dict)


def full_report(s: SobolTT, eps: float = DEFAULT_EPSILON, cap: int = ttm.DEFAULT_FULL_CAP) -> SensitivityReport:
    _check_eps(eps)
    nu = dimension_distribution(s)
    d_sup, v_sup = _first_hit(np.cumsum(nu[1:]), eps)
    d_tr, v_tr, tup = effective_truncation(s, eps, cap)
    d_suc, v_suc = effective_successive(s, eps)
    ds = mean_dimension(s)
    totals = total_indices(s)
    names = list(s.variable_names())
    return SensitivityReport(
        epsilon=eps,
        mean_dimension=ds,
        dimension_distribution=nu[1:].tolist(),
        residual=float(nu[0]),
        effective_superposition=d_sup,
        superposition_variance=v_sup,
        effective_truncation=d_tr,
        truncation_variance=v_tr,
        truncation_tuple=[names[k] for k in tup],
        effective_successive=d_suc,
        successive_variance=v_suc,
        shapley=shapley_values(s).tolist(),
        first_order=first_order_indices(s).tolist(),
        totals=totals.tolist(),
        names=names,
        liu_owen_discrepancy=float(ds - totals.sum()),
        mean=s.mean,
        variance=s.variance,
    )


def report_to_dict(r: SensitivityReport) -> dict:
    return asdict(r)


def dims_table_csv(r: SensitivityReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["metric", "value", "relative_variance"])
    w.writerow(["mean_dimension", f"{r.mean_dimension:.6f}", ""])
    w.writerow(["superposition", r.effective_superposition, f"{r.superposition_variance:.6f}"])
    w.writerow(["truncation", r.effective_truncation, f"{r.truncation_variance:.6f}"])
    w.writerow(["successive", r.effective_successive, f"{r.successive_variance:.6f}"])
    return buf.getvalue()


def indices_table_csv(r: SensitivityReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["variable", "first_order", "total", "shapley"])
    for name, s1, st, phi in zip(r.names, r.first_order, r.totals, r.shapley):
        w.writerow([name, f"{s1:.6f}", f"{st:.6f}", f"{phi:.6f}"])
    return buf.getvalue()


def dimdist_csv(r: SensitivityReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["order", "mass"])
    for k, m in enumerate(r.dimension_distribution, start=1):
        w.writerow([k, repr(float(m))])
    return buf.getvalue()
