"""Sobol tensor train: all 2^N - 1 Sobol indices of a TT surrogate in one TT.

The entry at binary index ``alpha`` (``alpha_n = 1`` iff variable ``n`` is in
the tuple) is the Sobol index ``S_alpha`` of the surrogate's grid tensor under
the discrete product measure given by the axis weights.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import tt as ttm
from .errors import DegenerateModelError, DomainError, RangeError, ShapeError
from .masks import nonempty_mask_tt
from .space import ModelSpace

__all__ = [
    "SobolTT",
    "build_sobol_tt",
    "tuple_to_bits",
    "query_index",
    "closed_tt",
    "closed_index",
    "total_index",
    "save_sobol",
    "load_sobol",
]

DEFAULT_ROUND_TOL = 1e-10
# variance below this fraction of E[f^2] is indistinguishable from rounding noise
DEGENERATE_RATIO = 1e-24


@dataclass(frozen=True, eq=False)
class SobolTT:
    tensor: ttm.TTTensor
    mean: float
    variance: float
    round_tol: float
    names: tuple = ()

    @property
    def ndim(self) -> int:
        return self.tensor.ndim

    def variable_names(self) -> tuple:
        return self.names or tuple(f"x{n + 1}" for n in range(self.ndim))


def _kron_slices(core: np.ndarray, weights: np.ndarray):
    """Mean slice ``m`` and the two slices of the squared-ANOVA core."""
    m = np.einsum("aib,i->ab", core, weights)
    resid = core - m[:, None, :]
    r0, _, r1 = core.shape
    mean_sq = np.einsum("ab,cd->acbd", m, m).reshape(r0 * r0, r1 * r1)
    var_part = np.einsum("i,aib,cid->acbd", weights, resid, resid).reshape(r0 * r0, r1 * r1)
    return m, mean_sq, var_part


def build_sobol_tt(surrogate: ttm.TTTensor, space: ModelSpace | Sequence,
                   round_tol: float = DEFAULT_ROUND_TOL, names: Iterable[str] | None = None) -> SobolTT:
    """Extract the Sobol TT of a surrogate.

    Each core ``T_n`` is split into its weighted mean slice ``m_n`` and zero-mean
    residual slices ``C_n[i] = T_n[i] - m_n``. The core with slices
    ``m_n (x) m_n`` and ``sum_i w_i C_n[i] (x) C_n[i]`` produces a TT whose entry
    at ``alpha != 0`` is ``Var[f_alpha]``; the empty-tuple entry (``E[f]^2``)
    is removed by a Hadamard product with the nonempty mask, so no
    cancellation occurs. The variance is summed the same way, one variable
    at a time, then everything is scaled by ``1 / Var[f]`` and rounded.

    ``space`` may be a ModelSpace or a list of per-axis weight vectors.
    """
    if isinstance(space, ModelSpace):
        weights = [ax.weights for ax in space.axes]
        names = tuple(names) if names is not None else space.names
    else:
        weights = [np.asarray(w, dtype=np.float64) for w in space]
        names = tuple(names) if names is not None else ()
    if surrogate.trailing_rank_open:
        raise ShapeError("surrogate must be an ordinary TT")
    if tuple(len(w) for w in weights) != surrogate.mode_sizes:
        raise ShapeError(
            f"surrogate modes {surrogate.mode_sizes} do not match grid sizes {tuple(len(w) for w in weights)}"
        )
    N = surrogate.ndim
    means, mean_sq, var_part = [], [], []
    for core, w in zip(surrogate.cores, weights):
        m, a, b = _kron_slices(core, w)
        means.append(m)
        mean_sq.append(a)
        var_part.append(b)

    mean = np.ones((1, 1))
    for m in means:
        mean = mean @ m
    mean = float(mean[0, 0])

    # Var[f] = sum_k (prefix with no variable) * (variable k present) * (anything after)
    suffix = [None] * (N + 1)
    suffix[N] = np.ones((1, 1))
    for k in range(N - 1, -1, -1):
        suffix[k] = (mean_sq[k] + var_part[k]) @ suffix[k + 1]
    variance = 0.0
    second_moment = float(suffix[0][0, 0])
    prefix = np.ones((1, 1))
    for k in range(N):
        variance += float((prefix @ var_part[k] @ suffix[k + 1])[0, 0])
        prefix = prefix @ mean_sq[k]
    if not variance > DEGENERATE_RATIO * max(second_moment, 0.0) or variance <= 0:
        raise DegenerateModelError(f"model variance {variance:.3e} is zero to working precision")

    cores = []
    for a, b in zip(mean_sq, var_part):
        r0 = int(round(np.sqrt(a.shape[0])))
        r1 = int(round(np.sqrt(a.shape[1])))
        cores.append(np.stack([a, b], axis=1).reshape(r0 * r0, 2, r1 * r1))
    U = ttm.TTTensor(tuple(cores))
    S = ttm.scale(ttm.hadamard(U, nonempty_mask_tt(N)), 1.0 / variance)
    S = ttm.round_tt(S, round_tol)
    return SobolTT(S, mean, variance, round_tol, tuple(names))


def tuple_to_bits(N: int, variables: Iterable[int]) -> list:
    """Binary index of a tuple of 0-based variable positions."""
    bits = [0] * N
    for v in variables:
        v = int(v)
        if not 0 <= v < N:
            raise RangeError(f"variable {v} out of range [0, {N})")
        bits[v] = 1
    return bits


def _resolve(s: SobolTT, variables) -> list:
    names = s.variable_names()
    out = []
    for v in variables:
        if isinstance(v, str):
            if v not in names:
                raise RangeError(f"unknown variable {v!r}")
            out.append(names.index(v))
        else:
            out.append(int(v))
    return out


def query_index(s: SobolTT, variables: Iterable) -> float:
    """``S_alpha`` for a tuple of 0-based positions or variable names; 0 for the empty tuple."""
    bits = tuple_to_bits(s.ndim, _resolve(s, variables))
    return ttm.evaluate(s.tensor, bits)


def closed_tt(s: SobolTT | ttm.TTTensor) -> ttm.TTTensor:
    """TT of closed indices: entry at ``alpha`` is ``sum_{beta subset of alpha} S_beta``."""
    t = s.tensor if isinstance(s, SobolTT) else s
    cores = []
    for c in t.cores:
        new = c.copy()
        new[:, 1, :] = c[:, 0, :] + c[:, 1, :]
        cores.append(new)
    return ttm.TTTensor(tuple(cores), t.trailing_rank_open)


def closed_index(s: SobolTT, variables: Iterable) -> float:
    bits = tuple_to_bits(s.ndim, _resolve(s, variables))
    return ttm.evaluate(closed_tt(s), bits)


def total_index(s: SobolTT, variables: Iterable) -> float:
    """``S^T_alpha = 1 - S^C`` of the complement."""
    idx = _resolve(s, variables)
    if not idx:
        raise DomainError("total index of the empty tuple is undefined")
    bits = tuple_to_bits(s.ndim, idx)
    complement = [1 - b for b in bits]
    return 1.0 - ttm.evaluate(closed_tt(s), complement)


def save_sobol(s: SobolTT, path) -> None:
    """Write the TT file plus a JSON sidecar ``<path>.json``."""
    path = Path(path)
    ttm.save(s.tensor, path)
    meta = {"mean": s.mean, "variance": s.variance, "round_tol": s.round_tol,
            "names": list(s.variable_names())}
    Path(str(path) + ".json").write_text(json.dumps(meta, indent=2))


def load_sobol(path) -> SobolTT:
    path = Path(path)
    t = ttm.load(path)
    meta = json.loads(Path(str(path) + ".json").read_text())
    return SobolTT(t, meta["mean"], meta["variance"], meta["round_tol"], tuple(meta["names"]))
