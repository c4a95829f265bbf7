"""Discretized independent input measures.

Each input variable gets an equal-weight quantile grid: node ``i`` of ``I`` is
the ``(i + 0.5) / I`` quantile of its (possibly truncated) marginal, and every
node carries weight ``1 / I``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import special

from .errors import DomainError, RangeError

__all__ = [
    "Distribution",
    "AxisGrid",
    "ModelSpace",
    "build_axis",
    "index_to_point",
    "nearest_index",
    "uniform_space",
]

KINDS = ("uniform", "normal", "lognormal", "scaled_lognormal")

# quantile ranges narrower than this cannot be discretized reliably
MIN_MASS = 1e-12


@dataclass(frozen=True)
class Distribution:
    """Marginal distribution descriptor.

    ``kind`` is one of ``uniform`` (params ``a, b``), ``normal`` (``mu, sigma``),
    ``lognormal`` (``mu, sigma`` of the underlying normal) or
    ``scaled_lognormal`` (``c, mu, sigma``: ``c * LogN(mu, sigma)``).
    ``truncation`` is an optional ``(lo, hi)`` interval; either end may be
    infinite.
    """

    kind: str
    params: tuple
    truncation: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        if self.truncation is not None:
            lo, hi = self.truncation
            lo = -math.inf if lo is None else float(lo)
            hi = math.inf if hi is None else float(hi)
            object.__setattr__(self, "truncation", (lo, hi))
        self._validate()

    def _validate(self):
        k, p = self.kind, self.params
        if k not in KINDS:
            raise DomainError(f"unknown distribution {k!r}; expected one of {KINDS}")
        expected = {"uniform": 2, "normal": 2, "lognormal": 2, "scaled_lognormal": 3}[k]
        if len(p) != expected:
            raise DomainError(f"{k} takes {expected} parameters, got {len(p)}")
        if k == "uniform" and not p[0] < p[1]:
            raise DomainError("uniform(a, b) needs a < b")
        if k in ("normal", "lognormal") and not p[1] > 0:
            raise DomainError("sigma must be positive")
        if k == "scaled_lognormal" and not (p[2] > 0 and p[0] > 0):
            raise DomainError("scaled_lognormal needs c > 0 and sigma > 0")
        if self.truncation is not None:
            lo, hi = self.truncation
            if not lo < hi:
                raise DomainError(f"empty truncation interval {self.truncation}")
            if self._mass() < MIN_MASS:
                raise DomainError(f"truncation interval {self.truncation} has ~zero probability mass")

    # standard-normal helpers; ndtri is accurate to ~1e-16 in the quantile
    def _to_z(self, x):
        k, p = self.kind, self.params
        x = np.asarray(x, dtype=np.float64)
        if k == "normal":
            return (x - p[0]) / p[1]
        if k == "lognormal":
            with np.errstate(divide="ignore"):
                return (np.log(np.maximum(x, 0.0)) - p[0]) / p[1]
        if k == "scaled_lognormal":
            with np.errstate(divide="ignore"):
                return (np.log(np.maximum(x, 0.0) / p[0]) - p[1]) / p[2]
        raise AssertionError(k)

    def _from_z(self, z):
        k, p = self.kind, self.params
        if k == "normal":
            return p[0] + p[1] * z
        if k == "lognormal":
            return np.exp(p[0] + p[1] * z)
        return p[0] * np.exp(p[1] + p[2] * z)

    def cdf(self, x):
        """Untruncated marginal CDF."""
        if self.kind == "uniform":
            a, b = self.params
            return np.clip((np.asarray(x, dtype=np.float64) - a) / (b - a), 0.0, 1.0)
        return special.ndtr(self._to_z(x))

    def _untruncated_ppf(self, q):
        q = np.asarray(q, dtype=np.float64)
        if self.kind == "uniform":
            a, b = self.params
            return a + (b - a) * q
        return self._from_z(special.ndtri(q))

    def _bounds(self):
        if self.truncation is None:
            return 0.0, 1.0
        lo, hi = self.truncation
        return float(self.cdf(lo)), float(self.cdf(hi))

    def _mass(self):
        lo, hi = self._bounds()
        return hi - lo

    def ppf(self, u):
        """Quantile function of the (truncated, renormalized) marginal."""
        lo, hi = self._bounds()
        return self._untruncated_ppf(lo + np.asarray(u, dtype=np.float64) * (hi - lo))

    def mean(self) -> float:
        """Mean of the truncated marginal, by adaptive quadrature of the quantile function."""
        from scipy import integrate

        val, _ = integrate.quad(lambda u: float(self.ppf(u)), 0.0, 1.0, limit=200)
        return val

    def to_dict(self) -> dict:
        d = {"distribution": self.kind, "params": list(self.params)}
        if self.truncation is not None:
            d["truncation"] = [None if math.isinf(v) else v for v in self.truncation]
        return d


@dataclass(frozen=True, eq=False)
class AxisGrid:
    nodes: np.ndarray
    weights: np.ndarray
    distribution: Distribution | None = None

    def __post_init__(self):
        nodes = np.array(self.nodes, dtype=np.float64)
        weights = np.array(self.weights, dtype=np.float64)
        if nodes.ndim != 1 or nodes.size < 1 or nodes.shape != weights.shape:
            raise DomainError("nodes and weights must be nonempty 1-D arrays of equal length")
        if np.any(np.diff(nodes) <= 0):
            raise DomainError("nodes must be strictly increasing")
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-12:
            raise DomainError("weights must be nonnegative and sum to 1")
        nodes.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    @property
    def size(self) -> int:
        return self.nodes.size


def build_axis(distribution: Distribution, points: int) -> AxisGrid:
    """Equal-weight midpoint-quantile grid for one marginal."""
    if points < 1:
        raise DomainError("points must be >= 1")
    u = (np.arange(points) + 0.5) / points
    nodes = distribution.ppf(u)
    if not np.all(np.isfinite(nodes)):
        raise DomainError(f"non-finite quantile nodes for {distribution}")
    return AxisGrid(nodes, np.full(points, 1.0 / points), distribution)


@dataclass(frozen=True, eq=False)
class ModelSpace:
    axes: tuple
    names: tuple = field(default=())

    def __post_init__(self):
        axes = tuple(self.axes)
        if not axes:
            raise DomainError("a model space needs at least one axis")
        names = tuple(self.names) if self.names else tuple(f"x{n + 1}" for n in range(len(axes)))
        if len(names) != len(axes):
            raise DomainError("one name per axis required")
        if len(set(names)) != len(names):
            raise DomainError("variable names must be unique")
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "names", names)

    @property
    def ndim(self) -> int:
        return len(self.axes)

    @property
    def mode_sizes(self) -> tuple:
        return tuple(a.size for a in self.axes)

    def points(self, indices) -> np.ndarray:
        """Vectorized ``index_to_point`` for an ``(M, N)`` integer array."""
        idx = np.asarray(indices, dtype=np.int64)
        if idx.ndim != 2 or idx.shape[1] != self.ndim:
            raise RangeError(f"indices must have shape (M, {self.ndim})")
        sizes = np.asarray(self.mode_sizes)
        if idx.size and (np.any(idx < 0) or np.any(idx >= sizes)):
            raise RangeError("grid index out of range")
        out = np.empty(idx.shape, dtype=np.float64)
        for n, ax in enumerate(self.axes):
            out[:, n] = ax.nodes[idx[:, n]]
        return out

    def sample(self, u) -> np.ndarray:
        """Map points of the unit cube to the continuous (undiscretized) marginals."""
        u = np.asarray(u, dtype=np.float64)
        out = np.empty_like(u)
        for n, ax in enumerate(self.axes):
            if ax.distribution is None:
                raise DomainError(f"axis {self.names[n]} has no distribution to sample from")
            out[:, n] = ax.distribution.ppf(u[:, n])
        return out


def index_to_point(space: ModelSpace, index: Sequence[int]) -> list:
    if len(index) != space.ndim:
        raise RangeError(f"expected {space.ndim} indices, got {len(index)}")
    return [float(v) for v in space.points([list(index)])[0]]


def nearest_index(space: ModelSpace, point: Sequence[float]) -> list:
    """Grid index of the node closest to each coordinate."""
    out = []
    for ax, x in zip(space.axes, point):
        out.append(int(np.argmin(np.abs(ax.nodes - x))))
    return out


def uniform_space(N: int, points: int, a: float = 0.0, b: float = 1.0, names=None) -> ModelSpace:
    axis = build_axis(Distribution("uniform", (a, b)), points)
    return ModelSpace(tuple([axis] * N), tuple(names) if names else ())
