"""Tensor-train container and its compressed-domain algebra.

A tensor train (TT) of order N stores a tensor of shape ``I_1 x ... x I_N`` as
N cores, core ``n`` having shape ``(R_{n-1}, I_n, R_n)``. Entry ``i`` is the
product of the matrices ``core_n[:, i_n, :]``. Boundary ranks are 1, except
for "state" tensors whose last rank ``R_N = K`` is left open and whose
entries are therefore K-vectors.

All functions here are pure and never modify their inputs.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import BinaryIO, Iterable, Sequence

import numpy as np

from .errors import RangeError, ResourceError, ShapeError

__all__ = [
    "TTTensor",
    "DEFAULT_FULL_CAP",
    "from_cores",
    "ones",
    "zeros",
    "delta",
    "random_tt",
    "from_dense",
    "evaluate",
    "evaluate_many",
    "dot",
    "state_contract",
    "hadamard",
    "add",
    "scale",
    "round_tt",
    "full",
    "max_entry",
    "norm",
    "save",
    "load",
    "write_tt",
    "read_tt",
]

DEFAULT_FULL_CAP = 2**25
MAGIC = b"TTSENSE1"


@dataclass(frozen=True, eq=False)
class TTTensor:
    """Immutable tensor train.

    Parameters
    ----------
    cores : tuple of ndarray
        Core ``n`` has shape ``(R_{n-1}, I_n, R_n)``.
    trailing_rank_open : bool
        If True the last rank may exceed 1 and entries are vectors.
    """

    cores: tuple
    trailing_rank_open: bool = False

    def __post_init__(self):
        cores = []
        for c in self.cores:
            c = np.array(c, dtype=np.float64, copy=True)
            if c.ndim != 3:
                raise ShapeError(f"TT cores must be 3-way, got shape {c.shape}")
            c.setflags(write=False)
            cores.append(c)
        if not cores:
            raise ShapeError("a TT needs at least one core")
        if cores[0].shape[0] != 1:
            raise ShapeError("first rank must be 1")
        for n in range(len(cores) - 1):
            if cores[n].shape[2] != cores[n + 1].shape[0]:
                raise ShapeError(
                    f"rank mismatch between cores {n} and {n + 1}: "
                    f"{cores[n].shape[2]} != {cores[n + 1].shape[0]}"
                )
        if not self.trailing_rank_open and cores[-1].shape[2] != 1:
            raise ShapeError("last rank must be 1 unless trailing_rank_open")
        if any(c.shape[1] < 1 for c in cores):
            raise ShapeError("mode sizes must be positive")
        object.__setattr__(self, "cores", tuple(cores))

    @property
    def ndim(self) -> int:
        return len(self.cores)

    @property
    def mode_sizes(self) -> tuple:
        return tuple(c.shape[1] for c in self.cores)

    @property
    def ranks(self) -> tuple:
        return (1,) + tuple(c.shape[2] for c in self.cores)

    @property
    def n_outputs(self) -> int:
        """Size of the trailing rank (1 for an ordinary TT)."""
        return self.cores[-1].shape[2]

    @property
    def size(self) -> int:
        """Number of stored core elements."""
        return sum(c.size for c in self.cores)

    def __repr__(self):
        open_ = ", open" if self.trailing_rank_open else ""
        return f"TTTensor(shape={self.mode_sizes}, ranks={self.ranks}{open_})"


def from_cores(cores: Iterable, trailing_rank_open: bool = False) -> TTTensor:
    return TTTensor(tuple(cores), trailing_rank_open)


def ones(mode_sizes: Sequence[int]) -> TTTensor:
    return TTTensor(tuple(np.ones((1, i, 1)) for i in mode_sizes))


def zeros(mode_sizes: Sequence[int]) -> TTTensor:
    return TTTensor(tuple(np.zeros((1, i, 1)) for i in mode_sizes))


def delta(mode_sizes: Sequence[int], index: Sequence[int]) -> TTTensor:
    """Rank-1 TT that is 1 at ``index`` and 0 elsewhere."""
    _check_index(mode_sizes, index)
    cores = []
    for i, k in zip(mode_sizes, index):
        c = np.zeros((1, i, 1))
        c[0, k, 0] = 1.0
        cores.append(c)
    return TTTensor(tuple(cores))


def random_tt(mode_sizes: Sequence[int], rank, rng=None, trailing: int | None = None) -> TTTensor:
    """Gaussian random TT; ``rank`` is an int or a list of N-1 inner ranks."""
    rng = np.random.default_rng(rng)
    N = len(mode_sizes)
    if np.isscalar(rank):
        inner = [int(rank)] * (N - 1)
    else:
        inner = list(rank)
    ranks = [1] + inner + [trailing if trailing else 1]
    cores = [rng.standard_normal((ranks[n], mode_sizes[n], ranks[n + 1])) for n in range(N)]
    return TTTensor(tuple(cores), trailing_rank_open=bool(trailing))


def _truncation_rank(s: np.ndarray, abs_tol: float) -> int:
    """Smallest r such that the discarded tail of ``s`` has norm <= abs_tol."""
    if s.size == 0:
        return 1
    tail = np.sqrt(np.cumsum((s**2)[::-1]))[::-1]
    # tail[r] is the norm of s[r:]
    ok = np.nonzero(tail <= abs_tol)[0]
    r = int(ok[0]) if ok.size else s.size
    return max(r, 1)


def from_dense(array, rel_tol: float = 0.0, max_rank: int | None = None) -> TTTensor:
    """TT-SVD of a dense array."""
    a = np.asarray(array, dtype=np.float64)
    shape = a.shape
    N = len(shape)
    if N == 0:
        raise ShapeError("need at least one dimension")
    total = np.linalg.norm(a)
    budget = rel_tol * total / np.sqrt(max(N - 1, 1))
    cores = []
    r = 1
    c = a.reshape(1, -1)
    for n in range(N - 1):
        c = c.reshape(r * shape[n], -1)
        u, s, vt = np.linalg.svd(c, full_matrices=False)
        rn = _truncation_rank(s, budget) if rel_tol > 0 else max(int(np.sum(s > 0)), 1)
        if max_rank is not None:
            rn = min(rn, max_rank)
        cores.append(u[:, :rn].reshape(r, shape[n], rn))
        c = s[:rn, None] * vt[:rn]
        r = rn
    cores.append(c.reshape(r, shape[-1], 1))
    return TTTensor(tuple(cores))


def _check_index(mode_sizes, index):
    if len(index) != len(mode_sizes):
        raise RangeError(f"index has {len(index)} entries, tensor has {len(mode_sizes)} modes")
    for n, (k, i) in enumerate(zip(index, mode_sizes)):
        if not 0 <= k < i:
            raise RangeError(f"index {k} out of range [0, {i}) in mode {n}")


def _check_same_modes(a: TTTensor, b: TTTensor):
    if a.mode_sizes != b.mode_sizes:
        raise ShapeError(f"mode sizes differ: {a.mode_sizes} vs {b.mode_sizes}")


def evaluate(t: TTTensor, index: Sequence[int]) -> float:
    """Entry of ``t`` at a multi-index."""
    if t.trailing_rank_open:
        raise ShapeError("evaluate needs a closed TT; use state_contract or full")
    index = [int(k) for k in index]
    _check_index(t.mode_sizes, index)
    v = t.cores[0][:, index[0], :]
    for c, k in zip(t.cores[1:], index[1:]):
        v = v @ c[:, k, :]
    return float(v[0, 0])


def evaluate_many(t: TTTensor, indices) -> np.ndarray:
    """Entries of ``t`` at the rows of an integer ``(M, N)`` array.

    For a state tensor the result has shape ``(M, K)``.
    """
    idx = np.asarray(indices, dtype=np.int64)
    if idx.ndim != 2 or idx.shape[1] != t.ndim:
        raise RangeError(f"indices must have shape (M, {t.ndim})")
    sizes = np.asarray(t.mode_sizes)
    if idx.size and (np.any(idx < 0) or np.any(idx >= sizes)):
        raise RangeError("index out of range")
    v = t.cores[0][0, idx[:, 0], :]
    for n in range(1, t.ndim):
        v = np.einsum("ma,amb->mb", v, t.cores[n][:, idx[:, n], :])
    if t.trailing_rank_open:
        return v
    return v[:, 0]


def _contract(a: TTTensor, b: TTTensor) -> np.ndarray:
    """Left-to-right contraction over all modes; returns the final (Ra, Rb) matrix."""
    _check_same_modes(a, b)
    C = np.ones((1, 1))
    for ca, cb in zip(a.cores, b.cores):
        # C: (ra, rb) -> (i, Ra', rb) -> (Ra', Rb')
        tmp = np.einsum("ab,aic->ibc", C, ca)
        C = np.einsum("ibc,bid->cd", tmp, cb)
    return C


def dot(a: TTTensor, b: TTTensor) -> float:
    """Sum over all entries of ``a * b``."""
    if a.trailing_rank_open or b.trailing_rank_open:
        raise ShapeError("dot needs closed TTs; use state_contract")
    return float(_contract(a, b)[0, 0])


def state_contract(a: TTTensor, m: TTTensor) -> np.ndarray:
    """Contract an ordinary TT with a state tensor; returns the K-vector on the free edge."""
    if a.trailing_rank_open:
        raise ShapeError("first operand must be a closed TT")
    if not m.trailing_rank_open:
        raise ShapeError("second operand must be a state tensor (trailing_rank_open)")
    return _contract(a, m)[0].copy()


def norm(a: TTTensor) -> float:
    """Frobenius norm."""
    if a.trailing_rank_open:
        return float(np.sqrt(max(np.trace(_contract(a, a)), 0.0)))
    return float(np.sqrt(max(dot(a, a), 0.0)))


def hadamard(a: TTTensor, b: TTTensor) -> TTTensor:
    """Exact entrywise product via slice-wise Kronecker products.

    At most one operand may be a state tensor; the result then inherits its
    open trailing rank.
    """
    _check_same_modes(a, b)
    if a.trailing_rank_open and b.trailing_rank_open:
        raise ShapeError("cannot multiply two state tensors")
    cores = []
    for ca, cb in zip(a.cores, b.cores):
        ra0, I, ra1 = ca.shape
        rb0, _, rb1 = cb.shape
        c = np.einsum("aib,cid->acibd", ca, cb).reshape(ra0 * rb0, I, ra1 * rb1)
        cores.append(c)
    return TTTensor(tuple(cores), a.trailing_rank_open or b.trailing_rank_open)


def add(a: TTTensor, b: TTTensor) -> TTTensor:
    """Exact entrywise sum (block-diagonal cores)."""
    _check_same_modes(a, b)
    if a.trailing_rank_open or b.trailing_rank_open:
        raise ShapeError("add is defined for closed TTs only")
    N = a.ndim
    if N == 1:
        return TTTensor((a.cores[0] + b.cores[0],))
    cores = []
    for n, (ca, cb) in enumerate(zip(a.cores, b.cores)):
        ra0, I, ra1 = ca.shape
        rb0, _, rb1 = cb.shape
        if n == 0:
            c = np.concatenate([ca, cb], axis=2)
        elif n == N - 1:
            c = np.concatenate([ca, cb], axis=0)
        else:
            c = np.zeros((ra0 + rb0, I, ra1 + rb1))
            c[:ra0, :, :ra1] = ca
            c[ra0:, :, ra1:] = cb
        cores.append(c)
    return TTTensor(tuple(cores))


def scale(a: TTTensor, c: float) -> TTTensor:
    cores = list(a.cores)
    cores[0] = cores[0] * float(c)
    return TTTensor(tuple(cores), a.trailing_rank_open)


def _orthogonalize_right(cores: list) -> list:
    """Right-to-left QR sweep; cores 1..N-1 become right-orthonormal."""
    cores = [c.copy() for c in cores]
    for n in range(len(cores) - 1, 0, -1):
        r0, I, r1 = cores[n].shape
        q, r = np.linalg.qr(cores[n].reshape(r0, I * r1).T)
        k = q.shape[1]
        cores[n] = q.T.reshape(k, I, r1)
        cores[n - 1] = np.einsum("aib,cb->aic", cores[n - 1], r)
    return cores


def round_tt(a: TTTensor, rel_tol: float, max_rank: int | None = None) -> TTTensor:
    """TT-SVD recompression with Frobenius error at most ``rel_tol * norm(a)``.

    Right-to-left orthogonalization, then a left-to-right truncated SVD sweep
    with per-bond budget ``rel_tol * norm / sqrt(N - 1)``.
    """
    if rel_tol < 0:
        raise ValueError("rel_tol must be nonnegative")
    cores = _orthogonalize_right(list(a.cores))
    N = len(cores)
    if N == 1:
        return TTTensor(tuple(cores), a.trailing_rank_open)
    total = np.linalg.norm(cores[0])
    budget = rel_tol * total / np.sqrt(N - 1)
    for n in range(N - 1):
        r0, I, r1 = cores[n].shape
        u, s, vt = np.linalg.svd(cores[n].reshape(r0 * I, r1), full_matrices=False)
        if rel_tol > 0:
            r = _truncation_rank(s, budget)
        else:
            r = s.size
        if max_rank is not None:
            r = min(r, max_rank)
        cores[n] = u[:, :r].reshape(r0, I, r)
        cores[n + 1] = np.einsum("ab,bic->aic", s[:r, None] * vt[:r], cores[n + 1])
    return TTTensor(tuple(cores), a.trailing_rank_open)


def full(a: TTTensor, cap: int = DEFAULT_FULL_CAP) -> np.ndarray:
    """Dense materialization (state tensors get a trailing axis of size K)."""
    numel = int(np.prod(a.mode_sizes, dtype=np.float64)) * a.n_outputs
    if numel > cap:
        raise ResourceError(f"full() would create {numel} entries, above cap {cap}")
    v = a.cores[0].reshape(a.cores[0].shape[1], -1)
    for c in a.cores[1:]:
        v = (v @ c.reshape(c.shape[0], -1)).reshape(-1, c.shape[2])
    if a.trailing_rank_open:
        return v.reshape(a.mode_sizes + (a.n_outputs,))
    return v.reshape(a.mode_sizes)


def _prefix_products(cores) -> np.ndarray:
    """Rows = all prefixes in row-major order, columns = right rank."""
    v = np.ones((1, 1))
    for c in cores:
        v = (v @ c.reshape(c.shape[0], -1)).reshape(-1, c.shape[2])
    return v


def _suffix_products(cores) -> np.ndarray:
    """Rows = left rank, columns = all suffixes in row-major order."""
    v = np.ones((1, 1))
    for c in reversed(cores):
        v = (c.reshape(-1, c.shape[2]) @ v).reshape(c.shape[0], -1)
    return v


def max_entry(a: TTTensor, cap: int = DEFAULT_FULL_CAP, chunk: int = 2**20):
    """Exhaustive maximum; ties go to the smallest row-major index.

    Entries are streamed as (prefix block) x (suffix products) so memory stays
    near ``chunk`` values regardless of the tensor size.
    """
    if a.trailing_rank_open:
        raise ShapeError("max_entry needs a closed TT")
    sizes = a.mode_sizes
    numel = int(np.prod(sizes, dtype=np.float64))
    if numel > cap:
        raise ResourceError(
            f"exhaustive maximization over {numel} entries exceeds cap {cap}; "
            "lower the number of variables or raise the cap"
        )
    N = a.ndim
    # split so that both halves hold about sqrt(numel) entries
    split, acc = 0, 1
    while split < N - 1 and acc * sizes[split] <= np.sqrt(numel):
        acc *= sizes[split]
        split += 1
    left = _prefix_products(a.cores[:split])
    right = _suffix_products(a.cores[split:])
    n_right = right.shape[1]
    rows = max(1, chunk // max(n_right, 1))
    best_val, best_flat = -np.inf, 0
    for start in range(0, left.shape[0], rows):
        block = left[start:start + rows] @ right
        k = int(np.argmax(block))
        v = block.flat[k]
        if v > best_val:
            best_val = float(v)
            best_flat = start * n_right + k
    index = [int(k) for k in np.unravel_index(best_flat, sizes)]
    return best_val, index


# --- file format -------------------------------------------------------------
#
# magic "TTSENSE1" | u64 N | u64 trailing_rank_open | u64 mode_sizes[N] |
# u64 ranks[N+1] | float64 core data, core by core, C order.
# All integers and floats little-endian.


def write_tt(t: TTTensor, fh: BinaryIO) -> None:
    N = t.ndim
    fh.write(MAGIC)
    fh.write(struct.pack("<QQ", N, int(t.trailing_rank_open)))
    fh.write(struct.pack(f"<{N}Q", *t.mode_sizes))
    fh.write(struct.pack(f"<{N + 1}Q", *t.ranks))
    for c in t.cores:
        fh.write(np.ascontiguousarray(c, dtype="<f8").tobytes())


def read_tt(fh: BinaryIO) -> TTTensor:
    magic = fh.read(8)
    if magic != MAGIC:
        raise ValueError(f"not a TT file (magic {magic!r})")
    N, flag = struct.unpack("<QQ", fh.read(16))
    sizes = struct.unpack(f"<{N}Q", fh.read(8 * N))
    ranks = struct.unpack(f"<{N + 1}Q", fh.read(8 * (N + 1)))
    cores = []
    for n in range(N):
        shape = (ranks[n], sizes[n], ranks[n + 1])
        count = int(np.prod(shape))
        buf = fh.read(8 * count)
        if len(buf) != 8 * count:
            raise ValueError("truncated TT file")
        cores.append(np.frombuffer(buf, dtype="<f8").reshape(shape))
    return TTTensor(tuple(cores), bool(flag))


def save(t: TTTensor, path) -> None:
    with open(path, "wb") as fh:
        write_tt(t, fh)


def load(path) -> TTTensor:
    with open(path, "rb") as fh:
        return read_tt(fh)
