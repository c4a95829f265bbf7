"""Automaton tensors over binary tuples ``alpha in {0, 1}^N``.

Every mask is a TT whose cores are the transition matrices of a small
finite automaton: slice 0 is applied when variable ``n`` is absent from the
tuple and slice 1 when it is present. The state vector is a dummy (one-hot)
encoding; the all-zeros vector is the rejecting state.
"""

from __future__ import annotations

import numpy as np
from scipy import optimize, special

from .errors import ApproximationError, DomainError
from .tt import TTTensor

__all__ = [
    "hamming_weight_tt",
    "hamming_mask_tt",
    "hamming_state_tt",
    "length_mask_tt",
    "length_state_tt",
    "nonempty_mask_tt",
    "reciprocal_weight_tt",
    "ReciprocalWeight",
    "tuple_length",
]


def _check_N(N):
    if N < 1:
        raise DomainError("N must be >= 1")


def _check_n(N, n):
    _check_N(N)
    if not 0 <= n <= N:
        raise DomainError(f"threshold n={n} outside [0, {N}]")


def tuple_length(bits) -> int:
    """Span between first and last present variable, 0 for the empty tuple."""
    on = np.flatnonzero(np.asarray(bits))
    return 0 if on.size == 0 else int(on[-1] - on[0] + 1)


def hamming_weight_tt(N: int) -> TTTensor:
    """Entry at ``alpha`` is ``|alpha|``; internal ranks 2."""
    _check_N(N)
    if N == 1:
        return TTTensor((np.array([0.0, 1.0]).reshape(1, 2, 1),))
    first = np.zeros((1, 2, 2))
    first[0, 0] = [0, 1]
    first[0, 1] = [1, 1]
    mid = np.zeros((2, 2, 2))
    mid[:, 0, :] = [[1, 0], [0, 1]]
    mid[:, 1, :] = [[1, 0], [1, 1]]
    last = np.zeros((2, 2, 1))
    last[:, 0, 0] = [1, 0]
    last[:, 1, 0] = [1, 1]
    return TTTensor((first,) + (mid,) * (N - 2) + (last,))


def _counter_cores(N: int, n: int):
    """First and middle cores of the order-counting automaton with states s_0..s_n."""
    S = n + 1
    first = np.zeros((1, 2, S))
    first[0, 0, 0] = 1.0
    if n >= 1:
        first[0, 1, 1] = 1.0
    mid = np.zeros((S, 2, S))
    mid[:, 0, :] = np.eye(S)
    mid[:, 1, :] = np.eye(S, k=1)
    return first, mid


def _accept_core(S: int) -> np.ndarray:
    """Last core: accept any state on '0', any state but s_n on '1'."""
    last = np.ones((S, 2, 1))
    last[S - 1, 1, 0] = 0.0
    return last


def hamming_mask_tt(N: int, n: int) -> TTTensor:
    """1 where ``|alpha| <= n``, else 0; internal ranks ``n + 1``."""
    _check_n(N, n)
    S = n + 1
    if N == 1:
        return TTTensor((np.array([1.0, 1.0 if n >= 1 else 0.0]).reshape(1, 2, 1),))
    first, mid = _counter_cores(N, n)
    return TTTensor((first,) + (mid,) * (N - 2) + (_accept_core(S),))


def hamming_state_tt(N: int) -> TTTensor:
    """State tensor: channel ``k`` of the entry at ``alpha`` is ``[|alpha| == k]``, k = 0..N."""
    _check_N(N)
    first, mid = _counter_cores(N, N)
    return TTTensor((first,) + (mid,) * (N - 1), trailing_rank_open=True)


def _length_counter_cores(N: int, n: int):
    S = n + 1
    first = np.zeros((1, 2, S))
    first[0, 0, 0] = 1.0
    if n >= 1:
        first[0, 1, 1] = 1.0
    mid = np.zeros((S, 2, S))
    # '0': s_0 stays, s_j -> s_{j+1} while counting, s_n saturates
    mid[0, 0, 0] = 1.0
    for j in range(1, n):
        mid[j, 0, j + 1] = 1.0
    if n >= 1:
        mid[n, 0, n] = 1.0
    # '1': always advance; s_n -> reject
    mid[:, 1, :] = np.eye(S, k=1)
    return first, mid


def length_mask_tt(N: int, n: int) -> TTTensor:
    """1 where ``len(alpha) <= n`` (``len`` of the empty tuple is 0); internal ranks ``n + 1``."""
    _check_n(N, n)
    S = n + 1
    if N == 1:
        return TTTensor((np.array([1.0, 1.0 if n >= 1 else 0.0]).reshape(1, 2, 1),))
    first, mid = _length_counter_cores(N, n)
    return TTTensor((first,) + (mid,) * (N - 2) + (_accept_core(S),))


def _length_state_automaton(N: int) -> list:
    """Cores of the (2p + 1)-state automaton described in :func:`length_state_tt`."""
    cores = []
    for p in range(1, N + 1):
        q = p - 1  # states before reading symbol p
        final = p == N
        core = np.zeros((2 * q + 1, 2, N + 1 if final else 2 * p + 1))

        def closed(j):
            return j if final else p + j

        core[0, 0, 0] = 1.0
        core[0, 1, closed(1)] = 1.0
        if not final:
            core[0, 1, 1] = 1.0
        for j in range(1, q + 1):
            core[q + j, 0, closed(j)] = 1.0
            core[j, 1, closed(j + 1)] = 1.0
            if not final:
                core[j, 0, j + 1] = 1.0
                core[j, 1, j + 1] = 1.0
        cores.append(core)
    return cores


def _reduced_basis(p: int):
    """Integer basis change at bond ``p`` dropping the ``C_1`` coordinate.

    Every reachable state vector has as much weight on open states as on
    closed ones, so it lies in a ``2p``-dimensional subspace. Rows of ``M``
    span it (``E``, ``O_a + C_1``, ``C_b - C_1``); ``N`` reads coordinates in
    that basis, and ``M @ N`` is the identity.
    """
    old, new = 2 * p + 1, 2 * p
    M = np.zeros((new, old))
    N = np.zeros((old, new))
    M[0, 0] = N[0, 0] = 1.0
    for a in range(1, p + 1):
        M[a, a] = 1.0
        M[a, p + 1] = 1.0
        N[a, a] = 1.0
    for b in range(2, p + 1):
        M[p + b - 1, p + b] = 1.0
        M[p + b - 1, p + 1] = -1.0
        N[p + b, p + b - 1] = 1.0
    return M, N


def length_state_tt(N: int) -> TTTensor:
    """State tensor: channel ``k`` of the entry at ``alpha`` is ``[len(alpha) == k]``.

    After reading ``p`` symbols a nondeterministic automaton is in one of
    ``2p + 1`` states: ``E`` (nothing seen), ``O_j`` (span ``j`` so far, more
    variables to come) or ``C_j`` (closed with span ``j``). Every '1' either
    keeps the tuple open or closes it; a closed tuple rejects further '1's,
    so each nonempty tuple has exactly one accepting path. The last core maps
    ``E`` to channel 0 and ``C_j`` to channel ``j`` and drops open states.

    The reachable state vectors span only ``2p`` dimensions, so an integer
    change of basis brings bond ``p`` to rank ``2p``, which equals the rank
    of the unfolding and cannot be lowered further.
    """
    _check_N(N)
    cores = _length_state_automaton(N)
    out = []
    prev_M = np.ones((1, 1))
    for p, core in enumerate(cores, start=1):
        if p < N:
            M, Nmat = _reduced_basis(p)
            out.append(np.einsum("xa,aib,by->xiy", prev_M, core, Nmat))
            prev_M = M
        else:
            out.append(np.einsum("xa,aib->xib", prev_M, core))
    return TTTensor(tuple(out), trailing_rank_open=True)


def nonempty_mask_tt(N: int) -> TTTensor:
    """1 everywhere except at the empty tuple."""
    _check_N(N)
    if N == 1:
        return TTTensor((np.array([0.0, 1.0]).reshape(1, 2, 1),))
    first = np.zeros((1, 2, 2))
    first[0, 0, 0] = 1.0
    first[0, 1, 1] = 1.0
    mid = np.zeros((2, 2, 2))
    mid[:, 0, :] = np.eye(2)
    mid[:, 1, :] = [[0, 1], [0, 1]]
    last = np.zeros((2, 2, 1))
    last[:, 0, 0] = [0, 1]
    last[:, 1, 0] = [1, 1]
    return TTTensor((first,) + (mid,) * (N - 2) + (last,))


class ReciprocalWeight:
    """Result of :func:`reciprocal_weight_tt` with its verified accuracy."""

    def __init__(self, tensor: TTTensor, rank: int, max_rel_error: float, fro_rel_error: float,
                 metric: str):
        self.tensor = tensor
        self.rank = rank
        self.max_rel_error = max_rel_error
        self.fro_rel_error = fro_rel_error
        self.metric = metric

    def __repr__(self):
        return (f"ReciprocalWeight(rank={self.rank}, max_rel_error={self.max_rel_error:.2e}, "
                f"fro_rel_error={self.fro_rel_error:.2e})")


def _log_multiplicity(N):
    """log C(N, w) for w = 0..N: how many tuples share each weight."""
    w = np.arange(N + 1)
    return special.gammaln(N + 1) - special.gammaln(w + 1) - special.gammaln(N - w + 1)


def _profile_errors(values: np.ndarray, N: int):
    """Max relative entry error and Frobenius relative error of a weight profile."""
    g = 1.0 / np.maximum(np.arange(N + 1), 1)
    rel = np.abs(values - g) / g
    lm = _log_multiplicity(N)
    m = np.exp(lm - lm.max())
    fro = np.sqrt(np.sum(m * (values - g) ** 2) / np.sum(m * g**2))
    return float(rel.max()), float(fro)


def _hankel_exponentials(h: np.ndarray, k: int):
    """Initial nodes/coefficients so that ``h[m] ~ sum_j c_j z_j^m`` (Kung's method)."""
    M = h.size - 1
    half = (M + 1) // 2
    H = h[np.arange(half + 1)[:, None] + np.arange(M - half + 1)[None, :]]
    U, s, Vt = np.linalg.svd(H, full_matrices=False)
    sq = np.sqrt(s[:k])
    obs = U[:, :k] * sq
    ctr = sq[:, None] * Vt[:k]
    A = np.linalg.lstsq(obs[:-1], obs[1:], rcond=None)[0]
    lam, V = np.linalg.eig(A)
    coef = (obs[0] @ V) * np.linalg.solve(V, ctr[:, 0])
    return np.real(lam), np.real(coef)


def _fit_exponentials(N: int, k: int, metric: str):
    """Fit ``1/w ~ sum_j c_j z_j^w`` on ``w = 1..N`` with k terms."""
    w = np.arange(1, N + 1, dtype=np.float64)
    z0, c0 = _hankel_exponentials(1.0 / w, k)
    # Kung's model is h[m] = 1/(m+1); shift to powers of w
    with np.errstate(divide="ignore", invalid="ignore"):
        c0 = np.where(z0 != 0, c0 / z0, c0)
    if metric == "frobenius":
        lm = _log_multiplicity(N)[1:]
        scale = np.sqrt(np.exp(lm - lm.max()))
    else:
        scale = w

    def model(p):
        return (p[k:][None, :] * p[:k][None, :] ** w[:, None]).sum(axis=1)

    def residual(p, weights):
        return weights * scale * (model(p) - 1.0 / w)

    p = np.concatenate([z0, c0])
    weights = np.ones(N)
    opts = dict(method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=20000)
    p = optimize.least_squares(residual, p, args=(weights,), **opts).x
    if metric == "max":
        # Lawson reweighting pushes the least-squares fit towards minimax
        best = (np.max(np.abs(residual(p, 1.0))), p)
        for _ in range(15):
            r = np.abs(residual(p, 1.0))
            weights = np.sqrt(weights**2 * (r + 1e-300) / np.sum(weights**2 * (r + 1e-300)))
            p = optimize.least_squares(residual, p, args=(weights,), **opts).x
            err = np.max(np.abs(residual(p, 1.0)))
            if err < best[0]:
                best = (err, p)
        p = best[1]
    return p[:k], p[k:]


def _diagonal_automaton(z: np.ndarray, c: np.ndarray, N: int) -> TTTensor:
    """TT with entries ``sum_j c_j z_j^|alpha|`` (``0^0 = 1``)."""
    r = z.size
    if N == 1:
        core = np.array([c.sum(), c @ z]).reshape(1, 2, 1)
        return TTTensor((core,))
    mid = np.zeros((r, 2, r))
    mid[:, 0, :] = np.eye(r)
    mid[:, 1, :] = np.diag(z)
    first = np.stack([c, c * z])[None]
    last = np.stack([np.ones(r), z], axis=1)[:, :, None]
    return TTTensor((first,) + (mid,) * (N - 2) + (last,))


def _exact_reciprocal(N: int) -> TTTensor:
    """Rank N+1 exact construction: the order counter read out with weights 1/max(k, 1)."""
    state = hamming_state_tt(N)
    out = 1.0 / np.maximum(np.arange(N + 1), 1)
    cores = list(state.cores)
    cores[-1] = np.einsum("aik,k->ai", cores[-1], out)[:, :, None]
    return TTTensor(tuple(cores))


def reciprocal_weight_tt(N: int, rel_tol: float = 1e-8, max_rank: int = 30,
                         metric: str = "max") -> ReciprocalWeight:
    """Low-rank TT of ``1 / max(|alpha|, 1)``.

    The entry depends on ``alpha`` only through ``w = |alpha|``. For rank
    ``r = k + 1`` the tensor is ``sum_j c_j z_j^w`` with k exponentials
    fitted to ``1/w`` on ``w = 1..N`` and one extra node ``z = 0`` that pins
    the empty-tuple entry to exactly 1. Ranks are tried in increasing order
    until the error is within ``rel_tol``; once ``r`` reaches ``N + 1`` the
    exact counter construction is used instead.

    ``metric="max"`` bounds the largest relative entry error; ``"frobenius"``
    bounds ``||approx - exact||_F / ||exact||_F`` over all ``2^N`` entries.
    Both are evaluated exactly, since only ``N + 1`` distinct weights exist.
    """
    _check_N(N)
    if not rel_tol > 0:
        raise DomainError("rel_tol must be positive")
    if metric not in ("max", "frobenius"):
        raise DomainError(f"unknown metric {metric!r}")
    best = None
    for r in range(1, max_rank + 1):
        if r >= N + 1 or 2 * (r - 1) > N:
            t = _exact_reciprocal(N)
            return ReciprocalWeight(t, N + 1, 0.0, 0.0, metric)
        k = r - 1
        if k == 0:
            z, c = np.zeros(0), np.zeros(0)
        else:
            z, c = _fit_exponentials(N, k, metric)
        z = np.append(z, 0.0)
        c = np.append(c, 1.0 - c.sum())
        w = np.arange(N + 1)
        values = (c[None, :] * z[None, :] ** w[:, None]).sum(axis=1)
        max_err, fro_err = _profile_errors(values, N)
        err = max_err if metric == "max" else fro_err
        if best is None or err < best[0]:
            best = (err, z, c, max_err, fro_err)
        if err <= rel_tol:
            return ReciprocalWeight(_diagonal_automaton(z, c, N), r, max_err, fro_err, metric)
    raise ApproximationError(
        f"1/W for N={N}: best {metric} relative error {best[0]:.2e} with rank <= {max_rank}"
    )
