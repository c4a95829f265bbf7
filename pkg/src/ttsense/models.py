"""Batch-evaluable models: analytic benchmarks and external processes.

A model is anything with ``arity``, ``evaluate_batch(X) -> y`` and a running
``eval_count``. External simulators are driven through a line protocol::

    parent -> child   EVAL <N> <x_1> ... <x_N>\\n
    child  -> parent  <y>\\n
    parent -> child   QUIT\\n
"""

from __future__ import annotations

import os
import selectors
import shlex
import subprocess
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence

import numpy as np

from .errors import DataError, DomainError, EvaluatorTimeout, TransportError

__all__ = [
    "Evaluator",
    "FunctionEvaluator",
    "SubprocessEvaluator",
    "spawn_subprocess_evaluator",
    "sobol_g",
    "sobol_g_batch",
    "sobol_g_analytic_indices",
    "sobol_g_evaluator",
    "decay_chain",
    "decay_chain_batch",
    "decay_chain_evaluator",
    "DECAY_RATE_RANGE",
    "DECAY_SPECIES",
]

# daily decay fractions for half-lives from about 3 years down to 3 months
DECAY_RATE_RANGE = (0.00063281, 0.00756736)
DECAY_SPECIES = 11


class Evaluator:
    """Base class for batch evaluators; subclasses implement ``_evaluate``."""

    def __init__(self, arity: int):
        self.arity = int(arity)
        self.eval_count = 0
        self._lock = threading.Lock()

    def _evaluate(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def evaluate_batch(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.arity:
            raise DomainError(f"expected {self.arity} columns, got {X.shape[1]}")
        y = np.asarray(self._evaluate(X), dtype=np.float64).reshape(-1)
        if y.shape[0] != X.shape[0]:
            raise TransportError(f"model returned {y.shape[0]} values for {X.shape[0]} inputs")
        with self._lock:
            self.eval_count += X.shape[0]
        return y

    def __call__(self, X):
        return self.evaluate_batch(X)

    def close(self):
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class FunctionEvaluator(Evaluator):
    """Wraps a vectorized Python function ``fn(X: (M, N)) -> (M,)``."""

    def __init__(self, fn: Callable, arity: int, name: str = "function"):
        super().__init__(arity)
        self.fn = fn
        self.name = name

    def _evaluate(self, X):
        return self.fn(X)


# --- Sobol G -----------------------------------------------------------------


def sobol_g_batch(X, a=None) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if np.any(X < 0) or np.any(X > 1):
        raise DomainError("Sobol G is defined on the unit cube")
    a = np.zeros(X.shape[1]) if a is None else np.asarray(a, dtype=np.float64)
    if a.shape != (X.shape[1],):
        raise DomainError("one coefficient per variable required")
    if np.any(a < 0):
        raise DomainError("Sobol G coefficients must be nonnegative")
    return np.prod((np.abs(4.0 * X - 2.0) + a) / (1.0 + a), axis=1)


def sobol_g(x: Sequence[float], a: Sequence[float] | None = None) -> float:
    """``prod_n (|4 x_n - 2| + a_n) / (1 + a_n)``."""
    return float(sobol_g_batch([list(x)], a)[0])


def sobol_g_analytic_indices(N: int) -> tuple:
    """First-order and total index shared by every variable when all ``a_n = 0``."""
    if N < 1:
        raise DomainError("N must be >= 1")
    first = 1.0 / (3.0 * ((4.0 / 3.0) ** N - 1.0))
    total = first / (4.0 / 3.0) ** (1 - N)
    return first, total


def sobol_g_evaluator(N: int, a=None) -> FunctionEvaluator:
    coeffs = np.zeros(N) if a is None else np.asarray(a, dtype=np.float64)
    return FunctionEvaluator(lambda X: sobol_g_batch(X, coeffs), N, name="sobol_g")


# --- decay chain -------------------------------------------------------------


def decay_chain_batch(L, T_days: int) -> np.ndarray:
    """Stable-species amount after ``T_days`` daily steps, one row of rates per sample.

    Species 1 starts with unit mass; each day species ``n`` loses the fraction
    ``lambda_n`` of its current amount to species ``n + 1``.
    """
    L = np.atleast_2d(np.asarray(L, dtype=np.float64))
    if np.any(L < 0) or np.any(L > 1):
        raise DomainError("decay fractions must lie in [0, 1]")
    if T_days < 0:
        raise DomainError("time span must be nonnegative")
    M, n_rates = L.shape
    # species along rows keeps every daily update contiguous
    rates = np.ascontiguousarray(L.T)
    m = np.zeros((n_rates + 1, M))
    m[0] = 1.0
    flow = np.empty((n_rates, M))
    for _ in range(int(T_days)):
        np.multiply(rates, m[:-1], out=flow)
        m[:-1] -= flow
        m[1:] += flow
    return m[-1].copy()


def decay_chain(rates: Sequence[float], T_days: int) -> float:
    return float(decay_chain_batch([list(rates)], T_days)[0])


def decay_chain_evaluator(T_days: int = 730, n_rates: int = DECAY_SPECIES - 1) -> FunctionEvaluator:
    return FunctionEvaluator(lambda X: decay_chain_batch(X, T_days), n_rates, name="decay_chain")


# --- subprocess protocol -----------------------------------------------------


class _Child:
    """One child process speaking the EVAL/QUIT line protocol."""

    def __init__(self, argv, timeout):
        self.timeout = timeout
        self.proc = subprocess.Popen(
            argv,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.DEVNULL,
            bufsize=0,
        )
        self._buf = b""
        self._sel = selectors.DefaultSelector()
        self._sel.register(self.proc.stdout, selectors.EVENT_READ)

    def _readline(self, deadline) -> bytes:
        fd = self.proc.stdout.fileno()
        while b"\n" not in self._buf:
            remaining = None if deadline is None else deadline - time.monotonic()
            if remaining is not None and remaining <= 0:
                raise EvaluatorTimeout(f"no reply within {self.timeout} s")
            if not self._sel.select(remaining):
                raise EvaluatorTimeout(f"no reply within {self.timeout} s")
            chunk = os.read(fd, 65536)
            if not chunk:
                code = self.proc.poll()
                raise TransportError(f"evaluator process exited (code {code}) before replying")
            self._buf += chunk
        line, self._buf = self._buf.split(b"\n", 1)
        return line

    def run(self, X: np.ndarray, batch_size: int) -> np.ndarray:
        out = np.empty(X.shape[0])
        N = X.shape[1]
        for start in range(0, X.shape[0], batch_size):
            rows = X[start:start + batch_size]
            payload = "".join(
                f"EVAL {N} " + " ".join(repr(float(v)) for v in row) + "\n" for row in rows
            ).encode()
            try:
                self.proc.stdin.write(payload)
                self.proc.stdin.flush()
            except (BrokenPipeError, OSError) as exc:
                raise TransportError(f"evaluator process is gone: {exc}") from exc
            deadline = None if self.timeout is None else time.monotonic() + self.timeout
            for k in range(rows.shape[0]):
                try:
                    line = self._readline(deadline)
                except EvaluatorTimeout:
                    # replies would arrive out of step from now on
                    self.proc.kill()
                    raise
                text = line.decode(errors="replace").strip()
                try:
                    out[start + k] = float(text)
                except ValueError:
                    raise TransportError(f"malformed reply line: {text!r}") from None
        return out

    def close(self):
        if self.proc.poll() is None:
            try:
                self.proc.stdin.write(b"QUIT\n")
                self.proc.stdin.flush()
                self.proc.stdin.close()
            except OSError:
                pass
            try:
                self.proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self.proc.kill()
                self.proc.wait()
        self._sel.close()


class SubprocessEvaluator(Evaluator):
    """Drives one or more external processes through the line protocol.

    Batches are split into contiguous blocks, one per worker process, so the
    result does not depend on the number of workers.
    """

    def __init__(self, command, arity: int, batch_size: int = 256, timeout: float | None = 60.0,
                 workers: int = 1):
        super().__init__(arity)
        argv = shlex.split(command) if isinstance(command, str) else list(command)
        self.command = argv
        self.batch_size = max(int(batch_size), 1)
        self.timeout = timeout
        self._children = [_Child(argv, timeout) for _ in range(max(int(workers), 1))]
        self._child_locks = [threading.Lock() for _ in self._children]

    def _evaluate(self, X):
        if len(self._children) == 1 or X.shape[0] < 2:
            with self._child_locks[0]:
                return self._children[0].run(X, self.batch_size)
        parts = np.array_split(np.arange(X.shape[0]), len(self._children))

        def work(k):
            with self._child_locks[k]:
                return self._children[k].run(X[parts[k]], self.batch_size)

        with ThreadPoolExecutor(len(self._children)) as pool:
            results = list(pool.map(work, range(len(self._children))))
        return np.concatenate(results)

    def close(self):
        for child in self._children:
            child.close()


def spawn_subprocess_evaluator(command, batch_size: int = 256, arity: int | None = None,
                               timeout: float | None = 60.0, workers: int = 1) -> SubprocessEvaluator:
    if arity is None:
        raise DomainError("arity must be given for a subprocess evaluator")
    return SubprocessEvaluator(command, arity, batch_size=batch_size, timeout=timeout, workers=workers)


def check_finite(X: np.ndarray, y: np.ndarray) -> None:
    """Raise DataError naming the first input whose output is not finite."""
    bad = np.nonzero(~np.isfinite(y))[0]
    if bad.size:
        k = bad[0]
        raise DataError(f"model returned {y[k]} at input {X[k].tolist()}")
