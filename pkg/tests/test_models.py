import sys
import textwrap

import numpy as np
import pytest

from ttsense.errors import DataError, DomainError, EvaluatorTimeout, TransportError
from ttsense.models import (
    DECAY_RATE_RANGE,
    FunctionEvaluator,
    SubprocessEvaluator,
    check_finite,
    decay_chain,
    decay_chain_batch,
    sobol_g,
    sobol_g_analytic_indices,
    sobol_g_batch,
    spawn_subprocess_evaluator,
)


def test_sobol_g_values():
    assert sobol_g([0.5] * 4) == 0.0
    assert sobol_g([0.0, 1.0]) == pytest.approx(4.0)
    assert sobol_g([0.25], [1.0]) == pytest.approx((1 + 1) / 2)
    with pytest.raises(DomainError):
        sobol_g([1.5])
    with pytest.raises(DomainError):
        sobol_g([0.5], [-1])


def test_sobol_g_analytic():
    # one variable: all variance is first order
    assert sobol_g_analytic_indices(1) == pytest.approx((1.0, 1.0))
    s, t = sobol_g_analytic_indices(20)
    assert round(s, 3) == 0.001 and round(t, 3) == 0.251


def test_decay_chain_conserves_mass():
    rng = np.random.default_rng(0)
    L = rng.uniform(*DECAY_RATE_RANGE, size=(5, 10))
    m = np.zeros((5, 11))
    m[:, 0] = 1.0
    for _ in range(730):
        flow = L * m[:, :-1]
        m[:, :-1] -= flow
        m[:, 1:] += flow
    np.testing.assert_allclose(m.sum(axis=1), 1.0, rtol=1e-12)
    np.testing.assert_allclose(decay_chain_batch(L, 730), m[:, -1], rtol=1e-12)


def test_decay_chain_limits():
    assert decay_chain([0.5, 0.5], 0) == 0.0
    assert decay_chain([1.0, 1.0], 2) == 1.0
    # one rate: after T steps the stable amount is 1 - (1 - lambda)^T
    assert decay_chain([0.1], 5) == pytest.approx(1 - 0.9**5)
    with pytest.raises(DomainError):
        decay_chain([1.5], 3)


def test_decay_chain_symmetric_in_rates():
    rng = np.random.default_rng(1)
    L = rng.uniform(*DECAY_RATE_RANGE, size=(4, 10))
    perm = rng.permutation(10)
    np.testing.assert_allclose(decay_chain_batch(L, 730), decay_chain_batch(L[:, perm], 730), rtol=1e-10)


def test_function_evaluator_counts_and_checks():
    f = FunctionEvaluator(lambda X: X.sum(axis=1), 3)
    assert f.evaluate_batch(np.ones((4, 3))).tolist() == [3.0] * 4
    assert f.eval_count == 4
    with pytest.raises(DomainError):
        f.evaluate_batch(np.ones((2, 2)))
    bad = FunctionEvaluator(lambda X: np.ones(1), 2)
    with pytest.raises(TransportError):
        bad.evaluate_batch(np.ones((3, 2)))


def test_check_finite_names_input():
    with pytest.raises(DataError, match=r"\[2.0, 3.0\]"):
        check_finite(np.array([[0.0, 1.0], [2.0, 3.0]]), np.array([1.0, np.nan]))


CHILD = textwrap.dedent(
    """
    import sys
    for line in sys.stdin:
        parts = line.split()
        if not parts or parts[0] == "QUIT":
            break
        n = int(parts[1])
        xs = [float(v) for v in parts[2:2 + n]]
        print(repr(sum(x * x for x in xs)), flush=True)
    """
)


@pytest.fixture
def child_script(tmp_path):
    path = tmp_path / "child.py"
    path.write_text(CHILD)
    return path


def test_subprocess_roundtrip(child_script):
    X = np.random.default_rng(2).uniform(size=(37, 3))
    with spawn_subprocess_evaluator([sys.executable, str(child_script)], batch_size=8, arity=3) as f:
        y = f.evaluate_batch(X)
        assert f.eval_count == 37
    np.testing.assert_allclose(y, (X**2).sum(axis=1), rtol=1e-15)


def test_subprocess_workers_do_not_change_results(child_script):
    X = np.random.default_rng(3).uniform(size=(50, 2))
    cmd = f"{sys.executable} {child_script}"
    with SubprocessEvaluator(cmd, 2, batch_size=7) as one, SubprocessEvaluator(cmd, 2, batch_size=7, workers=3) as many:
        assert np.array_equal(one.evaluate_batch(X), many.evaluate_batch(X))


def test_subprocess_arity_required(child_script):
    with pytest.raises(DomainError):
        spawn_subprocess_evaluator([sys.executable, str(child_script)])


def test_subprocess_malformed_reply(tmp_path):
    path = tmp_path / "bad.py"
    path.write_text("import sys\nfor line in sys.stdin:\n    print('oops', flush=True)\n")
    with SubprocessEvaluator([sys.executable, str(path)], 1) as f:
        with pytest.raises(TransportError, match="malformed"):
            f.evaluate_batch([[1.0]])


def test_subprocess_early_exit(tmp_path):
    path = tmp_path / "dies.py"
    path.write_text("import sys\nsys.stdin.readline()\nsys.exit(3)\n")
    with SubprocessEvaluator([sys.executable, str(path)], 1) as f:
        with pytest.raises(TransportError):
            f.evaluate_batch([[1.0], [2.0]])


def test_subprocess_timeout(tmp_path):
    path = tmp_path / "slow.py"
    path.write_text("import sys, time\nfor line in sys.stdin:\n    time.sleep(5)\n")
    with SubprocessEvaluator([sys.executable, str(path)], 1, timeout=0.3) as f:
        with pytest.raises(EvaluatorTimeout):
            f.evaluate_batch([[1.0]])


def test_subprocess_non_finite(tmp_path):
    path = tmp_path / "nan.py"
    path.write_text("import sys\nfor line in sys.stdin:\n    print('nan', flush=True)\n")
    with SubprocessEvaluator([sys.executable, str(path)], 1) as f:
        y = f.evaluate_batch([[1.0]])
    with pytest.raises(DataError):
        check_finite(np.array([[1.0]]), y)
