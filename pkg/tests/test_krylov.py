import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wentzell.errors import ConvergenceError
from wentzell.krylov import cg


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 30), st.integers(0, 2**31 - 1))
def test_cg_solves_spd_in_weighted_inner_product(n, seed):
    rng = np.random.default_rng(seed)
    w = rng.uniform(0.5, 2.0, n)
    B = rng.standard_normal((n, n))
    S = B @ B.T + n * np.eye(n)
    A = S / w[:, None]  # self-adjoint in <x, y>_w
    b = rng.standard_normal(n)
    res = cg(lambda x: A @ x, b, lambda x, y: float(np.dot(x * y, w)), tol=1e-12, maxiter=10 * n)
    assert np.allclose(A @ res.x, b, atol=1e-9 * np.linalg.norm(b))


def test_zero_rhs():
    res = cg(lambda x: x, np.zeros(3), np.dot)
    assert res.iterations == 0 and not res.x.any()


def test_failure_reports_history():
    A = np.diag(np.logspace(0, 8, 50))
    with pytest.raises(ConvergenceError) as err:
        cg(lambda x: A @ x, np.ones(50), np.dot, tol=1e-14, maxiter=3)
    assert len(err.value.diagnostics["history"]) == 4
    res = cg(lambda x: A @ x, np.ones(50), np.dot, tol=1e-14, maxiter=3, strict=False)
    assert not res.converged and res.iterations == 3


def test_indefinite_detected():
    with pytest.raises(ConvergenceError):
        cg(lambda x: -x, np.ones(3), np.dot)
