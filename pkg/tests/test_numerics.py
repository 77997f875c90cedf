import numpy as np
import pytest
import scipy.linalg as sla
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fembounds.errors import DefinitenessError, InputError, NumericalFailure
from fembounds.numerics import (cg_solve, check_symmetric, cholesky, gen_sym_eigen,
                                jacobi_eigen, max_rayleigh, sym_eigen)

entries = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def symmetric(n):
    return arrays(float, (n, n), elements=entries).map(lambda M: M + M.T)


def spd(n):
    return arrays(float, (n, n), elements=entries).map(lambda M: M @ M.T + n * np.eye(n))


@given(st.integers(1, 8).flatmap(symmetric))
@settings(max_examples=60, deadline=None)
def test_jacobi_matches_lapack(A):
    w, V = jacobi_eigen(A)
    scale = max(1.0, np.abs(A).max())
    np.testing.assert_allclose(w, np.linalg.eigvalsh(A), atol=1e-12 * scale * len(A))
    np.testing.assert_allclose(V.T @ V, np.eye(len(A)), atol=1e-12)
    np.testing.assert_allclose(A @ V, V * w, atol=1e-10 * scale * len(A))


@given(st.integers(1, 6).flatmap(lambda n: st.tuples(symmetric(n), spd(n))))
@settings(max_examples=60, deadline=None)
def test_generalized_eigen_matches_scipy(AB):
    A, B = AB
    w, X = gen_sym_eigen(A, B, eigenvectors=True)
    ref = sla.eigh(A, B, eigvals_only=True)
    np.testing.assert_allclose(w, ref, atol=1e-9 * max(1.0, np.abs(ref).max()))
    np.testing.assert_allclose(X.T @ B @ X, np.eye(len(A)), atol=1e-9)


def test_max_rayleigh_attains_the_top_eigenvalue():
    A = np.diag([1.0, 5.0, 2.0])
    lam, x = max_rayleigh(A, np.eye(3))
    assert lam == pytest.approx(5.0)
    assert x @ A @ x / (x @ x) == pytest.approx(lam)


def test_methods_agree_above_the_jacobi_limit():
    rng = np.random.default_rng(0)
    M = rng.standard_normal((80, 80))
    A = M + M.T
    np.testing.assert_allclose(sym_eigen(A, "jacobi")[0], sym_eigen(A, "lapack")[0], atol=1e-11)
    with pytest.raises(InputError):
        sym_eigen(A, "power")


def test_input_checks():
    with pytest.raises(InputError):
        check_symmetric(np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(InputError):
        check_symmetric(np.zeros((2, 3)))
    with pytest.raises(DefinitenessError):
        cholesky(np.diag([1.0, -1.0]))
    with pytest.raises(DefinitenessError):
        cholesky(np.diag([1.0, 0.0]))
    with pytest.raises(InputError):
        gen_sym_eigen(np.eye(2), np.eye(3))


def test_definiteness_is_a_numerical_failure():
    assert issubclass(DefinitenessError, NumericalFailure)


@given(st.integers(2, 30), st.integers(0, 2**32 - 1))
@settings(max_examples=30, deadline=None)
def test_cg_solves_spd_systems(n, seed):
    rng = np.random.default_rng(seed)
    M = rng.standard_normal((n, n))
    A = sp.csr_matrix(M @ M.T + n * np.eye(n))
    b = rng.standard_normal(n)
    x = cg_solve(A, b, tol=1e-12)
    assert np.linalg.norm(A @ x - b) <= 1e-12 * np.linalg.norm(b) * 10


def test_cg_failures():
    with pytest.raises(DefinitenessError):
        cg_solve(np.diag([1.0, -1.0]), np.ones(2))
    n = 50
    A = sp.diags([-np.ones(n - 1), 2 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1]).tocsr()
    with pytest.raises(NumericalFailure):
        cg_solve(A, np.ones(n), tol=1e-14, maxiter=2)
    np.testing.assert_array_equal(cg_solve(np.eye(3), np.zeros(3)), np.zeros(3))
