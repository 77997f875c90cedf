"""Dense and sparse linear algebra kernels.

Dense symmetric matrices are plain ``numpy`` arrays, sparse ones are
``scipy.sparse.csr_matrix`` instances.  The eigensolver is a cyclic Jacobi
method; for large orders the LAPACK driver behind ``numpy.linalg.eigh`` is
used instead (``method="auto"``), both honour the same contract.
"""
import numpy as np
import scipy.sparse as sp
from scipy.linalg import solve_triangular

from .errors import DefinitenessError, InputError, NumericalFailure

JACOBI_MAX_ORDER = 64
SYMMETRY_TOL = 1e-14


def check_symmetric(A, tol=SYMMETRY_TOL):
    """Return ``A`` as a float array, symmetrised, after checking symmetry.

    Raises :class:`InputError` when ``max|A - A^T| > tol * max|A|``.
    """
    A = np.array(A, dtype=float, copy=True)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] < 1:
        raise InputError(f"expected a non-empty square matrix, got shape {A.shape}")
    scale = np.max(np.abs(A))
    if np.max(np.abs(A - A.T)) > tol * max(scale, np.finfo(float).tiny):
        raise InputError("matrix is not symmetric")
    return 0.5 * (A + A.T)


def jacobi_eigen(A, tol=1e-14, max_sweeps=60):
    """Cyclic Jacobi eigen-decomposition of a symmetric matrix.

    Returns ascending eigenvalues and the matrix of orthonormal eigenvectors
    (columns).
    """
    A = check_symmetric(A)
    n = A.shape[0]
    V = np.eye(n)
    norm = np.linalg.norm(A)
    if n == 1 or norm == 0.0:
        return np.diag(A).copy(), V
    for _ in range(max_sweeps):
        off = np.sqrt(2.0 * np.sum(np.triu(A, 1) ** 2))
        if off <= tol * norm:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                if abs(theta) > 1e150:
                    t = 0.5 / theta
                else:
                    t = np.copysign(1.0, theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                cp, cq = A[:, p].copy(), A[:, q].copy()
                A[:, p] = c * cp - s * cq
                A[:, q] = s * cp + c * cq
                rp, rq = A[p, :].copy(), A[q, :].copy()
                A[p, :] = c * rp - s * rq
                A[q, :] = s * rp + c * rq
                A[p, q] = A[q, p] = 0.0
                vp, vq = V[:, p].copy(), V[:, q].copy()
                V[:, p] = c * vp - s * vq
                V[:, q] = s * vp + c * vq
    else:
        raise NumericalFailure(f"Jacobi iteration did not converge in {max_sweeps} sweeps")
    w = np.diag(A).copy()
    order = np.argsort(w, kind="stable")
    return w[order], V[:, order]


def sym_eigen(A, method="auto"):
    """Ascending eigenvalues and orthonormal eigenvectors of symmetric ``A``.

    ``method`` is ``"jacobi"``, ``"lapack"`` or ``"auto"`` (Jacobi up to
    order ``JACOBI_MAX_ORDER``).
    """
    A = check_symmetric(A)
    if method == "auto":
        method = "jacobi" if A.shape[0] <= JACOBI_MAX_ORDER else "lapack"
    if method == "jacobi":
        return jacobi_eigen(A)
    if method == "lapack":
        try:
            w, V = np.linalg.eigh(A)
        except np.linalg.LinAlgError as exc:
            raise NumericalFailure(str(exc)) from exc
        return w, V
    raise InputError(f"unknown eigen method {method!r}")


def cholesky(B):
    """Lower Cholesky factor of a symmetric positive definite matrix."""
    B = check_symmetric(B)
    try:
        L = np.linalg.cholesky(B)
    except np.linalg.LinAlgError as exc:
        raise DefinitenessError("matrix is not positive definite") from exc
    if np.min(np.diag(L)) <= 1e-14 * np.sqrt(np.max(np.abs(np.diag(B)))):
        raise DefinitenessError("matrix is numerically singular")
    return L


def gen_sym_eigen(A, B, method="auto", eigenvectors=False):
    """Generalized eigenvalues of ``A x = lam B x`` for SPD ``B``.

    Reduced to the standard problem ``L^-1 A L^-T`` with ``B = L L^T``.
    Eigenvectors (if requested) are ``B``-orthonormal.
    """
    A = check_symmetric(A)
    B = check_symmetric(B)
    if A.shape != B.shape:
        raise InputError("A and B must have the same order")
    L = cholesky(B)
    X = solve_triangular(L, A, lower=True)
    C = solve_triangular(L, X.T, lower=True)
    w, Y = sym_eigen(0.5 * (C + C.T), method=method)
    if not eigenvectors:
        return w
    return w, solve_triangular(L.T, Y, lower=False)


def max_rayleigh(A, B, method="auto"):
    """Maximum of ``x.A x / x.B x`` and a maximiser (SPD ``B``)."""
    w, X = gen_sym_eigen(A, B, method=method, eigenvectors=True)
    return float(w[-1]), X[:, -1]


def cg_solve(A, b, tol=1e-10, maxiter=None, x0=None):
    """Diagonally preconditioned conjugate gradients.

    Stops once ``|b - A x| <= tol |b|``; raises :class:`NumericalFailure`
    after ``maxiter`` (default ``10 * order``) iterations.
    """
    A = sp.csr_matrix(A)
    b = np.asarray(b, dtype=float)
    n = A.shape[0]
    if A.shape != (n, n) or b.shape != (n,):
        raise InputError("dimension mismatch in cg_solve")
    if maxiter is None:
        maxiter = 10 * max(n, 1)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n)
    d = A.diagonal()
    if np.any(d <= 0):
        raise DefinitenessError("CG needs a positive diagonal")
    dinv = 1.0 / d
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = b - A @ x
    z = dinv * r
    p = z.copy()
    rz = r @ z
    for _ in range(maxiter):
        if np.linalg.norm(r) <= tol * bnorm:
            return x
        Ap = A @ p
        pAp = p @ Ap
        if pAp <= 0:
            raise DefinitenessError("matrix is not positive definite")
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        z = dinv * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    if np.linalg.norm(b - A @ x) <= tol * bnorm:
        return x
    raise NumericalFailure(f"CG did not reach tol={tol} in {maxiter} iterations")
