"""Direct solvers for the per-level systems of the implicit sweeps.

1D systems are stored as three diagonals. ``lower[i]`` multiplies
``x[i-1]`` and ``upper[i]`` multiplies ``x[i+1]``; for cyclic systems
``lower[0]`` and ``upper[-1]`` are the two corner entries, for plain
tridiagonal systems they must be zero. 2D systems are CSR matrices.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class SingularSystemError(ArithmeticError):
    """A pivot vanished; the assembled matrix was not an M-matrix."""


class SolverFailure(RuntimeError):
    """A sparse solve missed its residual contract."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (relative residual {residual:.3e})")
        self.residual = residual


SPARSE_RTOL = 1e-10


def _check_diagonals(lower, diag, upper, rhs):
    lower = np.asarray(lower, dtype=float)
    diag = np.asarray(diag, dtype=float)
    upper = np.asarray(upper, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    n = diag.shape[0]
    if lower.shape != (n,) or upper.shape != (n,) or rhs.shape[0] != n:
        raise ValueError("diagonals and right-hand side must share the leading dimension")
    if n < 3:
        raise ValueError(f"need n >= 3, got {n}")
    return lower, diag, upper, rhs


def _banded(lower, diag, upper):
    ab = np.zeros((3, diag.shape[0]))
    ab[0, 1:] = upper[:-1]
    ab[1] = diag
    ab[2, :-1] = lower[1:]
    return ab


def solve_tridiagonal(lower, diag, upper, rhs) -> np.ndarray:
    """Solve a (non-cyclic) tridiagonal system; ``rhs`` may hold several columns."""
    lower, diag, upper, rhs = _check_diagonals(lower, diag, upper, rhs)
    if lower[0] != 0.0 or upper[-1] != 0.0:
        raise ValueError("corner entries must be zero for a non-cyclic system")
    try:
        return scipy.linalg.solve_banded((1, 1), _banded(lower, diag, upper), rhs,
                                         check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError(str(exc)) from exc


def solve_cyclic_tridiagonal(lower, diag, upper, rhs) -> np.ndarray:
    """Solve a periodic tridiagonal system by a Sherman-Morrison corner correction.

    Writes ``A = B + u v^T`` with ``u = (gamma, 0, ..., 0, alpha)`` and
    ``v = (1, 0, ..., 0, beta / gamma)`` where ``alpha`` and ``beta`` are the
    bottom-left and top-right corners and ``gamma = -diag[0]``. For the
    M-matrices assembled here ``alpha * beta >= 0``, so ``B`` stays
    diagonally dominant.
    """
    lower, diag, upper, rhs = _check_diagonals(lower, diag, upper, rhs)
    alpha, beta = upper[-1], lower[0]
    gamma = -diag[0]
    if gamma == 0.0:
        raise SingularSystemError("zero leading diagonal entry")
    b = diag.copy()
    b[0] -= gamma
    b[-1] -= alpha * beta / gamma
    lo = lower.copy()
    up = upper.copy()
    lo[0] = 0.0
    up[-1] = 0.0
    n = diag.shape[0]
    u = np.zeros(n)
    u[0], u[-1] = gamma, alpha
    rhs2 = rhs.reshape(n, -1)
    try:
        sol = scipy.linalg.solve_banded((1, 1), _banded(lo, b, up),
                                        np.column_stack((rhs2, u)), check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError(str(exc)) from exc
    y, z = sol[:, :-1], sol[:, -1]
    vy = y[0] + beta / gamma * y[-1]
    vz = z[0] + beta / gamma * z[-1]
    denom = 1.0 + vz
    if denom == 0.0:
        raise SingularSystemError("Sherman-Morrison denominator vanished")
    x = y - np.outer(z, vy / denom)
    return x.reshape(rhs.shape)


def tridiagonal_matvec(lower, diag, upper, x, cyclic: bool) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    out = diag * x
    out[1:] += lower[1:] * x[:-1]
    out[:-1] += upper[:-1] * x[1:]
    if cyclic:
        out[0] += lower[0] * x[-1]
        out[-1] += upper[-1] * x[0]
    return out


def tridiagonal_dense(lower, diag, upper, cyclic: bool) -> np.ndarray:
    n = len(diag)
    a = np.diag(np.asarray(diag, dtype=float))
    a[np.arange(1, n), np.arange(n - 1)] = lower[1:]
    a[np.arange(n - 1), np.arange(1, n)] = upper[:-1]
    if cyclic:
        a[0, -1] += lower[0]
        a[-1, 0] += upper[-1]
    return a


def solve_sparse_5point(matrix, rhs, rtol: float = SPARSE_RTOL) -> np.ndarray:
    """Direct sparse LU solve, checked against ``||A x - b|| <= rtol ||b||``.

    One step of iterative refinement is attempted before giving up.
    """
    a = sp.csc_matrix(matrix)
    rhs = np.asarray(rhs, dtype=float)
    if a.shape[0] != a.shape[1] or a.shape[0] != rhs.shape[0]:
        raise ValueError(f"matrix {a.shape} and rhs {rhs.shape} do not match")
    try:
        lu = spla.splu(a)
    except RuntimeError as exc:
        raise SingularSystemError(str(exc)) from exc
    x = lu.solve(rhs)
    scale = max(np.abs(rhs).max(initial=0.0), np.finfo(float).tiny)
    res = np.abs(a @ x - rhs).max(initial=0.0) / scale
    if res > rtol:
        x = x + lu.solve(rhs - a @ x)
        res = np.abs(a @ x - rhs).max(initial=0.0) / scale
    if not np.isfinite(res) or res > rtol:
        raise SolverFailure("sparse solve did not reach tolerance", float(res))
    return x
