"""Dense linear algebra used as ground truth by the rest of the package.

Everything here is centralized and exact (up to floating point); the
message-passing solvers in :mod:`sensel.gabp` are checked against it.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

SYMMETRY_TOL = 1e-12


class NotPositiveDefinite(np.linalg.LinAlgError):
    """Raised when a Cholesky pivot is not strictly positive."""


@dataclass(frozen=True)
class SpdFactor:
    """Lower-triangular Cholesky factor ``L`` with ``M = L @ L.T``."""

    L: np.ndarray

    @property
    def dim(self):
        return self.L.shape[0]

    def reconstruct(self):
        return self.L @ self.L.T

    def solve(self, b):
        return sla.cho_solve((self.L, True), b, check_finite=False)


def as_matrix(M):
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix has non-finite entries")
    return M


def symmetrize(M, tol=SYMMETRY_TOL):
    """Return ``(M + M.T) / 2``, refusing matrices that are not already
    symmetric to within ``tol`` relative to the largest entry."""
    M = as_matrix(M)
    if M.shape[0] != M.shape[1]:
        raise ValueError(f"matrix is not square: {M.shape}")
    scale = max(1.0, float(np.max(np.abs(M), initial=0.0)))
    if np.max(np.abs(M - M.T), initial=0.0) > tol * scale:
        raise ValueError("matrix is not symmetric")
    return 0.5 * (M + M.T)


def cholesky(M):
    M = symmetrize(M)
    try:
        L = np.linalg.cholesky(M)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from None
    if not np.all(np.diag(L) > 0):
        raise NotPositiveDefinite("non-positive pivot")
    return SpdFactor(L)


def cholesky_logdet(M):
    """Factor an SPD matrix and return ``(factor, log det M)``."""
    factor = cholesky(M)
    return factor, 2.0 * float(np.sum(np.log(np.diag(factor.L))))


def is_positive_definite(M):
    try:
        cholesky(M)
    except NotPositiveDefinite:
        return False
    return True


def solve_direct(M, b):
    """Solve ``M x = b`` for SPD ``M``; ``b`` may be a vector or a matrix
    of right-hand sides stored column-wise."""
    factor = cholesky(M)
    b = np.asarray(b, dtype=float)
    if b.shape[0] != factor.dim:
        raise ValueError(f"dimension mismatch: {factor.dim} vs {b.shape[0]}")
    return factor.solve(b)


def invert(M):
    factor = cholesky(M)
    Minv = factor.solve(np.eye(factor.dim))
    return 0.5 * (Minv + Minv.T)


def hadamard(A, B):
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.shape != B.shape:
        raise ValueError(f"shape mismatch: {A.shape} vs {B.shape}")
    return A * B
