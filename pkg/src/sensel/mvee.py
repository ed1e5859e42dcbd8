"""Minimum-volume origin-centred ellipsoid through its selection dual.

The dual of

    minimize -log det M  subject to  a_i^T M a_i <= 1

is the relaxed selection problem with budget ``n`` and only the
nonnegativity constraints ``z >= 0``; the ellipsoid is recovered as
``M = (A^T diag(z) A)^{-1}``.
"""

from dataclasses import dataclass

import numpy as np

from . import dense
from .barrier import SensorProblem, information_matrix
from .newton import MaxIterations, NewtonConfig, newton_solve


class DegeneratePoints(ValueError):
    pass


class NoConvergence(RuntimeError):
    pass


@dataclass
class Ellipsoid:
    """The set ``{x : x^T M x <= 1}``."""

    M: np.ndarray

    def __post_init__(self):
        self.M = dense.symmetrize(self.M)
        if not dense.is_positive_definite(self.M):
            raise ValueError("shape matrix is not positive definite")

    def contains(self, x, tol=0.0):
        x = np.atleast_2d(x)
        return np.einsum("ij,jk,ik->i", x, self.M, x) <= 1.0 + tol

    def volume_logdet(self):
        """``-log det M``, i.e. twice the log volume up to a constant."""
        return -dense.cholesky_logdet(self.M)[1]


@dataclass
class EnclosureReport:
    values: np.ndarray
    violations: np.ndarray
    max_ratio: float

    @property
    def ok(self):
        return self.violations.size == 0


def mvee_solve(points, kappa=1e-4, tol=1e-10, max_iter=200, backend="reference-dense"):
    """Solve the ellipsoid dual with a one-sided barrier.

    ``points`` is an ``(m, n)`` array, one point per row, with ``m > n``.
    Returns ``(Ellipsoid, z)``.  Enclosure is approximate: at the barrier
    optimum ``a_i^T M a_i <= 1 + m kappa / n``.
    """
    A = dense.as_matrix(points)
    m, n = A.shape
    if m <= n:
        raise DegeneratePoints(f"need more points than dimensions, got m={m}, n={n}")
    if np.linalg.matrix_rank(A) < n:
        raise DegeneratePoints("points do not span the space")
    p = SensorProblem(A, n, kappa, box=False)
    config = NewtonConfig(tol=tol, max_iter=max_iter, backend=backend)
    try:
        z, trace = newton_solve(p, config)
    except MaxIterations as exc:
        raise NoConvergence(str(exc)) from exc
    if not trace.converged:
        raise NoConvergence(f"Newton solve ended with status {trace.status!r}")
    M = dense.invert(information_matrix(A, z))
    return Ellipsoid(M), z


def enclosure_check(ellipsoid, points, tol=5e-2):
    """Evaluate ``a_i^T M a_i`` for every point and flag those above ``1 + tol``."""
    A = np.atleast_2d(np.asarray(points, dtype=float))
    if A.shape[1] != ellipsoid.M.shape[0]:
        raise ValueError("point dimension does not match the ellipsoid")
    values = np.einsum("ij,jk,ik->i", A, ellipsoid.M, A)
    return EnclosureReport(values, np.flatnonzero(values > 1.0 + tol),
                           float(np.max(values, initial=0.0)))
