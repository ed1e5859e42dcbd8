"""Log-barrier objective of the relaxed sensor selection problem.

The maximized objective is

    f(z) = log det(A^T diag(z) A) + kappa * sum_i (log z_i + log(1 - z_i))

subject to ``sum(z) = k``.  All derivatives here are derivatives of ``f``
itself (checked against finite differences in the test-suite).  With
``box=False`` the ``log(1 - z_i)`` terms are dropped, which is the
one-sided barrier used for the ellipsoid dual.
"""

from dataclasses import InitVar, dataclass

import numpy as np

from . import dense
from .gabp import (
    DEFAULT_MAX_ROUNDS,
    DEFAULT_THRESHOLD,
    GabpError,
    GabpGraph,
    NetworkMetrics,
    enforced_solve,
    run_gabp,
)


class DomainError(ValueError):
    """A point lies outside the open domain of the barrier."""


class ApproximationUnavailable(RuntimeError):
    pass


def default_kappa(m):
    """Barrier weight giving the suboptimality bound ``2 m kappa = 0.2``."""
    return 0.1 / m


@dataclass
class SensorProblem:
    """Measurement matrix ``A`` (m x n), budget ``k`` and barrier weight."""

    A: np.ndarray
    k: float
    kappa: float = None
    box: bool = True
    strict: InitVar[bool] = True

    def __post_init__(self, strict):
        self.A = dense.as_matrix(self.A)
        m, n = self.A.shape
        if self.kappa is None:
            self.kappa = default_kappa(m)
        if self.kappa <= 0:
            raise ValueError("kappa must be positive")
        if strict and not n <= self.k < m:
            raise ValueError(f"need n <= k < m, got n={n}, k={self.k}, m={m}")
        if np.any(np.all(self.A == 0, axis=0)):
            raise ValueError("A has an all-zero column")

    @property
    def m(self):
        return self.A.shape[0]

    @property
    def n(self):
        return self.A.shape[1]


def check_interior(z, box=True):
    z = np.asarray(z, dtype=float)
    if np.any(z <= 0) or (box and np.any(z >= 1)) or not np.all(np.isfinite(z)):
        raise DomainError("z is not strictly inside the barrier domain")
    return z


def barrier_terms(z, kappa, box=True):
    """Return (value, first derivative, minus second derivative) of the
    barrier ``kappa * sum(log z + log(1 - z))``, elementwise."""
    if box:
        value = kappa * float(np.sum(np.log(z) + np.log1p(-z)))
        h = 1.0 / z - 1.0 / (1.0 - z)
        p = 1.0 / z**2 + 1.0 / (1.0 - z) ** 2
    else:
        value = kappa * float(np.sum(np.log(z)))
        h = 1.0 / z
        p = 1.0 / z**2
    return value, kappa * h, kappa * p


def information_matrix(A, z):
    return A.T @ (z[:, None] * A)


def objective(p, z):
    z = check_interior(z, p.box)
    _, ld = dense.cholesky_logdet(information_matrix(p.A, z))
    return ld + barrier_terms(z, p.kappa, p.box)[0]


def relaxed_logdet(A, z):
    """``log det(A^T diag(z) A)`` without the barrier."""
    return dense.cholesky_logdet(information_matrix(A, np.asarray(z, float)))[1]


def leverage(A, X):
    """``diag(A X A^T)``, i.e. ``a_i^T X a_i`` for every row."""
    return np.einsum("ij,jk,ik->i", A, X, A)


def gradient_exact(p, z):
    """Gradient of ``f`` and ``X = (A^T diag(z) A)^{-1}``."""
    z = check_interior(z, p.box)
    X = dense.invert(information_matrix(p.A, z))
    g = leverage(p.A, X) + barrier_terms(z, p.kappa, p.box)[1]
    return g, X


def hessian_exact(p, z, X):
    """Full Hessian ``-(A X A^T)**2 - kappa * diag(p)`` (elementwise square)."""
    z = check_interior(z, p.box)
    if X.shape != (p.n, p.n):
        raise ValueError(f"X has shape {X.shape}, expected {(p.n, p.n)}")
    S = p.A @ X @ p.A.T
    S = 0.5 * (S + S.T)
    H = -dense.hadamard(S, S)
    H[np.diag_indices_from(H)] -= barrier_terms(z, p.kappa, p.box)[2]
    return H


def build_E(p, z):
    """Saddle matrix ``[[0, A^T], [A, -diag(1/z)]]`` of size n + m."""
    z = np.asarray(z, dtype=float)
    if np.any(z == 0):
        raise DomainError("z has a zero entry")
    n, m = p.n, p.m
    E = np.zeros((n + m, n + m))
    E[:n, n:] = p.A.T
    E[n:, :n] = p.A
    E[n:, n:] = np.diag(-1.0 / z)
    return E


def gradient_from_schur(p, z, y):
    """Gradient from the diagonal ``y`` of the lower-right block of
    ``E^{-1}``, using ``(A X A^T)_ii = (y_i + z_i) / z_i**2``."""
    return (y + z) / z**2 + barrier_terms(z, p.kappa, p.box)[1]


def schur_diagonal_exact(p, z):
    """Exact ``diag`` of the lower-right block of ``E^{-1}``.

    Dense reference only; ``E`` is indefinite, so this goes through a
    general solver rather than the SPD routines.
    """
    E = build_E(p, z)
    return np.diag(np.linalg.inv(E))[p.n:]


def gradient_approx(p, z, threshold=DEFAULT_THRESHOLD, max_rounds=DEFAULT_MAX_ROUNDS,
                    outer_tol=1e-8):
    """Approximate gradient from GaBP variances on the saddle matrix ``E``.

    Returns ``(g, metrics, path)`` where ``path`` is ``"gabp"`` when the
    variances came from one GaBP run, or ``"enforced"`` when GaBP failed
    on ``E`` and the m needed diagonal entries were obtained from enforced
    column solves instead.
    """
    z = check_interior(z, p.box)
    n, m = p.n, p.m
    E = build_E(p, z)
    try:
        res = run_gabp(GabpGraph.from_matrix(E, np.zeros(n + m)), threshold, max_rounds)
        y = res.variances[n:]
        if np.all(np.isfinite(y)):
            return gradient_from_schur(p, z, y), res.metrics, "gabp"
        metrics = res.metrics
    except GabpError as exc:
        result = getattr(exc, "result", None)
        metrics = result.metrics if result is not None else NetworkMetrics()
    try:
        cols = np.zeros((n + m, m))
        cols[n + np.arange(m), np.arange(m)] = 1.0
        R, more = enforced_solve(E, cols, threshold, outer_tol, max_rounds=max_rounds)
    except (GabpError, dense.NotPositiveDefinite) as exc:
        raise ApproximationUnavailable(str(exc)) from exc
    y = R[n + np.arange(m), np.arange(m)]
    return gradient_from_schur(p, z, y), metrics.then(more), "enforced"


def hessian_diag_approx(g, z, kappa, box=True):
    """Truncated Hessian: ``-g**2 - kappa * p`` on the diagonal only.

    ``g`` is the full approximate gradient, barrier part included.
    """
    g = np.asarray(g, dtype=float)
    z = check_interior(z, box)
    if g.shape != z.shape:
        raise ValueError("gradient and z lengths differ")
    return -(g**2) - barrier_terms(z, kappa, box)[2]
