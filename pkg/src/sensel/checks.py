"""Invariant checks on a single instance, used by the ``check`` command."""

from dataclasses import dataclass

import numpy as np

from . import dense
from .barrier import (
    SensorProblem,
    gradient_exact,
    gradient_from_schur,
    hessian_exact,
    information_matrix,
    objective,
    schur_diagonal_exact,
)
from .gabp import enforced_solve
from .newton import NewtonConfig, newton_solve
from .selection import select


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    limit: float

    def as_dict(self):
        return {"name": self.name, "passed": bool(self.passed),
                "value": float(self.value), "limit": float(self.limit)}


def _rel(a, b):
    return float(np.max(np.abs(a - b)) / max(1.0, float(np.max(np.abs(b)))))


def interior_point(m, k, seed=0):
    """A point with ``sum(z) = k`` near the uniform start, away from it."""
    rng = np.random.default_rng(seed)
    z = np.full(m, k / m) * (1.0 + 0.2 * (rng.random(m) - 0.5))
    z *= k / z.sum()
    return np.clip(z, 1e-3, 1 - 1e-3)


def gradient_check(p, z, h=1e-6):
    g, _ = gradient_exact(p, z)
    fd = np.empty_like(z)
    for i in range(z.size):
        e = np.zeros_like(z)
        e[i] = h
        fd[i] = (objective(p, z + e) - objective(p, z - e)) / (2 * h)
    return _rel(g, fd)


def hessian_check(p, z, h=1e-6):
    g, X = gradient_exact(p, z)
    H = hessian_exact(p, z, X)
    fd = np.empty_like(H)
    for i in range(z.size):
        e = np.zeros_like(z)
        e[i] = h
        fd[:, i] = (gradient_exact(p, z + e)[0] - gradient_exact(p, z - e)[0]) / (2 * h)
    return _rel(H, fd)


def schur_check(p, z):
    return _rel(gradient_from_schur(p, z, schur_diagonal_exact(p, z)), gradient_exact(p, z)[0])


def gabp_check(p, z):
    Q = information_matrix(p.A, z)
    b = p.A.T @ np.ones(p.m)
    x, _ = enforced_solve(Q, b)
    ref = dense.solve_direct(Q, b)
    return float(np.max(np.abs(x - ref)) / max(1.0, float(np.max(np.abs(ref)))))


def run_checks(A, k, kappa=None, seed=0):
    """Return a list of :class:`CheckResult` for the instance ``(A, k)``."""
    p = SensorProblem(A, k, kappa)
    z = interior_point(p.m, k, seed)
    results = [
        CheckResult("gradient-finite-difference", False, gradient_check(p, z), 1e-5),
        CheckResult("hessian-finite-difference", False, hessian_check(p, z), 1e-4),
        CheckResult("schur-identity", False, schur_check(p, z), 1e-8),
        CheckResult("gabp-vs-direct", False, gabp_check(p, z), 1e-6),
    ]
    zs, trace = newton_solve(p, NewtonConfig())
    s = select(p, zs)
    results.append(CheckResult("newton-converged", False, float(trace.iterations), 50))
    results[-1].passed = trace.converged
    results.append(CheckResult("dual-bound-above-boolean", False,
                               s.lower_bound - s.dual_bound, 0.0))
    results.append(CheckResult("budget", False, abs(zs.sum() - k), 1e-6))
    for r in results:
        if r.name != "newton-converged":
            r.passed = bool(r.value <= r.limit)
    return results
