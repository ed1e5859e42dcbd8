"""Equality-constrained Newton method for the barrier problem.

Three interchangeable backends compute the search direction:

``reference-dense``
    centralized gradient, full Hessian and dense solves.
``exact``
    the distributed interior point method: ``X`` from n parallel GaBP
    solves with ``Q = A^T diag(z) A`` under convergence enforcement, full
    Hessian assembled row-wise, and the two systems ``H u = g``,
    ``H v = 1`` solved by enforced GaBP.
``truncated``
    gradient from GaBP variances on the saddle matrix ``E``, diagonal
    Hessian, and an O(m) direction.

The line search evaluates the true objective for every backend.
"""

from dataclasses import asdict, dataclass, field

import numpy as np

from . import dense
from .barrier import (
    barrier_terms,
    check_interior,
    gradient_approx,
    gradient_exact,
    hessian_diag_approx,
    hessian_exact,
    information_matrix,
    leverage,
    objective,
)
from .gabp import NetworkMetrics, enforced_solve

BACKENDS = ("reference-dense", "exact", "truncated")


class InfeasibleBudget(ValueError):
    pass


class SingularHessian(np.linalg.LinAlgError):
    pass


class DegenerateProjection(ArithmeticError):
    pass


class ZeroDiagonal(ArithmeticError):
    pass


class NotAscentDirection(ArithmeticError):
    pass


class LineSearchStall(ArithmeticError):
    pass


class MaxIterations(RuntimeError):
    def __init__(self, message, z=None, trace=None):
        super().__init__(message)
        self.z = z
        self.trace = trace


@dataclass
class NewtonConfig:
    tol: float = 1e-3
    max_iter: int = 50
    alpha: float = 0.01
    beta: float = 0.5
    safety: float = 0.99
    backend: str = "reference-dense"
    gabp_tol: float = 1e-8
    gabp_max_rounds: int = 1000
    outer_tol: float = 1e-8
    track_gradient_error: bool = False

    def __post_init__(self):
        if not 0 < self.alpha < 0.5:
            raise ValueError("line search alpha must lie in (0, 0.5)")
        if not 0 < self.beta < 1:
            raise ValueError("line search beta must lie in (0, 1)")
        if self.tol <= 0:
            raise ValueError("tolerance must be positive")
        if not 0 < self.safety < 1:
            raise ValueError("boundary safety fraction must lie in (0, 1)")
        if self.backend not in BACKENDS:
            raise ValueError(f"unknown backend {self.backend!r}; choose from {BACKENDS}")


@dataclass
class IterationRecord:
    iteration: int
    objective: float
    decrement: float
    step: float = None
    direction: str = "newton"
    gradient_path: str = None
    gradient_error: float = None
    rounds: int = 0
    messages: int = 0
    outer_iterations: int = 0
    flops: int = 0


@dataclass
class SolveTrace:
    backend: str
    records: list = field(default_factory=list)
    converged: bool = False
    status: str = "running"

    @property
    def iterations(self):
        """Number of Newton steps taken (accepted updates)."""
        return sum(1 for r in self.records if r.step is not None)

    @property
    def total_rounds(self):
        return sum(r.rounds for r in self.records)

    @property
    def total_messages(self):
        return sum(r.messages for r in self.records)

    @property
    def max_outer_iterations(self):
        return max((r.outer_iterations for r in self.records), default=0)

    def objectives(self):
        return np.array([r.objective for r in self.records])

    def as_dicts(self):
        return [asdict(r) for r in self.records]


def feasible_init(m, k):
    """Uniform starting point ``z_i = k / m``."""
    if not 1 <= k < m:
        raise InfeasibleBudget(f"need 1 <= k < m, got k={k}, m={m}")
    return np.full(m, k / m)


def _combine(u, v):
    s = float(np.sum(v))
    if abs(s) < 1e-14:
        raise DegenerateProjection("1^T H^{-1} 1 vanishes")
    return -u + (float(np.sum(u)) / s) * v


def _dense_solve(H, rhs):
    try:
        return -dense.solve_direct(-H, rhs)
    except dense.NotPositiveDefinite:
        pass
    try:
        return np.linalg.solve(H, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularHessian(str(exc)) from None


def search_direction_full(H, g, solver="dense", threshold=1e-8, outer_tol=1e-8,
                          max_rounds=1000):
    """Newton step on the hyperplane ``sum(dz) = 0`` for a full Hessian.

    Solves ``H u = g`` and ``H v = 1`` (densely, or as two parallel
    enforced GaBP instances with ``solver="gabp"``) and returns
    ``(dz, metrics)`` with ``dz = -u + (1^T u / 1^T v) v``.
    """
    H = dense.symmetrize(H)
    g = np.asarray(g, dtype=float)
    rhs = np.column_stack([g, np.ones_like(g)])
    if solver == "dense":
        sol, metrics = _dense_solve(H, rhs), NetworkMetrics()
    elif solver == "gabp":
        sol, metrics = enforced_solve(H, rhs, threshold, outer_tol, max_rounds=max_rounds)
    else:
        raise ValueError(f"unknown solver {solver!r}")
    return _combine(sol[:, 0], sol[:, 1]), metrics


def search_direction_diag(d, g, counter=None):
    """Newton step for a diagonal Hessian ``diag(d)`` in O(m).

    ``counter``, if given, is a dict whose ``"flops"`` entry is increased
    by the number of scalar operations performed.
    """
    d = np.asarray(d, dtype=float)
    g = np.asarray(g, dtype=float)
    if np.any(d == 0):
        raise ZeroDiagonal("Hessian diagonal has a zero entry")
    m = d.shape[0]
    u = g / d
    v = 1.0 / d
    dz = _combine(u, v)
    if counter is not None:
        # two divisions, two sums, one scale, one subtraction per entry
        counter["flops"] = counter.get("flops", 0) + 6 * m + 1
    return dz


def max_step(z, dz, box=True):
    """Largest ``t`` keeping ``z + t dz`` inside the barrier domain."""
    t = np.inf
    neg = dz < 0
    if neg.any():
        t = min(t, float(np.min(-z[neg] / dz[neg])))
    if box:
        pos = dz > 0
        if pos.any():
            t = min(t, float(np.min((1.0 - z[pos]) / dz[pos])))
    return t


def _safe_objective(p, z):
    try:
        return objective(p, z)
    except (dense.NotPositiveDefinite, ValueError):
        return -np.inf


def line_search(p, z, dz, g, config, f0=None):
    """Backtracking line search for an ascent direction.

    Starts at ``min(1, safety * t_boundary)`` and shrinks by ``beta`` until
    ``f(z + t dz) >= f(z) + alpha t g^T dz``.
    """
    slope = float(g @ dz)
    if not slope > 0:
        raise NotAscentDirection(f"g^T dz = {slope:.3e} is not positive")
    if not np.any(dz):
        raise NotAscentDirection("zero direction")
    if f0 is None:
        f0 = objective(p, z)
    t = min(1.0, config.safety * max_step(z, dz, p.box))
    while True:
        if t <= 1e-12:
            raise LineSearchStall(f"step size underflow at t={t:.3e}")
        if _safe_objective(p, z + t * dz) >= f0 + config.alpha * t * slope:
            return t
        t *= config.beta


def _direction_reference(p, z, config):
    g, X = gradient_exact(p, z)
    H = hessian_exact(p, z, X)
    dz, metrics = search_direction_full(H, g)
    m = p.m
    flops = m**3 // 3 + 4 * m * m + 6 * m
    return g, dz, metrics, None, flops


def _direction_exact(p, z, config):
    Q = information_matrix(p.A, z)
    X, metrics = enforced_solve(Q, np.eye(p.n), config.gabp_tol, config.outer_tol,
                                max_rounds=config.gabp_max_rounds)
    X = 0.5 * (X + X.T)
    g = leverage(p.A, X) + barrier_terms(z, p.kappa, p.box)[1]
    H = hessian_exact(p, z, X)
    dz, more = search_direction_full(H, g, "gabp", config.gabp_tol, config.outer_tol,
                                     config.gabp_max_rounds)
    return g, dz, metrics.then(more), "gabp", 0


def _direction_truncated(p, z, config):
    g, metrics, path = gradient_approx(p, z, config.gabp_tol, config.gabp_max_rounds,
                                       config.outer_tol)
    d = hessian_diag_approx(g, z, p.kappa, p.box)
    counter = {}
    dz = search_direction_diag(d, g, counter)
    return g, dz, metrics, path, counter["flops"]


_DIRECTIONS = {
    "reference-dense": _direction_reference,
    "exact": _direction_exact,
    "truncated": _direction_truncated,
}


def newton_solve(p, config=None, z0=None):
    """Maximize the barrier objective of ``p`` from a feasible start.

    Returns ``(z, trace)``.  Stops when ``lambda^2 / 2 <= tol`` with
    ``lambda^2 = g^T dz`` from the backend's own gradient.  When the
    truncated direction is not an ascent direction, or its line search
    stalls, the projected gradient ``g - mean(g)`` is used for that step.
    The truncated solve ends with status ``"stalled"`` (``trace.converged``
    False) when that stalls too, or when an accepted step's predicted gain
    ``t lambda^2 / 2`` is at most ``tol``.  Raises :class:`MaxIterations`
    (carrying ``z`` and ``trace``) if ``max_iter`` steps do not suffice.
    """
    config = config or NewtonConfig()
    z = feasible_init(p.m, p.k) if z0 is None else check_interior(np.array(z0, float), p.box)
    trace = SolveTrace(config.backend)
    direction = _DIRECTIONS[config.backend]
    f = objective(p, z)
    for it in range(config.max_iter + 1):
        g, dz, metrics, path, flops = direction(p, z, config)
        rec = IterationRecord(it, f, float(g @ dz), gradient_path=path,
                              rounds=metrics.rounds, messages=metrics.messages,
                              outer_iterations=metrics.outer_iterations, flops=flops)
        if config.track_gradient_error and config.backend != "reference-dense":
            g_true = gradient_exact(p, z)[0]
            rec.gradient_error = float(np.max(np.abs(g - g_true)) / np.max(np.abs(g_true)))
        trace.records.append(rec)

        # a decrement at rounding level means z is already optimal
        if abs(rec.decrement) / 2 <= config.tol:
            trace.converged = True
            trace.status = "converged"
            return z, trace
        fallback = rec.decrement <= 0
        if fallback and config.backend != "truncated":
            trace.status = "not-ascent"
            raise NotAscentDirection(f"iteration {it}: g^T dz = {rec.decrement:.3e}")
        if fallback:
            dz = g - np.mean(g)
            rec.direction = "projected-gradient"
            rec.decrement = float(g @ dz)
        if rec.decrement / 2 <= config.tol:
            trace.converged = True
            trace.status = "converged"
            return z, trace
        if it == config.max_iter:
            break
        try:
            t = line_search(p, z, dz, g, config, f)
        except LineSearchStall:
            if config.backend != "truncated":
                trace.status = "stalled"
                raise
            try:
                if fallback:
                    raise
                dz = g - np.mean(g)
                rec.direction = "projected-gradient"
                t = line_search(p, z, dz, g, config, f)
            except (LineSearchStall, NotAscentDirection):
                # the approximate gradient no longer yields ascent on the
                # true objective: the truncated method has reached its floor
                trace.status = "stalled"
                return z, trace
        rec.step = t
        z = z + t * dz
        f = objective(p, z)
        if config.backend == "truncated" and t * rec.decrement / 2 <= config.tol:
            # backtracking cut the predicted gain below the tolerance: the
            # approximate model has stopped pointing uphill
            trace.status = "stalled"
            return z, trace
    trace.status = "max-iterations"
    raise MaxIterations(f"no convergence in {config.max_iter} Newton iterations", z, trace)
