"""Boolean selections from a relaxed solution: rounding, swap search, bounds."""

from dataclasses import dataclass

import numpy as np

from . import dense
from .barrier import leverage, relaxed_logdet

IMPROVEMENT_TOL = 1e-12


@dataclass
class SelectionResult:
    """A Boolean k-subset with the bounds that bracket the Boolean optimum.

    ``upper_bound`` is ``relaxed_value + 2 m kappa``; ``lower_bound`` is the
    best Boolean value found; ``gap`` their difference.  ``dual_bound`` is
    the certified bound of :func:`dual_upper_bound`, valid for any ``z``.
    """

    chosen: np.ndarray
    logdet_value: float
    simple_logdet: float
    relaxed_value: float
    upper_bound: float
    lower_bound: float
    gap: float
    simple_gap: float
    dual_bound: float
    swaps: int = 0

    @property
    def k(self):
        return len(self.chosen)


def round_topk(z, k):
    """Indices of the ``k`` largest entries of ``z``, ties to lower index."""
    z = np.asarray(z, dtype=float)
    if not 0 <= k <= z.shape[0]:
        raise ValueError(f"cannot choose {k} of {z.shape[0]}")
    order = np.argsort(-z, kind="stable")
    return np.sort(order[:k])


def logdet_selection(A, chosen):
    """``log det`` of the Gram matrix of the chosen rows; ``-inf`` when the
    rows do not span the parameter space."""
    rows = np.asarray(A, dtype=float)[np.asarray(chosen, dtype=int)]
    try:
        return dense.cholesky_logdet(rows.T @ rows)[1]
    except dense.NotPositiveDefinite:
        return -np.inf


def _swap_values(A, chosen, others):
    """log det after every single swap (chosen[a] out, others[b] in).

    With ``G`` the current Gram matrix, ``c = a^T G^{-1} a`` and
    ``b = a_out^T G^{-1} a_in``, the determinant ratio of a swap is
    ``(1 + c_in)(1 - c_out) + b**2``.  A singular ``G`` falls back to
    forming every swapped matrix.
    """
    G = A[chosen].T @ A[chosen]
    try:
        factor, ld = dense.cholesky_logdet(G)
    except dense.NotPositiveDefinite:
        return _swap_values_direct(A, chosen, others, G)
    Ginv = factor.solve(np.eye(G.shape[0]))
    P, Q = A[chosen], A[others]
    b = P @ Ginv @ Q.T
    ratio = np.outer(1.0 - leverage(P, Ginv), 1.0) * (1.0 + leverage(Q, Ginv))[None, :] + b**2
    with np.errstate(divide="ignore"):
        return np.where(ratio > 0, ld + np.log(np.maximum(ratio, 1e-300)), -np.inf)


def _swap_values_direct(A, chosen, others, G):
    out = A[chosen][:, None, :, None] * A[chosen][:, None, None, :]
    inn = A[others][None, :, :, None] * A[others][None, :, None, :]
    sign, ld = np.linalg.slogdet(G[None, None] - out + inn)
    return np.where(sign > 0, ld, -np.inf)


def local_search(A, chosen, max_passes=100):
    """Steepest-ascent swap search.

    Each pass scores all ``k (m - k)`` exchanges of one chosen row for one
    unchosen row and applies the best one if it strictly improves the
    log det.  Returns ``(chosen, swaps)``.
    """
    A = np.asarray(A, dtype=float)
    m = A.shape[0]
    chosen = np.sort(np.asarray(chosen, dtype=int))
    current = logdet_selection(A, chosen)
    swaps = 0
    for _ in range(max_passes):
        others = np.setdiff1d(np.arange(m), chosen)
        if others.size == 0 or chosen.size == 0:
            break
        vals = _swap_values(A, chosen, others)
        a, b = np.unravel_index(np.argmax(vals), vals.shape)
        best = vals[a, b]
        threshold = -np.inf
        if np.isfinite(current):
            threshold = current + IMPROVEMENT_TOL * max(1.0, abs(current))
        if not best > threshold:
            break
        candidate = np.sort(np.append(np.delete(chosen, a), others[b]))
        value = logdet_selection(A, candidate)
        if not value > current:
            break
        chosen, current = candidate, value
        swaps += 1
    return chosen, swaps


def compute_bounds(p, z, best_boolean_logdet):
    """``(upper, lower, gap)`` with ``upper = log det(A^T diag(z) A) + 2 m kappa``.

    The upper bound holds when ``z`` is the barrier optimum for ``p.kappa``.
    """
    upper = relaxed_logdet(p.A, z) + 2 * p.m * p.kappa
    lower = float(best_boolean_logdet)
    return upper, lower, upper - lower


def dual_upper_bound(A, z, k):
    """Upper bound on the relaxed (hence Boolean) optimum from any ``z``.

    For ``W = (A^T diag(z) A)^{-1}`` and every feasible ``w``,
    ``log det(A^T diag(w) A) <= -log det W - n + sum_i w_i a_i^T W a_i``;
    the last sum is at most the sum of the ``k`` largest ``a_i^T W a_i``.
    """
    A = np.asarray(A, dtype=float)
    n = A.shape[1]
    M = A.T @ (np.asarray(z, float)[:, None] * A)
    factor, ld = dense.cholesky_logdet(M)
    c = leverage(A, factor.solve(np.eye(n)))
    return ld - n + float(np.sum(np.sort(c)[::-1][: int(k)]))


def select(p, z, max_passes=100):
    """Round ``z``, improve by local search and bracket the optimum."""
    k = int(round(p.k))
    simple = round_topk(z, k)
    simple_value = logdet_selection(p.A, simple)
    chosen, swaps = local_search(p.A, simple, max_passes)
    best = logdet_selection(p.A, chosen)
    upper, lower, gap = compute_bounds(p, z, best)
    return SelectionResult(
        chosen=chosen,
        logdet_value=best,
        simple_logdet=simple_value,
        relaxed_value=relaxed_logdet(p.A, z),
        upper_bound=upper,
        lower_bound=lower,
        gap=gap,
        simple_gap=upper - simple_value,
        dual_bound=dual_upper_bound(p.A, z, k),
        swaps=swaps,
    )
