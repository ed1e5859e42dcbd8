"""Gaussian belief propagation on a simulated synchronous network.

Every variable of ``J x = h`` is a node; every nonzero off-diagonal entry
``J_ij`` is a pair of directed links.  In each round all nodes send one
message (a precision ``alpha`` and a potential ``beta``) to every neighbour,
computed from the messages received in the previous round.  Messages are
kept in dense ``N x N`` arrays where ``alpha[i, j]`` is the message sent
from ``i`` to ``j``; sums over incoming messages run in ascending sender
order, so identical inputs give identical message streams.

The precision messages do not depend on ``h``.  Several right-hand sides
over the same matrix therefore share one ``alpha`` array and carry one
``beta`` array each, which is how the parallel instances of
:func:`solve_multi_rhs` and :func:`enforced_solve` are simulated.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .dense import as_matrix, is_positive_definite, symmetrize

DEFAULT_THRESHOLD = 1e-8
DEFAULT_MAX_ROUNDS = 1000
DIVERGENCE_LIMIT = 1e12
PIVOT_TOL = 1e-14
LOADING_MARGIN = 1e-6
LOADING_RELATIVE = 0.1


class GabpError(RuntimeError):
    pass


class DivergedOrMaxRounds(GabpError):
    """GaBP did not converge.  ``result`` holds the last state and
    ``instance`` the index of the failing right-hand side, if any."""

    def __init__(self, message, result=None, instance=None):
        super().__init__(message)
        self.result = result
        self.instance = instance


class ZeroPivot(GabpError):
    pass


class MaxOuterExceeded(GabpError):
    def __init__(self, message, x=None, metrics=None):
        super().__init__(message)
        self.x = x
        self.metrics = metrics


@dataclass
class NetworkMetrics:
    """Communication counters for one simulated computation.

    ``payload`` counts scalars on the wire (two per GaBP message).
    ``outer_iterations`` is only nonzero for enforced solves.
    """

    rounds: int = 0
    messages: int = 0
    payload: int = 0
    outer_iterations: int = 0

    def then(self, other):
        """Metrics of running ``other`` after ``self``."""
        return NetworkMetrics(
            self.rounds + other.rounds,
            self.messages + other.messages,
            self.payload + other.payload,
            self.outer_iterations + other.outer_iterations,
        )

    def alongside(self, other):
        """Metrics of running ``other`` concurrently with ``self``."""
        return NetworkMetrics(
            max(self.rounds, other.rounds),
            self.messages + other.messages,
            self.payload + other.payload,
            max(self.outer_iterations, other.outer_iterations),
        )

    def as_dict(self):
        return {
            "rounds": self.rounds,
            "messages": self.messages,
            "payload": self.payload,
            "outer_iterations": self.outer_iterations,
        }


@dataclass
class GabpGraph:
    """Graphical model of ``J x = h``: node precisions ``diag``, node
    potentials ``h`` and undirected edges ``(i, j)``, ``i < j``, with
    weights ``J_ij``."""

    diag: np.ndarray
    h: np.ndarray
    edges: np.ndarray
    weights: np.ndarray

    @classmethod
    def from_matrix(cls, J, h):
        J = symmetrize(J)
        h = np.asarray(h, dtype=float)
        if h.shape != (J.shape[0],):
            raise ValueError(f"potential has shape {h.shape}, expected ({J.shape[0]},)")
        i, j = np.nonzero(np.triu(J, 1))
        return cls(np.diag(J).copy(), h.copy(), np.column_stack([i, j]), J[i, j].copy())

    @property
    def n(self):
        return self.diag.shape[0]

    @property
    def num_edges(self):
        return self.edges.shape[0]

    def offdiag(self):
        W = np.zeros((self.n, self.n))
        i, j = self.edges.T
        W[i, j] = self.weights
        W[j, i] = self.weights
        return W

    def neighbors(self, i):
        W = self.offdiag()
        return np.flatnonzero(W[i])


@dataclass
class GabpResult:
    means: np.ndarray
    variances: np.ndarray
    rounds: int
    messages_sent: int
    converged: bool
    alpha: np.ndarray = field(repr=False, default=None)
    beta: np.ndarray = field(repr=False, default=None)

    @property
    def metrics(self):
        return NetworkMetrics(self.rounds, self.messages_sent, 2 * self.messages_sent)


def _infer(d, alpha, H, beta):
    prec = d + alpha.sum(axis=0)
    if np.any(np.abs(prec) < PIVOT_TOL):
        raise ZeroPivot("marginal precision is zero")
    var = 1.0 / prec
    means = (H + beta.sum(axis=-2)) * var
    return means, var


def _run_batch(W, d, H, threshold, max_rounds, alpha=None, beta=None, trace=None):
    """Run GaBP for the potentials ``H`` (shape ``(R, N)``) over one matrix.

    Instance ``r`` stops at the first round where the largest change of
    any of its messages is at most ``threshold``; its means are read off
    at that round.  Returns per-instance results (``converged`` False on
    divergence or when ``max_rounds`` is hit).
    """
    R, N = H.shape
    mask = W != 0
    directed = int(mask.sum())
    W2 = W * W
    alpha = np.zeros((N, N)) if alpha is None else alpha.copy()
    beta = np.zeros((R, N, N)) if beta is None else beta.copy()
    zero_diag = d == 0

    done = np.zeros(R, dtype=bool)
    diverged = np.zeros(R, dtype=bool)
    rounds = np.zeros(R, dtype=int)
    means = np.zeros((R, N))
    variances = np.zeros((R, N))
    final_alpha = [None] * R

    if directed == 0:
        # isolated nodes: local solve, one round with nothing on the wire
        m, v = _infer(d, alpha, H, beta)
        return [
            GabpResult(m[r], v.copy(), 1, 0, True, alpha.copy(), beta[r].copy())
            for r in range(R)
        ]

    alpha_fixed = False
    factor = None
    for rnd in range(1, max_rounds + 1):
        active = np.flatnonzero(~done)
        if active.size == 0:
            break
        if not alpha_fixed:
            # a node with no self-precision and nothing received yet holds
            # its messages until its neighbours have informed it
            if zero_diag.any():
                waiting = zero_diag & ~np.any(alpha != 0, axis=0)
                send = mask & ~waiting[:, None]
            else:
                send = mask
            cav_a = (d + alpha.sum(axis=0))[:, None] - alpha.T
            if np.any(send & (np.abs(cav_a) < PIVOT_TOL)):
                raise ZeroPivot(f"cavity precision vanished in round {rnd}")
            safe = np.where(send, cav_a, 1.0)
            new_alpha = np.where(send, -W2 / safe, 0.0)
            delta_a = float(np.max(np.abs(new_alpha - alpha)))
            # the precision recursion is deterministic: once a round leaves
            # it unchanged it stays unchanged, so freeze it
            alpha_fixed = delta_a == 0.0
            alpha = new_alpha
            factor = np.where(send, -W / safe, 0.0)
        else:
            delta_a = 0.0

        b = beta[active]
        cav_b = (H[active] + b.sum(axis=1))[:, :, None] - b.transpose(0, 2, 1)
        new_beta = cav_b * factor
        delta_b = np.max(np.abs(new_beta - b), axis=(1, 2))
        beta[active] = new_beta
        rounds[active] = rnd

        if trace is not None:
            _emit_trace(trace, rnd, alpha, beta[0], mask)

        blown = np.max(np.abs(new_beta), axis=(1, 2)) > DIVERGENCE_LIMIT
        blown |= ~np.isfinite(delta_b)
        if not alpha_fixed and not (np.isfinite(delta_a) and np.max(np.abs(alpha)) <= DIVERGENCE_LIMIT):
            blown[:] = True
        finished = (np.maximum(delta_a, delta_b) <= threshold) & ~blown
        for pos, r in enumerate(active):
            if blown[pos]:
                diverged[r] = True
                done[r] = True
            elif finished[pos]:
                done[r] = True
                means[r], variances[r] = _infer(d, alpha, H[r], beta[r])
                final_alpha[r] = alpha

    results = []
    for r in range(R):
        converged = done[r] and not diverged[r]
        if not converged and not diverged[r]:
            try:
                means[r], variances[r] = _infer(d, alpha, H[r], beta[r])
            except ZeroPivot:
                means[r] = variances[r] = np.nan
        elif diverged[r]:
            means[r] = variances[r] = np.nan
        a = final_alpha[r] if final_alpha[r] is not None else alpha
        results.append(
            GabpResult(
                means[r], variances[r], int(rounds[r]), directed * int(rounds[r]),
                bool(converged), a.copy(), beta[r].copy(),
            )
        )
    return results


def _emit_trace(stream, rnd, alpha, beta, mask):
    for i in range(mask.shape[0]):
        nbrs = np.flatnonzero(mask[i])
        rec = {
            "round": rnd,
            "node": i,
            "to": nbrs.tolist(),
            "alpha": alpha[i, nbrs].tolist(),
            "beta": beta[i, nbrs].tolist(),
        }
        stream.write(json.dumps(rec) + "\n")


def run_gabp(graph, threshold=DEFAULT_THRESHOLD, max_rounds=DEFAULT_MAX_ROUNDS, *,
             alpha=None, beta=None, trace=None, raise_on_failure=True):
    """Run synchronous GaBP on ``graph`` until all message changes are at
    most ``threshold``.

    Nodes with a zero diagonal entry (as in saddle-point systems) are
    allowed: such a node stays silent until it has received a nonzero
    precision message.  ``alpha``/``beta`` warm-start the messages and
    ``trace`` is an optional text stream receiving one JSON record per node
    and round.

    Raises :class:`DivergedOrMaxRounds` when the messages blow up or
    ``max_rounds`` is reached, unless ``raise_on_failure`` is False, in
    which case the unconverged result is returned.
    """
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    W = graph.offdiag()
    if np.any(graph.diag == 0):
        lonely = (graph.diag == 0) & ~np.any(W != 0, axis=0)
        if np.any(lonely):
            raise ZeroPivot("isolated node with zero precision")
    H = graph.h[None, :]
    b0 = None if beta is None else beta[None]
    (res,) = _run_batch(W, graph.diag, H, threshold, max_rounds, alpha, b0, trace)
    if raise_on_failure and not res.converged:
        raise DivergedOrMaxRounds(
            f"GaBP did not converge after {res.rounds} rounds", result=res
        )
    return res


def solve_multi_rhs(J, B, threshold=DEFAULT_THRESHOLD, max_rounds=DEFAULT_MAX_ROUNDS):
    """Solve ``J x_r = b_r`` for every right-hand side in ``B`` by parallel
    GaBP instances.

    ``B`` is a sequence of vectors (or an ``(R, N)`` array).  Returns the
    solutions as the columns of an ``(N, R)`` array and the combined
    :class:`NetworkMetrics` (rounds = slowest instance, messages = total).
    """
    J = symmetrize(J)
    N = J.shape[0]
    B = np.asarray(B, dtype=float).reshape(-1, N) if len(B) else np.zeros((0, N))
    if B.shape[0] == 0:
        return np.zeros((N, 0)), NetworkMetrics()
    W = J - np.diag(np.diag(J))
    results = _run_batch(W, np.diag(J).copy(), B, threshold, max_rounds)
    metrics = NetworkMetrics()
    for r, res in enumerate(results):
        if not res.converged:
            raise DivergedOrMaxRounds(
                f"instance {r} did not converge", result=res, instance=r
            )
        metrics = metrics.alongside(res.metrics)
    return np.column_stack([res.means for res in results]), metrics


def dominance_loading(J, margin=LOADING_MARGIN, relative=0.0):
    """Smallest diagonal shift that makes ``J`` strictly diagonally
    dominant, plus ``max(margin, relative * max|J_ii|)``; zero if ``J``
    already is."""
    J = np.asarray(J, dtype=float)
    off = np.sum(np.abs(J), axis=1) - np.abs(np.diag(J))
    excess = float(np.max(off - np.diag(J)))
    if excess < 0:
        return 0.0
    return excess + max(margin, relative * float(np.max(np.abs(np.diag(J)))))


def _positive_form(J, B):
    if is_positive_definite(J):
        return J, B, 1
    if is_positive_definite(-J):
        return -J, -B, 1
    return symmetrize(J @ J), J @ B, 2


class _LoadedSolver:
    """GaBP on ``K + G I`` with precision messages kept between calls."""

    def __init__(self, K, gamma, threshold, max_rounds):
        loaded = K + gamma * np.eye(K.shape[0])
        self.W = loaded - np.diag(np.diag(loaded))
        self.d = np.diag(loaded).copy()
        self.threshold = threshold
        self.max_rounds = max_rounds
        self.alpha = None

    def __call__(self, H, beta=None, scale=False):
        """Solve for every row of ``H``; returns ``(X (N, R), results, metrics)``."""
        s = np.max(np.abs(H), axis=1, keepdims=True) if scale else np.ones((H.shape[0], 1))
        s[s == 0] = 1.0
        results = _run_batch(self.W, self.d, H / s, self.threshold, self.max_rounds,
                             self.alpha, beta if self.alpha is not None else None)
        metrics = NetworkMetrics()
        for r, res in enumerate(results):
            if not res.converged:
                raise GabpError(
                    f"inner GaBP failed on a loaded (diagonally dominant) system, instance {r}"
                )
            metrics = metrics.alongside(res.metrics)
        self.alpha = results[0].alpha
        X = np.column_stack([res.means for res in results]) * s.T
        return X, results, metrics


def enforced_solve(J, b, threshold=DEFAULT_THRESHOLD, outer_tol=1e-8, max_outer=20000,
                   max_rounds=DEFAULT_MAX_ROUNDS, method="cg", relative_margin=LOADING_RELATIVE):
    """Solve ``J x = b`` with GaBP inside a diagonal-loading outer loop.

    The system is first brought to positive definite form ``K x = c``:
    kept as is if ``J`` is positive definite, negated if it is negative
    definite, and replaced by the normal equations ``J J x = J b``
    otherwise.  With the loading ``G`` from :func:`dominance_loading`,
    ``K + G I`` is diagonally dominant, so GaBP converges on it.  The
    margin beyond bare dominance is ``relative_margin * max|K_ii|`` (at
    least 1e-6); with a vanishing margin the inner GaBP contracts so
    slowly that it can exhaust ``max_rounds``.

    ``method="richardson"`` iterates the fixed point

        x <- GaBP(K + G I, c + G x)

    with warm-started messages.  ``method="cg"`` (default) reaches the same
    fixed point by conjugate gradients on ``K`` preconditioned with the
    GaBP solve of ``K + G I``; each outer iteration is one GaBP run plus one
    matrix-vector exchange and two network-wide sums.  Both stop when
    ``|J x - b|_inf <= 10 outer_tol (1 + |b|_inf)``.

    ``b`` may be a vector or an ``(N, R)`` array of right-hand sides, which
    are iterated as parallel instances.  Returns ``(x, metrics)``.
    """
    J = symmetrize(J)
    N = J.shape[0]
    b = np.asarray(b, dtype=float)
    vector = b.ndim == 1
    Bm = b.reshape(N, -1)
    R = Bm.shape[1]
    if R == 0:
        return b.copy(), NetworkMetrics()
    if method not in ("cg", "richardson"):
        raise ValueError(f"unknown method {method!r}")

    K, C, hops = _positive_form(J, Bm)
    gamma = dominance_loading(K, relative=relative_margin)
    inner = _LoadedSolver(K, gamma, threshold, max_rounds)
    links = int(np.count_nonzero(J - np.diag(np.diag(J))))
    tol = 10.0 * outer_tol * (1.0 + np.max(np.abs(Bm), axis=0))

    def exchange(cols, times=1):
        # neighbours swap one scalar per link and instance
        return NetworkMetrics(times, times * links * cols, times * links * cols)

    def reduction(cols):
        # a network-wide sum along a spanning tree: up and back down
        return NetworkMetrics(2, 2 * (N - 1) * cols, 2 * (N - 1) * cols)

    if gamma == 0.0:
        # K is diagonally dominant already: one plain GaBP pass is exact
        x, _, step = inner(C.T)
        metrics = step.then(exchange(R))
        metrics.outer_iterations = 1
        return (x[:, 0] if vector else x), metrics

    x = np.zeros((N, R))
    active = np.ones(R, dtype=bool)
    metrics = NetworkMetrics()
    if method == "richardson":
        beta = np.zeros((R, N, N))
        for outer in range(1, max_outer + 1):
            idx = np.flatnonzero(active)
            H = (C[:, idx] + gamma * x[:, idx]).T
            new_x, results, step = inner(H, beta[idx])
            for pos, r in enumerate(idx):
                beta[r] = results[pos].beta
            metrics = metrics.then(step).then(exchange(idx.size))
            x[:, idx] = new_x
            resid = np.max(np.abs(J @ new_x - Bm[:, idx]), axis=0)
            # the update size has a noise floor set by the inner threshold,
            # so the residual decides
            active[idx[resid <= tol[idx]]] = False
            if not active.any():
                metrics.outer_iterations = outer
                return (x[:, 0] if vector else x), metrics
    else:
        # flexible (Polak-Ribiere) preconditioned conjugate gradients; the
        # GaBP preconditioner is applied to the residual scaled to unit
        # size so its absolute threshold acts as a relative accuracy
        r = C.copy()
        y, _, step = inner(r.T, scale=True)
        metrics = metrics.then(step)
        p = y.copy()
        ry = np.sum(r * y, axis=0)
        for outer in range(1, max_outer + 1):
            idx = np.flatnonzero(active)
            Kp = K @ p[:, idx]
            a = ry[idx] / np.sum(p[:, idx] * Kp, axis=0)
            x[:, idx] += a * p[:, idx]
            r_new = r[:, idx] - a * Kp
            metrics = metrics.then(exchange(idx.size, hops)).then(reduction(idx.size))
            resid = np.max(np.abs(J @ x[:, idx] - Bm[:, idx]), axis=0)
            done = resid <= tol[idx]
            active[idx[done]] = False
            if not active.any():
                metrics.outer_iterations = outer
                return (x[:, 0] if vector else x), metrics
            keep = ~done
            idx, r_new = idx[keep], r_new[:, keep]
            y_new, _, step = inner(r_new.T, scale=True)
            metrics = metrics.then(step).then(reduction(idx.size))
            coef = np.sum(r_new * (y_new - y[:, idx]), axis=0) / ry[idx]
            ry[idx] = np.sum(r_new * y_new, axis=0)
            p[:, idx] = y_new + coef * p[:, idx]
            r[:, idx], y[:, idx] = r_new, y_new
    metrics.outer_iterations = max_outer
    raise MaxOuterExceeded(
        f"outer loop did not converge in {max_outer} iterations",
        x=(x[:, 0] if vector else x), metrics=metrics,
    )
