"""Sensor selection by log-det maximization with Gaussian belief propagation.

The relaxed problem ``max log det(A^T diag(z) A)`` subject to
``sum(z) = k``, ``0 <= z <= 1`` is solved by a log-barrier Newton method
whose linear algebra can run as simulated message passing; see
:mod:`sensel.newton` for the three backends.
"""

from .barrier import SensorProblem, default_kappa, objective
from .data import gen_synthetic, load_csv_matrix, preprocess_activity
from .gabp import GabpGraph, enforced_solve, run_gabp
from .mvee import Ellipsoid, enclosure_check, mvee_solve
from .newton import NewtonConfig, newton_solve
from .selection import local_search, round_topk, select

__all__ = [
    "Ellipsoid",
    "GabpGraph",
    "NewtonConfig",
    "SensorProblem",
    "default_kappa",
    "enclosure_check",
    "enforced_solve",
    "gen_synthetic",
    "load_csv_matrix",
    "local_search",
    "mvee_solve",
    "newton_solve",
    "objective",
    "preprocess_activity",
    "round_topk",
    "run_gabp",
    "select",
]
