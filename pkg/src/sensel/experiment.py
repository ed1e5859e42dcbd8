"""Budget sweeps over backends with line-delimited JSON output.

Every result row carries the fields in :data:`RECORD_FIELDS`.  Rows are
written one per ``(k, backend)`` cell, in sweep order, and flushed as soon
as the cell finishes; a failed cell produces a row with ``status="error"``
and the exception class in ``error``.  Wall time is recorded only when
``timing`` is enabled, so that repeated runs give byte-identical files.
"""

import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .barrier import SensorProblem, default_kappa, objective, relaxed_logdet
from .data import gen_synthetic, load_csv_matrix, preprocess_activity
from .gabp import GabpError
from .newton import BACKENDS, MaxIterations, NewtonConfig, newton_solve
from .selection import select

RECORD_FIELDS = (
    "k", "backend", "status", "error", "m", "n", "kappa", "seed",
    "barrier_objective", "relaxed_logdet", "simple_logdet", "local_logdet",
    "upper_bound", "lower_bound", "gap", "simple_gap", "dual_bound", "dual_gap",
    "newton_iterations", "gabp_rounds", "gabp_messages", "max_outer_iterations",
    "swaps", "chosen", "wall_time",
)

TRACE_FIELDS = ("k", "backend", "iteration", "objective", "decrement", "step",
                "direction", "rounds", "messages", "outer_iterations")


@dataclass
class ExperimentConfig:
    """Sweep description.  ``mode`` is ``"synthetic"`` or ``"csv"``."""

    mode: str = "synthetic"
    m: int = 100
    n: int = 20
    k_values: list = field(default_factory=lambda: list(range(25, 71, 5)))
    kappa: float = None
    seed: int = 0
    backends: list = field(default_factory=lambda: list(BACKENDS))
    newton_tol: float = 1e-3
    gabp_tol: float = 1e-8
    max_iter: int = 50
    input: str = None
    min_fraction: float = None
    standardize: bool = False
    output: str = "results.jsonl"
    trace: str = None
    timing: bool = False
    jobs: int = 1

    def load_matrix(self):
        if self.mode == "synthetic":
            return gen_synthetic(self.m, self.n, self.seed)
        if self.mode != "csv":
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.input is None:
            raise ValueError("csv mode needs an input path")
        A = load_csv_matrix(self.input)
        if self.min_fraction is not None or self.standardize:
            frac = 0.0 if self.min_fraction is None else self.min_fraction
            A, _ = preprocess_activity(A, frac, self.standardize)
        return A

    def validate(self, A):
        m, n = A.shape
        bad = [k for k in self.k_values if not n <= k <= m - 1]
        if bad:
            raise ValueError(f"budgets {bad} outside [{n}, {m - 1}]")
        unknown = [b for b in self.backends if b not in BACKENDS]
        if unknown:
            raise ValueError(f"unknown backends {unknown}")


def _clean(value):
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    if isinstance(value, (np.integer,)):
        return int(value)
    return value


def dumps(record):
    return json.dumps({key: _clean(record.get(key)) for key in record})


def run_cell(A, k, backend, cfg):
    """Solve, round, search and bound one ``(k, backend)`` cell.

    Returns ``(record, trace_rows)``; never raises for solver failures.
    """
    m, n = A.shape
    kappa = default_kappa(m) if cfg.kappa is None else cfg.kappa
    record = dict.fromkeys(RECORD_FIELDS)
    record.update(k=int(k), backend=backend, m=m, n=n, kappa=kappa,
                  seed=cfg.seed if cfg.mode == "synthetic" else None)
    start = time.perf_counter()
    trace_rows = []
    try:
        p = SensorProblem(A, k, kappa)
        config = NewtonConfig(tol=cfg.newton_tol, max_iter=cfg.max_iter, backend=backend,
                              gabp_tol=cfg.gabp_tol)
        try:
            z, trace = newton_solve(p, config)
        except MaxIterations as exc:
            z, trace = exc.z, exc.trace
        for r in trace.records:
            trace_rows.append({"k": int(k), "backend": backend, "iteration": r.iteration,
                               "objective": r.objective, "decrement": r.decrement,
                               "step": r.step, "direction": r.direction, "rounds": r.rounds,
                               "messages": r.messages, "outer_iterations": r.outer_iterations})
        s = select(p, z)
        record.update(
            status=trace.status,
            barrier_objective=objective(p, z),
            relaxed_logdet=relaxed_logdet(A, z),
            simple_logdet=s.simple_logdet,
            local_logdet=s.logdet_value,
            upper_bound=s.upper_bound,
            lower_bound=s.lower_bound,
            gap=s.gap,
            simple_gap=s.simple_gap,
            dual_bound=s.dual_bound,
            dual_gap=s.dual_bound - s.lower_bound,
            newton_iterations=trace.iterations,
            gabp_rounds=trace.total_rounds,
            gabp_messages=trace.total_messages,
            max_outer_iterations=trace.max_outer_iterations,
            swaps=s.swaps,
            chosen=[int(i) for i in s.chosen],
        )
    except (ArithmeticError, np.linalg.LinAlgError, GabpError, ValueError, RuntimeError) as exc:
        record.update(status="error", error=type(exc).__name__)
    if cfg.timing:
        record["wall_time"] = time.perf_counter() - start
    return record, trace_rows


def _cell_job(args):
    return run_cell(*args)


def run_experiment(cfg):
    """Run every cell of ``cfg`` and write the result and trace files.

    Returns ``(records, ok)`` with ``ok`` true iff every cell converged.
    """
    A = cfg.load_matrix()
    cfg.validate(A)
    cells = [(A, k, b, cfg) for k in cfg.k_values for b in cfg.backends]
    records = []
    trace_path = cfg.trace
    with open(cfg.output, "w") as out:
        tfh = open(trace_path, "w") if trace_path else None
        try:
            if cfg.jobs > 1:
                pool = ProcessPoolExecutor(cfg.jobs)
                results = pool.map(_cell_job, cells)
            else:
                pool = None
                results = map(_cell_job, cells)
            # single writer, sweep order, whatever the scheduling
            for record, rows in results:
                out.write(dumps(record) + "\n")
                out.flush()
                if tfh:
                    for row in rows:
                        tfh.write(dumps(row) + "\n")
                    tfh.flush()
                records.append(record)
            if pool:
                pool.shutdown()
        finally:
            if tfh:
                tfh.close()
    ok = all(r["status"] == "converged" for r in records)
    return records, ok


def read_records(path):
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]
