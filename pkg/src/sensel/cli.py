"""Command line interface.

Exit codes: 0 success, 1 convergence failure, 2 input error.
"""

import argparse
import json
import sys

import numpy as np

from . import data
from .barrier import SensorProblem, objective, relaxed_logdet
from .checks import run_checks
from .experiment import ExperimentConfig, dumps, run_experiment
from .gabp import GabpError
from .mvee import DegeneratePoints, NoConvergence, enclosure_check, mvee_solve
from .newton import BACKENDS, MaxIterations, NewtonConfig, newton_solve
from .selection import select

EXIT_OK, EXIT_CONVERGENCE, EXIT_INPUT = 0, 1, 2


class InputError(Exception):
    pass


def _instance_args(p):
    p.add_argument("--input", help="CSV matrix, rows are candidate measurements")
    p.add_argument("--m", type=int, default=100, help="synthetic rows (default 100)")
    p.add_argument("--n", type=int, default=20, help="synthetic columns (default 20)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--min-fraction", type=float, default=None,
                   help="drop CSV columns active on fewer than this fraction of rows")
    p.add_argument("--standardize", action="store_true",
                   help="scale kept CSV columns to unit RMS")


def _solver_args(p, k_required=True):
    if k_required:
        p.add_argument("--k", type=int, required=True, help="sensor budget")
    p.add_argument("--kappa", type=float, default=None, help="barrier weight (default 0.1/m)")
    p.add_argument("--newton-tol", type=float, default=1e-3)
    p.add_argument("--gabp-tol", type=float, default=1e-8)
    p.add_argument("--max-iter", type=int, default=50)


def _out_arg(p):
    p.add_argument("--out", help="output file (default stdout)")


def build_parser():
    parser = argparse.ArgumentParser(prog="sensel", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic matrix as CSV")
    p.add_argument("--m", type=int, default=100)
    p.add_argument("--n", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fixture", choices=["gaussian", "abilene"], default="gaussian")
    p.add_argument("--days", type=int, default=153)
    p.add_argument("--links", type=int, default=120)
    p.add_argument("--active", type=int, default=89)
    _out_arg(p)

    for name, help_ in [("solve", "one relaxed solve"),
                        ("select", "solve, round, local search and bounds")]:
        p = sub.add_parser(name, help=help_)
        _instance_args(p)
        _solver_args(p)
        p.add_argument("--backend", choices=BACKENDS, default="reference-dense")
        _out_arg(p)

    p = sub.add_parser("sweep", help="budget sweep over backends")
    _instance_args(p)
    _solver_args(p, k_required=False)
    p.add_argument("--k-min", type=int, help="first budget (default n)")
    p.add_argument("--k-max", type=int, help="last budget, inclusive (default m-1)")
    p.add_argument("--k-step", type=int, default=1)
    p.add_argument("--backends", nargs="+", choices=BACKENDS, default=["reference-dense"])
    p.add_argument("--trace", help="per-iteration trace file")
    p.add_argument("--timing", action="store_true", help="record wall time")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", required=True, help="result file (JSON lines)")

    p = sub.add_parser("mvee", help="minimum-volume enclosing ellipsoid of the rows")
    _instance_args(p)
    p.add_argument("--kappa", type=float, default=1e-4)
    p.add_argument("--tol", type=float, default=1e-10, help="Newton tolerance")
    p.add_argument("--enclosure-tol", type=float, default=5e-2)
    _out_arg(p)

    p = sub.add_parser("check", help="run the invariant suite on an instance")
    _instance_args(p)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--kappa", type=float, default=None)
    _out_arg(p)
    return parser


def load_instance(args):
    try:
        if args.input:
            A = data.load_csv_matrix(args.input)
            if args.min_fraction is not None or args.standardize:
                frac = 0.0 if args.min_fraction is None else args.min_fraction
                A, _ = data.preprocess_activity(A, frac, args.standardize)
            return A
        return data.gen_synthetic(args.m, args.n, args.seed)
    except (OSError, ValueError) as exc:
        raise InputError(str(exc)) from exc


def _problem(A, k, kappa, box=True):
    try:
        return SensorProblem(A, k, kappa, box=box)
    except ValueError as exc:
        raise InputError(str(exc)) from exc


def _emit(args, payload):
    text = payload if isinstance(payload, str) else dumps(payload) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _solve(args, A):
    p = _problem(A, args.k, args.kappa)
    config = NewtonConfig(tol=args.newton_tol, max_iter=args.max_iter, backend=args.backend,
                          gabp_tol=args.gabp_tol)
    try:
        z, trace = newton_solve(p, config)
    except MaxIterations as exc:
        z, trace = exc.z, exc.trace
    return p, z, trace


def _solve_record(p, z, trace):
    return {
        "k": p.k, "backend": trace.backend, "status": trace.status, "m": p.m, "n": p.n,
        "kappa": p.kappa, "barrier_objective": objective(p, z),
        "relaxed_logdet": relaxed_logdet(p.A, z), "newton_iterations": trace.iterations,
        "gabp_rounds": trace.total_rounds, "gabp_messages": trace.total_messages,
        "max_outer_iterations": trace.max_outer_iterations, "z": [float(v) for v in z],
    }


def cmd_synth(args):
    if args.fixture == "abilene":
        try:
            M = data.abilene_like_fixture(args.days, args.links, args.active, args.seed)
        except ValueError as exc:
            raise InputError(str(exc)) from exc
    else:
        try:
            M = data.gen_synthetic(args.m, args.n, args.seed)
        except ValueError as exc:
            raise InputError(str(exc)) from exc
    if args.out:
        data.save_csv_matrix(args.out, M)
    else:
        data.write_csv_matrix(sys.stdout, M)
    return EXIT_OK


def cmd_solve(args):
    p, z, trace = _solve(args, load_instance(args))
    _emit(args, _solve_record(p, z, trace))
    return EXIT_OK if trace.converged else EXIT_CONVERGENCE


def cmd_select(args):
    p, z, trace = _solve(args, load_instance(args))
    record = _solve_record(p, z, trace)
    s = select(p, z)
    record.update(
        chosen=[int(i) for i in s.chosen], simple_logdet=s.simple_logdet,
        local_logdet=s.logdet_value, upper_bound=s.upper_bound, lower_bound=s.lower_bound,
        gap=s.gap, simple_gap=s.simple_gap, dual_bound=s.dual_bound,
        dual_gap=s.dual_bound - s.lower_bound, swaps=s.swaps,
    )
    _emit(args, record)
    return EXIT_OK if trace.converged else EXIT_CONVERGENCE


def cmd_sweep(args):
    if args.input:
        mode, m, n = "csv", None, None
        A = load_instance(args)
        m, n = A.shape
    else:
        mode, m, n = "synthetic", args.m, args.n
    k_min = n if args.k_min is None else args.k_min
    k_max = m - 1 if args.k_max is None else args.k_max
    if args.k_step < 1:
        raise InputError("--k-step must be positive")
    cfg = ExperimentConfig(
        mode=mode, m=m, n=n, k_values=list(range(k_min, k_max + 1, args.k_step)),
        kappa=args.kappa, seed=args.seed, backends=args.backends,
        newton_tol=args.newton_tol, gabp_tol=args.gabp_tol, max_iter=args.max_iter,
        input=args.input, min_fraction=args.min_fraction, standardize=args.standardize,
        output=args.out, trace=args.trace, timing=args.timing, jobs=args.jobs,
    )
    try:
        _, ok = run_experiment(cfg)
    except (OSError, ValueError) as exc:
        raise InputError(str(exc)) from exc
    return EXIT_OK if ok else EXIT_CONVERGENCE


def cmd_mvee(args):
    A = load_instance(args)
    try:
        E, z = mvee_solve(A, args.kappa, args.tol)
    except DegeneratePoints as exc:
        raise InputError(str(exc)) from exc
    report = enclosure_check(E, A, args.enclosure_tol)
    _emit(args, {
        "m": A.shape[0], "n": A.shape[1], "kappa": args.kappa,
        "M": E.M.tolist(), "z": [float(v) for v in z], "weight_sum": float(z.sum()),
        "values": report.values.tolist(), "violations": report.violations.tolist(),
        "max_ratio": report.max_ratio, "enclosure_tol": args.enclosure_tol,
    })
    return EXIT_OK if report.ok else EXIT_CONVERGENCE


def cmd_check(args):
    A = load_instance(args)
    _problem(A, args.k, args.kappa)
    results = run_checks(A, args.k, args.kappa, args.seed)
    _emit(args, "".join(json.dumps(r.as_dict()) + "\n" for r in results))
    return EXIT_OK if all(r.passed for r in results) else EXIT_CONVERGENCE


COMMANDS = {"synth": cmd_synth, "solve": cmd_solve, "select": cmd_select,
            "sweep": cmd_sweep, "mvee": cmd_mvee, "check": cmd_check}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except InputError as exc:
        print(f"sensel {args.command}: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (NoConvergence, MaxIterations, GabpError, ArithmeticError,
            np.linalg.LinAlgError) as exc:
        print(f"sensel {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE


if __name__ == "__main__":
    sys.exit(main())
