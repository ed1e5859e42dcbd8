"""Acceptance criteria, one test each.

Every test prints a single ``PASS``/``FAIL`` line with the measured
quantity before asserting, so ``pytest -v`` output doubles as a report.
"""

import json

import numpy as np
import pytest

from sensel import dense
from sensel.barrier import (
    SensorProblem,
    build_E,
    gradient_exact,
    gradient_from_schur,
    hessian_exact,
    objective,
)
from sensel.cli import main
from sensel.data import abilene_like_fixture, gen_synthetic, preprocess_activity, save_csv_matrix
from sensel.experiment import RECORD_FIELDS, ExperimentConfig, read_records, run_cell
from sensel.gabp import GabpError, GabpGraph, enforced_solve, run_gabp
from sensel.mvee import Ellipsoid, enclosure_check, mvee_solve
from sensel.newton import NewtonConfig, newton_solve
from sensel.selection import select
from oracles import (
    brute_force_selection,
    finite_difference_gradient,
    finite_difference_jacobian,
    gauss_solve,
    random_dominant,
    random_tree,
)

pytestmark = pytest.mark.acceptance


def report(capsys, number, passed, detail):
    with capsys.disabled():
        print(f"\n{'PASS' if passed else 'FAIL'} criterion {number}: {detail}")
    assert passed, detail


def test_criterion_1_gabp_correctness(capsys):
    rng = np.random.default_rng(101)
    worst_mean = 0.0
    for _ in range(100):
        n = int(rng.integers(2, 51))
        J = random_dominant(rng, n)
        h = rng.normal(size=n)
        r = run_gabp(GabpGraph.from_matrix(J, h), threshold=1e-12)
        ref = dense.solve_direct(J, h)
        worst_mean = max(worst_mean, np.max(np.abs(r.means - ref)) / np.max(np.abs(ref)))
    worst_var = 0.0
    for _ in range(100):
        n = int(rng.integers(2, 51))
        J = random_tree(rng, n)
        r = run_gabp(GabpGraph.from_matrix(J, rng.normal(size=n)), threshold=1e-12)
        worst_var = max(worst_var, np.max(np.abs(r.variances - np.diag(dense.invert(J)))))
    report(capsys, 1, worst_mean <= 1e-6 and worst_var <= 1e-8,
           f"dominant means rel err {worst_mean:.2e} (<=1e-6), "
           f"tree variance err {worst_var:.2e} (<=1e-8)")


def hard_systems(rng, count):
    """Random symmetric systems on which plain GaBP fails."""
    found = 0
    while found < count:
        n = int(rng.integers(3, 31))
        B = rng.normal(size=(n, n))
        kind = found % 3
        if kind == 0:
            J = (B + B.T) / 2
        elif kind == 1:
            J = B @ B.T / n + 0.05 * np.eye(n)
        else:
            J = (B + B.T) / 2
            J[np.diag_indices(n)] = rng.uniform(-1, 3, n)
        b = rng.normal(size=n)
        try:
            r = run_gabp(GabpGraph.from_matrix(J, b), raise_on_failure=False)
            plain_ok = r.converged and np.all(np.isfinite(r.means))
        except GabpError:
            plain_ok = False
        if not plain_ok:
            found += 1
            yield J, b


def test_criterion_2_enforcement(capsys):
    rng = np.random.default_rng(202)
    worst, outer = 0.0, 0
    for J, b in hard_systems(rng, 50):
        x, metrics = enforced_solve(J, b)
        worst = max(worst, np.max(np.abs(J @ x - b)) / (1 + np.max(np.abs(b))))
        outer = max(outer, metrics.outer_iterations)
    report(capsys, 2, worst <= 1e-5,
           f"50 GaBP-failing systems, worst scaled residual {worst:.2e} (<=1e-5), "
           f"max outer iterations {outer}")


def random_instance(rng, max_m):
    m = int(rng.integers(4, max_m + 1))
    n = int(rng.integers(1, min(4, m - 1) + 1))
    k = int(rng.integers(n, m))
    p = SensorProblem(rng.normal(size=(m, n)), k)
    z = rng.uniform(0.2, 0.8, m)
    return p, z


def rel(a, b):
    return float(np.max(np.abs(a - b)) / max(1.0, float(np.max(np.abs(b)))))


def test_criterion_3_derivative_fidelity(capsys):
    rng = np.random.default_rng(303)
    worst_g = worst_h = 0.0
    for _ in range(20):
        p, z = random_instance(rng, 20)
        g = gradient_exact(p, z)[0]
        worst_g = max(worst_g, rel(g, finite_difference_gradient(lambda w: objective(p, w), z)))
        H = hessian_exact(p, z, gradient_exact(p, z)[1])
        fd = finite_difference_jacobian(lambda w: gradient_exact(p, w)[0], z)
        worst_h = max(worst_h, rel(H, fd))
    report(capsys, 3, worst_g <= 1e-5 and worst_h <= 1e-4,
           f"gradient rel err {worst_g:.2e} (<=1e-5), Hessian rel err {worst_h:.2e} (<=1e-4)")


def test_criterion_4_schur_identity(capsys):
    rng = np.random.default_rng(404)
    worst = 0.0
    for _ in range(20):
        p, z = random_instance(rng, 10)
        E = build_E(p, z)
        y = np.array([gauss_solve(E, e)[i] for i, e in enumerate(np.eye(E.shape[0]))])[p.n:]
        worst = max(worst, rel(gradient_from_schur(p, z, y), gradient_exact(p, z)[0]))
    report(capsys, 4, worst <= 1e-8, f"Schur-route gradient rel err {worst:.2e} (<=1e-8)")


def test_criterion_5_enumeration_sandwich(capsys):
    rng = np.random.default_rng(505)
    violations, recovered = 0, 0
    for _ in range(20):
        m, n = int(rng.integers(6, 13)), int(rng.integers(1, 4))
        k = int(rng.integers(n, m))
        A = rng.normal(size=(m, n))
        p = SensorProblem(A, k)
        z, _ = newton_solve(p, NewtonConfig())
        s = select(p, z)
        opt, _ = brute_force_selection(A, k)
        if not s.lower_bound <= opt + 1e-12 <= s.upper_bound + 1e-12:
            violations += 1
        if s.lower_bound >= opt - 1e-9 * max(1.0, abs(opt)):
            recovered += 1
    report(capsys, 5, violations == 0 and recovered >= 14,
           f"sandwich violations {violations}/20, local search optimal on {recovered}/20 "
           f"(>=14)")


@pytest.fixture(scope="module")
def benchmark():
    A = gen_synthetic(100, 20, 0)
    cfg = ExperimentConfig(newton_tol=1e-3, gabp_tol=1e-8)
    rows = {}
    for k in range(25, 71, 5):
        for backend in ("reference-dense", "exact", "truncated"):
            rows[k, backend] = run_cell(A, k, backend, cfg)[0]
    return rows


@pytest.mark.slow
def test_criterion_6_benchmark(benchmark, capsys):
    ks = range(25, 71, 5)
    agree = max(abs(benchmark[k, "reference-dense"]["relaxed_logdet"]
                    - benchmark[k, "exact"]["relaxed_logdet"]) for k in ks)
    iters = [r["newton_iterations"] for r in benchmark.values()]
    statuses = {r["status"] for r in benchmark.values()}
    # the upper bound relaxed + 2 m kappa only holds at the barrier optimum,
    # which the truncated method does not reach; compare certified gaps
    dual_order = all(benchmark[k, "truncated"]["dual_gap"] >= benchmark[k, "exact"]["dual_gap"]
                     for k in ks)
    plain_order = sum(benchmark[k, "truncated"]["gap"] >= benchmark[k, "exact"]["gap"]
                      for k in ks)
    trunc = sum(benchmark[k, "truncated"]["gabp_rounds"] for k in ks)
    exact = sum(benchmark[k, "exact"]["gabp_rounds"] for k in ks)
    outer = max(benchmark[k, "exact"]["max_outer_iterations"] for k in ks)
    passed = (agree <= 1e-4 and 4 <= min(iters) and max(iters) <= 12 and dual_order
              and trunc < exact / 5 and "error" not in statuses)
    report(capsys, 6, passed,
           f"ref/exact relaxed logdet diff {agree:.2e} (<=1e-4); Newton iterations "
           f"{min(iters)}-{max(iters)} (4-12); truncated certified gap >= exact at all k: "
           f"{dual_order} (barrier-bound gap ordering holds at {plain_order}/10 k); "
           f"GaBP rounds truncated {trunc} vs exact {exact} (ratio {trunc / exact:.3f} < 0.2); "
           f"largest exact outer-iteration count per step {outer}; statuses {sorted(statuses)}")


def test_criterion_7_mvee(capsys):
    square = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
    E, _ = mvee_solve(square)
    sym_err = float(np.max(np.abs(E.M - np.eye(2))))
    rng = np.random.default_rng(707)
    worst_ratio, worst_sum, shrink_ok = 0.0, 0.0, True
    for _ in range(20):
        n = int(rng.integers(2, 4))
        m = int(rng.integers(n + 2, 16))
        P = rng.normal(size=(m, n))
        E, z = mvee_solve(P, kappa=1e-4)
        worst_ratio = max(worst_ratio, enclosure_check(E, P).max_ratio)
        worst_sum = max(worst_sum, abs(z.sum() - n))
        shrink_ok &= not enclosure_check(Ellipsoid(1.01 * E.M), P, tol=0.0).ok
    report(capsys, 7, sym_err <= 1e-3 and worst_ratio <= 1.05 and worst_sum <= 1e-6 and shrink_ok,
           f"square |M-I| {sym_err:.1e} (<=1e-3); max ratio {worst_ratio:.5f} (<=1.05); "
           f"|sum z - n| {worst_sum:.1e} (<=1e-6); shrink probe violates: {shrink_ok}")


def test_criterion_8_determinism(tmp_path, capsys):
    pts = tmp_path / "pts.csv"
    save_csv_matrix(pts, gen_synthetic(12, 3, 4))
    runs = {
        "synth": ["synth", "--m", "30", "--n", "4", "--seed", "9"],
        "solve": ["solve", "--m", "30", "--n", "4", "--k", "8", "--backend", "exact"],
        "select": ["select", "--m", "30", "--n", "4", "--k", "8", "--backend", "truncated"],
        "mvee": ["mvee", "--input", str(pts)],
        "check": ["check", "--m", "12", "--n", "2", "--k", "5"],
    }
    same = []
    for name, argv in runs.items():
        outs = []
        for i in range(2):
            out = tmp_path / f"{name}{i}"
            main(argv + ["--out", str(out)])
            outs.append(out.read_bytes())
        same.append(outs[0] == outs[1] and len(outs[0]) > 0)
    sweeps = []
    for i in range(2):
        out, trace = tmp_path / f"s{i}.jsonl", tmp_path / f"t{i}.jsonl"
        main(["sweep", "--m", "30", "--n", "4", "--k-min", "4", "--k-max", "12", "--k-step", "4",
              "--backends", "reference-dense", "exact", "truncated",
              "--out", str(out), "--trace", str(trace)])
        sweeps.append(out.read_bytes() + trace.read_bytes())
    rounds = [r["gabp_rounds"] for r in read_records(tmp_path / "s0.jsonl")]
    same.append(sweeps[0] == sweeps[1] and any(rounds))
    report(capsys, 8, all(same),
           f"byte-identical reruns for {list(runs) + ['sweep']}: {same}")


def test_criterion_9_abilene_pipeline(tmp_path, capsys):
    M = abilene_like_fixture()
    kept_matrix, kept = preprocess_activity(M, 1.0)
    path = tmp_path / "abilene.csv"
    save_csv_matrix(path, M)
    out = tmp_path / "sweep.jsonl"
    n = kept_matrix.shape[1]
    code = main(["sweep", "--input", str(path), "--min-fraction", "1.0",
                 "--k-min", str(n), "--k-max", str(n + 20), "--out", str(out)])
    rows = read_records(out)
    gaps = [r["gap"] for r in rows]
    well_formed = all(
        tuple(r) == RECORD_FIELDS and r["status"] == "converged" and len(r["chosen"]) == r["k"]
        and r["n"] == 89 and r["m"] == 153 and np.isfinite(r["gap"]) for r in rows)
    monotone = all(b <= a for a, b in zip(gaps, gaps[1:]))
    passed = (len(kept) == 89 and code == 0 and len(rows) == 21 and well_formed and monotone)
    report(capsys, 9, passed,
           f"kept {len(kept)} columns (89); sweep exit {code}, {len(rows)} rows (21), "
           f"fields well-formed {well_formed}; gap {gaps[0]:.3f} -> {gaps[-1]:.3f} "
           f"non-increasing {monotone}")
