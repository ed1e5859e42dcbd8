import json

import numpy as np
import pytest

from sensel.cli import main
from sensel.data import abilene_like_fixture, load_csv_matrix, save_csv_matrix


def run(argv, capsys):
    code = main(argv)
    return code, capsys.readouterr()


def test_synth_stdout_and_file(tmp_path, capsys):
    code, out = run(["synth", "--m", "5", "--n", "2", "--seed", "3"], capsys)
    assert code == 0 and len(out.out.splitlines()) == 5
    path = tmp_path / "a.csv"
    assert main(["synth", "--m", "5", "--n", "2", "--seed", "3", "--out", str(path)]) == 0
    assert path.read_text() == out.out
    assert main(["synth", "--fixture", "abilene", "--out", str(path)]) == 0
    assert np.array_equal(load_csv_matrix(path), abilene_like_fixture())


def test_solve_and_select(capsys):
    code, out = run(["solve", "--m", "20", "--n", "3", "--k", "5"], capsys)
    rec = json.loads(out.out)
    assert code == 0 and rec["status"] == "converged"
    assert sum(rec["z"]) == pytest.approx(5, abs=1e-6)
    code, out = run(["select", "--m", "20", "--n", "3", "--k", "5", "--backend", "exact"], capsys)
    rec = json.loads(out.out)
    assert code == 0 and len(rec["chosen"]) == 5
    assert rec["lower_bound"] <= rec["dual_bound"]


def test_sweep_byte_identical(tmp_path):
    files = []
    for i in range(2):
        out, trace = tmp_path / f"r{i}.jsonl", tmp_path / f"t{i}.jsonl"
        code = main(["sweep", "--m", "20", "--n", "3", "--k-min", "3", "--k-max", "7",
                     "--k-step", "2", "--backends", "reference-dense", "exact",
                     "--out", str(out), "--trace", str(trace)])
        assert code == 0
        files.append(out.read_bytes() + trace.read_bytes())
    assert files[0] == files[1]


def test_mvee(tmp_path, capsys):
    path = tmp_path / "pts.csv"
    save_csv_matrix(path, [[1, 0], [-1, 0], [0, 1], [0, -1]])
    code, out = run(["mvee", "--input", str(path)], capsys)
    rec = json.loads(out.out)
    assert code == 0 and rec["violations"] == []
    assert np.allclose(rec["M"], np.eye(2), atol=1e-3)


def test_check(capsys):
    code, out = run(["check", "--m", "10", "--n", "2", "--k", "4"], capsys)
    rows = [json.loads(line) for line in out.out.splitlines()]
    assert code == 0 and all(r["passed"] for r in rows)


def test_convergence_failure_exit(capsys):
    code, out = run(["solve", "--m", "20", "--n", "3", "--k", "5", "--max-iter", "1"], capsys)
    assert code == 1 and json.loads(out.out)["status"] == "max-iterations"


@pytest.mark.parametrize("argv", [
    ["solve", "--input", "/nonexistent.csv", "--k", "3"],
    ["solve", "--m", "5", "--n", "2", "--k", "9"],
    ["sweep", "--m", "10", "--n", "2", "--k-min", "1", "--out", "/dev/null"],
    ["synth", "--m", "1", "--n", "3"],
    ["mvee", "--m", "2", "--n", "2"],
])
def test_input_errors(argv, capsys):
    code, out = run(argv, capsys)
    assert code == 2 and "input error" in out.err


def test_bad_csv_reports_position(tmp_path, capsys):
    path = tmp_path / "bad.csv"
    path.write_text("1,2\n3,oops\n")
    code, out = run(["solve", "--input", str(path), "--k", "1"], capsys)
    assert code == 2 and "row 2, column 2" in out.err


def test_argparse_errors_exit_two():
    with pytest.raises(SystemExit) as info:
        main(["solve"])
    assert info.value.code == 2
