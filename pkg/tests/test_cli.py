import csv
import io
import subprocess
import sys

import pytest

from vmcp import cli
from vmcp.model import Instance
from vmcp.generator import GenParams, generate_basic
from vmcp.model import make_instance


def run(argv, capsys):
    code = cli.main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_gen_writes_files(tmp_path, capsys):
    code, _, _ = run(["gen", "--servers", "12", "--alpha", "0.2", "--seed", "42", "--count", "3",
                      "--out", str(tmp_path)], capsys)
    assert code == 0
    names = sorted(p.name for p in tmp_path.iterdir())
    assert names == [f"vmcp_basic_K12_a0.2_s{s}.json" for s in (42, 43, 44)]
    first = {p.name: p.read_bytes() for p in tmp_path.iterdir()}
    run(["gen", "--servers", "12", "--alpha", "0.2", "--seed", "42", "--count", "3", "--out", str(tmp_path)], capsys)
    assert first == {p.name: p.read_bytes() for p in tmp_path.iterdir()}
    inst = Instance.load(tmp_path / names[0])
    assert inst.to_json() == _with_id(generate_basic(GenParams(12, 0.2, seed=42)), names[0][:-5]).to_json()


def _with_id(inst, name):
    inst.metadata["id"] = name
    return inst


def test_gen_count_zero(tmp_path, capsys):
    code, _, _ = run(["gen", "--servers", "5", "--alpha", "0.2", "--count", "0", "--out", str(tmp_path / "d")], capsys)
    assert code == 0 and not any((tmp_path / "d").iterdir())


def test_gen_extended_and_env_seed(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("VMCP_SEED", "7")
    code, _, _ = run(["gen", "--servers", "6", "--alpha", "0.3", "--seed", "1", "--beta", "0.35",
                      "--theta", "0.05", "--out", str(tmp_path)], capsys)
    assert code == 0
    (path,) = tmp_path.iterdir()
    assert path.name == "vmcp_ext_K6_a0.3_s7.json"
    assert Instance.load(path).extensions is not None


def test_gen_usage_errors(tmp_path, capsys):
    assert run(["gen", "--servers", "5", "--alpha", "2", "--out", str(tmp_path)], capsys)[0] == 64
    with pytest.raises(SystemExit) as exc:
        cli.main(["gen", "--servers", "5", "--alpha", "0.2", "--beta", "1.5", "--out", str(tmp_path)])
    assert exc.value.code == 64
    with pytest.raises(SystemExit) as exc:
        cli.main(["frobnicate"])
    assert exc.value.code == 64


@pytest.fixture
def tiny_file(tmp_path, capsys):
    run(["gen", "--servers", "4", "--alpha", "0.4", "--seed", "3", "--out", str(tmp_path)], capsys)
    return next(tmp_path.glob("*.json"))


def test_solve_cns_and_bb_agree(tiny_file, tmp_path, capsys):
    out = tmp_path / "runs.csv"
    trace = tmp_path / "trace.csv"
    for algo in ("cns", "bb", "cns-noprime"):
        code, _, _ = run(["solve", "--algo", algo, "--inst", str(tiny_file), "--out", str(out),
                          "--trace", str(trace)], capsys)
        assert code == 0
    rows = list(csv.DictReader(out.open()))
    assert [r["algorithm"] for r in rows] == ["cns", "bb", "cns-noprime"]
    objs = {float(r["objective"]) for r in rows}
    assert max(objs) - min(objs) <= 1e-6 * max(objs)
    assert int(rows[0]["levels"]) >= 1
    assert "level" in trace.read_text().splitlines()[0]


def test_solve_stdout_and_time_limit(tiny_file, capsys):
    code, out, _ = run(["solve", "--algo", "cns", "--inst", str(tiny_file), "--time-limit", "0"], capsys)
    assert code == 2
    row = next(csv.DictReader(io.StringIO(out)))
    assert row["status"] == "TimeLimit" and float(row["bound"]) > 0


def test_solve_jobs_sorted(tmp_path, capsys):
    run(["gen", "--servers", "4", "--alpha", "0.2", "--seed", "0", "--count", "3", "--out", str(tmp_path)], capsys)
    files = sorted(str(p) for p in tmp_path.glob("*.json"))
    code, out, _ = run(["solve", "--inst", *reversed(files), "--jobs", "2"], capsys)
    assert code == 0
    ids = [r["instance_id"] for r in csv.DictReader(io.StringIO(out))]
    assert ids == sorted(ids) and len(ids) == 3


def test_solve_infeasible_exit_code(tmp_path, capsys):
    from vmcp.model import Extensions
    inst = make_instance([[1]], [[10]], [[5]], [1.0], [[1.0]]).with_extensions(
        Extensions((9,), 5, (20,), (frozenset(),)))
    path = tmp_path / "bad.json"
    inst.save(path)
    assert run(["solve", "--inst", str(path)], capsys)[0] == 3


def test_solve_unreadable(tmp_path, capsys):
    code, _, err = run(["solve", "--inst", str(tmp_path / "missing.json")], capsys)
    assert code == 64 and "cannot read" in err


def test_compare(tiny_file, capsys):
    code, out, _ = run(["compare", "--inst", str(tiny_file), "--stats-only"], capsys)
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert [r["formulation"] for r in rows] == ["proposed", "speitkamp", "mazumdar"]
    assert "objective" not in rows[0]
    code, out, _ = run(["compare", "--inst", str(tiny_file), "--formulations", "proposed,mazumdar"], capsys)
    rows = list(csv.DictReader(io.StringIO(out)))
    assert abs(float(rows[0]["objective"]) - float(rows[1]["objective"])) <= 1e-6 * float(rows[0]["objective"])
    assert run(["compare", "--inst", str(tiny_file), "--formulations", "nope"], capsys)[0] == 64


def test_profile(tiny_file, tmp_path, capsys):
    runs = tmp_path / "runs.csv"
    for algo in ("cns", "bb"):
        run(["solve", "--algo", algo, "--inst", str(tiny_file), "--out", str(runs)], capsys)
    code, out, _ = run(["profile", "--runs", str(runs)], capsys)
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert {r["algorithm"] for r in rows} == {"cns", "bb"}
    assert all(float(r["percent_solved"]) in (0.0, 100.0) for r in rows)
    empty = tmp_path / "empty.csv"
    empty.write_text(",".join(cli.RunRecord.header()) + "\n")
    assert run(["profile", "--runs", str(empty)], capsys)[0] == 64


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "vmcp.cli", "gen", "--servers", "2", "--alpha", "0.2",
                           "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0
    proc = subprocess.run([sys.executable, "-m", "vmcp.cli"], capture_output=True, text=True)
    assert proc.returncode == 64
