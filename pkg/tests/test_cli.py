import json
import subprocess
import sys

import pytest

from wfseedbank.cli import ExperimentSpec, CliError, main
from wfseedbank.io import svg_lines, write_atomic
from wfseedbank.model import ModelParams

MUT = ["--u1", "0.5", "--u2", "0.5", "--u1p", "0.5", "--u2p", "0.5"]
CASES = {
    "simulate": MUT + ["--t-max", "0.05", "--svg"],
    "simulate-sdde": MUT + ["--t-max", "0.2", "--svg"],
    "dual": MUT + ["--n", "3", "--m", "1"],
    "moments": MUT + ["--level", "3"],
    "finite-moments": MUT + ["--t", "0.7", "--x", "0.2", "--y", "0.9"],
    "duality-check": MUT + ["--n-paths", "300", "--times", "0.1", "--dt", "1e-2"],
    "boundary": ["--u2", "0.6", "--x", "0.05", "--y", "0.05", "--n-paths", "200", "--dt-sequence", "1e-2", "5e-3",
                 "--t-max", "0.5"],
    "classify": ["--u2", "0.6", "--empirical", "--n-paths", "100", "--dt-sequence", "1e-2", "--t-max", "0.2"],
    "reversibility": MUT,
    "atoms": MUT + ["--t", "0.5", "--dt", "1e-2", "--n-paths", "300"],
}


def _files(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())}


@pytest.mark.parametrize("command", sorted(CASES))
def test_runs_are_byte_identical(command, tmp_path, capsys):
    args = [command, "--seed", "17", *CASES[command]]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b"), "--workers", "3"]) == 0
    assert main(["replay", str(tmp_path / "a" / "spec.json"), "--out", str(tmp_path / "c")]) == 0
    a, b, c = (_files(tmp_path / k) for k in "abc")
    assert a == b == c
    assert "spec.json" in a and len(a) >= 2


@pytest.mark.parametrize("command", sorted(CASES))
def test_outputs_embed_spec(command, tmp_path):
    assert main([command, "--seed", "5", *CASES[command], "--out", str(tmp_path)]) == 0
    spec = json.loads((tmp_path / "spec.json").read_text(encoding="utf-8"))
    assert spec["seed"] == 5 and spec["command"] == command
    for f in tmp_path.iterdir():
        text = f.read_text(encoding="utf-8")
        if f.suffix == ".csv":
            first = text.splitlines()[0]
            assert first.startswith("# spec ")
            assert json.loads(first[len("# spec "):]) == spec
        elif f.suffix == ".json" and f.name != "spec.json":
            assert json.loads(text)["spec"] == spec


def test_duality_table_columns(tmp_path):
    assert main(["duality-check", "--seed", "1", *CASES["duality-check"], "--out", str(tmp_path)]) == 0
    rows = [r for r in (tmp_path / "duality.csv").read_text().splitlines() if not r.startswith("#")]
    assert rows[0] == "n,m,t,forward,std_error,dual,z"
    assert len(rows) == 1 + 6


def test_config_then_flags(tmp_path):
    cfg = tmp_path / "p.toml"
    cfg.write_text("u1 = 0.25\nu2 = 0.75\nc = 2.0\n")
    out = tmp_path / "o"
    assert main(["reversibility", "--seed", "0", "--config", str(cfg), "--u2", "0.5", "--out", str(out)]) == 0
    params = json.loads((out / "spec.json").read_text())["params"]
    assert params["u1"] == 0.25 and params["u2"] == 0.5 and params["c"] == 2.0


def test_seed_bank_size_flag(tmp_path):
    assert main(["classify", "--seed", "0", "--c", "0.5", "--K", "4", "--out", str(tmp_path)]) == 0
    assert json.loads((tmp_path / "spec.json").read_text())["params"]["cp"] == 2.0


@pytest.mark.parametrize("argv", [
    ["simulate", "--out", "x"],
    ["simulate", "--seed", "-3", "--out", "x"],
    ["simulate", "--seed", "1", "--dt", "0", "--out", "x"],
    ["simulate", "--seed", "1", "--c", "0", "--out", "x"],
    ["moments", "--seed", "1", "--out", "x"],
    ["nonsense", "--seed", "1"],
    ["classify", "--seed", "1", "--cp", "1", "--K", "2", "--out", "x"],
])
def test_errors_are_one_json_line(argv, tmp_path, capsys, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(argv) == 2
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1
    rec = json.loads(err[0])
    assert set(rec) == {"error", "message"}
    assert not (tmp_path / "x").exists()


def test_console_script_exit_status(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "wfseedbank.cli", "dual", "--out", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 2
    assert json.loads(proc.stderr)["error"] == "CliError"


def test_spec_validation():
    with pytest.raises(CliError):
        ExperimentSpec("simulate", ModelParams(), seed=1, controls={"n_paths": 0})
    with pytest.raises(CliError):
        ExperimentSpec("simulate", ModelParams(), seed=None)


def test_atomic_write_leaves_no_partial_file(tmp_path):
    target = tmp_path / "f.csv"
    target.write_text("old")

    def boom(fh):
        fh.write("half")
        raise RuntimeError("disk on fire")

    with pytest.raises(RuntimeError):
        write_atomic(target, boom)
    assert target.read_text() == "old"
    assert [p.name for p in tmp_path.iterdir()] == ["f.csv"]


def test_svg_renderer():
    svg = svg_lines([0.0, 0.5, 1.0], {"x": [0.1, 0.5, 0.9], "y": [0.9, 0.5, 0.1]})
    assert svg.startswith("<svg") and svg.count("<polyline") == 2
