import json

import numpy as np
import pytest

from kinetic_hj.cli import EXIT_CONFIG, EXIT_OK, EXIT_SOLVER, main
from kinetic_hj.config import load, parse_text
from kinetic_hj.errors import ConfigError
from kinetic_hj.experiment import run_experiment, run_sweep
from kinetic_hj.presets import PRESETS, preset, preset_text

SMALL = """
[experiment]
name = small
solver = kinetic
seed = 7

[domain]
n_cells = 100
periodic = true

[speed]
kind = dirac
speed = 1

[kernel]
mu = 100
radius = 0.05
sensing = adhesion

[boundary]
kind = periodic

[initial]
kind = perturbed
value = 1
amplitude = 0.01

[time]
t_final = 0.5
n_outputs = 5
"""


def write(tmp_path, text, name="cfg.ini"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_unknown_key_names_field():
    with pytest.raises(ConfigError, match="domain.n_cellz"):
        parse_text(SMALL.replace("n_cells", "n_cellz"))
    with pytest.raises(ConfigError, match=r"\[bogus\]"):
        parse_text(SMALL + "\n[bogus]\nx = 1\n")
    with pytest.raises(ConfigError, match="kernel.mu"):
        parse_text(SMALL.replace("mu = 100", "mu = -1"))
    with pytest.raises(ConfigError, match="sweep.kernel.nope"):
        parse_text(SMALL + "\n[sweep]\nkernel.nope = 1, 2\n")


def test_bad_values_rejected():
    with pytest.raises(ConfigError, match="boundary.alpha"):
        parse_text(SMALL.replace("kind = periodic", "kind = periodic\nalpha = 2"))
    with pytest.raises(ConfigError, match="kernel"):
        parse_text(SMALL.replace("sensing = adhesion", "sensing = comparative\nalpha = 1\nbeta = 3"))
    with pytest.raises(ConfigError):
        load("/nonexistent/file.ini")


def test_stability_ratio_sets_radius():
    cfg = parse_text(SMALL.replace("radius = 0.05", "stability_ratio = 0.5"))
    assert cfg.radius() == pytest.approx(1.0 / (100 * 0.5))


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_presets_roundtrip(name):
    cfg = preset(name)
    again = parse_text(cfg.to_ini())
    assert again.resolved() == cfg.resolved()
    assert again.sweep == cfg.sweep and again.sweep_mode == cfg.sweep_mode
    assert len(cfg.expand()) >= 1


def test_fig1_preset_parameters():
    cfg = preset("fig1")
    points = cfg.expand()
    assert len(points) == 3
    first = points[0]
    assert first.domain().dx == pytest.approx(1e-3)
    assert first.mu == 1.0
    assert first.speed().max_speed == pytest.approx(5e-5)
    assert first.radius() == pytest.approx(0.01)
    assert points[2].radius() == pytest.approx(1e-7)


def test_cli_dump(capsys):
    assert main(["preset", "fig2", "--dump"]) == EXIT_OK
    assert capsys.readouterr().out == preset_text("fig2")


def test_cli_config_error_exit(tmp_path, capsys):
    path = write(tmp_path, SMALL.replace("n_cells", "n_cellz"))
    assert main(["run", str(path), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert "domain.n_cellz" in capsys.readouterr().err


def test_cli_solver_error_exit(tmp_path, capsys):
    text = SMALL.replace("sensing = adhesion", "sensing = linear")
    path = write(tmp_path, text)
    assert main(["run", str(path), "--out", str(tmp_path / "o")]) in (EXIT_CONFIG, EXIT_SOLVER)
    hj = write(tmp_path, SMALL.replace("radius = 0.05", "radius = 0.005")
               + "\n[hj]\ninitial_phase = random\nt_final = 0.1\n", "hj.ini")
    # a stable ratio has no saw-tooth slope, which the hj summary still handles
    assert main(["hj", str(hj), "--out", str(tmp_path / "h")]) == EXIT_OK


def test_run_writes_manifest_last(tmp_path, capsys):
    path = write(tmp_path, SMALL)
    out = tmp_path / "run"
    assert main(["run", str(path), "--out", str(out)]) == EXIT_OK
    result = json.loads(capsys.readouterr().out)
    assert "mass_drift" in result
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["status"] == "ok"
    assert manifest["config"]["experiment"]["seed"] == 7
    assert manifest["derived"]["stability_ratio"] == pytest.approx(0.2)
    assert manifest["derived"]["sawtooth_slope"] == pytest.approx(99.9909121715, rel=1e-9)
    on_disk = {p.name for p in out.iterdir()} - {"manifest.json"}
    assert on_disk == set(manifest["files"])
    header = (out / "rho.csv").read_text().splitlines()[0]
    assert header == "t,x,rho"
    lines = (out / "rho.csv").read_text().splitlines()
    assert manifest["files"]["rho.csv"]["rows"] == len(lines) - 1
    assert (len(lines) - 1) % 100 == 0


def test_determinism(tmp_path):
    cfg = parse_text(SMALL)
    run_experiment(cfg, tmp_path / "a")
    run_experiment(cfg, tmp_path / "b")
    assert (tmp_path / "a" / "rho.csv").read_bytes() == (tmp_path / "b" / "rho.csv").read_bytes()
    run_experiment(parse_text(SMALL.replace("seed = 7", "seed = 8")), tmp_path / "c")
    assert (tmp_path / "a" / "rho.csv").read_bytes() != (tmp_path / "c" / "rho.csv").read_bytes()


def test_seed_flag_overrides(tmp_path, capsys):
    path = write(tmp_path, SMALL)
    assert main(["run", str(path), "--seed", "8", "--out", str(tmp_path / "s")]) == EXIT_OK
    manifest = json.loads((tmp_path / "s" / "manifest.json").read_text())
    assert manifest["config"]["experiment"]["seed"] == 8


def test_empty_sweep_is_single_run(tmp_path):
    cfg = parse_text(SMALL)
    rows = run_sweep(cfg, tmp_path / "sw")
    single = run_experiment(cfg, tmp_path / "one")
    assert len(rows) == 1
    assert (tmp_path / "sw" / "rho.csv").read_bytes() == (tmp_path / "one" / "rho.csv").read_bytes()
    assert rows[0]["mass_drift"] == single["mass_drift"]


def test_sweep_summary(tmp_path, capsys):
    path = write(tmp_path, SMALL + "\n[sweep]\nkernel.radius = 0.05, 0.005\n")
    out = tmp_path / "sw"
    assert main(["sweep", str(path), "--out", str(out), "--threads", "2"]) == EXIT_OK
    lines = (out / "summary.csv").read_text().splitlines()
    assert lines[0].startswith("index,kernel.radius,status")
    assert len(lines) == 3
    manifest = json.loads((out / "manifest.json").read_text())
    assert set(manifest["files"]) == {"summary.csv", "run_000/", "run_001/"}
    for sub in ("run_000", "run_001"):
        assert (out / sub / "manifest.json").exists()


def test_sweep_keeps_going_after_failure(tmp_path):
    # signal-driven sensing without a signal fails when the run starts
    text = SMALL + "\n[sweep]\nkernel.sensing = adhesion, linear\n"
    rows = run_sweep(parse_text(text), tmp_path / "sw")
    assert [r["status"] for r in rows] == ["ok", "error"]


def test_hamiltonian_subcommand(tmp_path, capsys):
    out = tmp_path / "ham"
    assert main(["preset", "hamiltonian-H", "--out", str(out)]) == EXIT_OK
    result = json.loads(capsys.readouterr().out)
    assert result["hessian_at_zero"] == pytest.approx(-0.08, abs=1e-4)
    assert result["within_bounds"] is True
    data = np.loadtxt(out / "hamiltonian.csv", delimiter=",", skiprows=1)
    assert data.shape == (401, 3)
    assert (out / "hamiltonian.csv").read_text().startswith("x,p,H\n")


def test_macro_subcommand(tmp_path, capsys):
    text = """
[experiment]
name = ks
[domain]
n_cells = 100
[kernel]
radius = 0.5
[signal]
kind = gaussian
center = 0.6
sigma = 0.1
[macro]
model = keller_segel
[time]
t_final = 0.05
n_outputs = 5
"""
    path = write(tmp_path, text)
    assert main(["macro", str(path), "--out", str(tmp_path / "m")]) == EXIT_OK
    result = json.loads(capsys.readouterr().out)
    assert result["mass_drift"] < 1e-12


def test_analyze_subcommand(tmp_path, capsys):
    path = write(tmp_path, SMALL)
    out = tmp_path / "run"
    assert main(["run", str(path), "--out", str(out)]) == EXIT_OK
    capsys.readouterr()
    assert main(["analyze", str(out)]) == EXIT_OK
    result = json.loads(capsys.readouterr().out)
    assert "n_peaks" in result and "phase" in result
    manifest = json.loads((out / "manifest.json").read_text())
    assert "analysis.json" in manifest["files"]
    assert main(["analyze", str(tmp_path)]) == EXIT_CONFIG


def test_inline_comments_ignored():
    cfg = parse_text(SMALL.replace("mu = 100", "mu = 100   # tumbling rate"))
    assert cfg.mu == 100.0
