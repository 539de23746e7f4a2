"""Run configured experiments, write CSV data and a JSON manifest per run."""

from __future__ import annotations

import copy
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .concentration_analysis import (find_peaks, hopf_cole, sawtooth_extract, singular_points)
from .config import ExperimentConfig, from_mapping, parse_text
from .effective_hamiltonian import (AdhesionHamiltonian, LinearHamiltonian, sawtooth_slope,
                                    stability_report)
from .errors import ConfigError, KineticHJError, SingularHamiltonian
from .hj_eikonal import (PhaseField, QuadraticHamiltonian, adhesion_closed_form, local_minima,
                         run_hj, tabulate_adhesion, tabulate_linear)
from .kinetic_solver import InitialCondition, run_kinetic
from .macroscopic import (MacroConfig, fields_from_kernel, first_order_fields,
                          keller_segel_fields, nonlinear_fields, run_macro)
from .signals_kernels import signal_variation_length

logger = logging.getLogger(__name__)

PATTERN_FACTOR = 10.0
FLOAT_FMT = "%.17g"


# ---------------------------------------------------------------------------
# output helpers


def write_csv(path: Path, header: str, columns) -> int:
    data = np.column_stack([np.asarray(c, dtype=float).ravel() for c in columns])
    np.savetxt(path, data, delimiter=",", header=header, comments="", fmt=FLOAT_FMT)
    return int(data.shape[0])


def _series_columns(times: np.ndarray, x: np.ndarray, frames: np.ndarray):
    t = np.repeat(times, x.size)
    xs = np.tile(x, times.size)
    return t, xs, frames.reshape(-1)


def jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return str(obj)
    return obj


def write_manifest(out: Path, cfg: Optional[ExperimentConfig], files: dict, derived: dict,
                   summary: dict, wall: float, status: str = "ok", error: Optional[str] = None) -> None:
    """Write ``manifest.json`` last; it lists every other file in ``out``."""
    manifest = {
        "status": status,
        "code_version": __version__,
        "config": cfg.resolved() if cfg is not None else None,
        "derived": derived,
        "summary": summary,
        "wall_clock_s": wall,
        "files": {name: {"rows": rows} for name, rows in sorted(files.items())},
    }
    if error is not None:
        manifest["error"] = error
    present = {p.name for p in out.iterdir() if p.is_file() and p.name != "manifest.json"}
    present |= {p.name + "/" for p in out.iterdir() if p.is_dir()}
    orphans = present - set(files)
    if orphans:
        manifest["files"].update({name: {"rows": None} for name in sorted(orphans)})
    (out / "manifest.json").write_text(json.dumps(jsonable(manifest), indent=2, sort_keys=True) + "\n")


def derived_quantities(cfg: ExperimentConfig) -> dict:
    out: dict = {}
    dom = cfg.domain()
    speed = cfg.speed()
    spec = cfg.kernel_spec()
    out["radius"] = spec.radius
    out["dx"] = dom.dx
    out["knudsen"] = speed.mean_speed() / (cfg.mu * dom.length)
    signal = cfg.signal()
    if signal is not None and spec.sensing != "adhesion":
        length = signal_variation_length(signal, dom)
        out["signal_length"] = length
        # the same length under the convention that measures |S'| / (2S)
        out["signal_length_half_rate"] = 2.0 * length
        out["radius_over_signal_length"] = spec.radius / length if length > 0 else None
    if spec.sensing == "adhesion" and spec.radius > 0:
        rep = stability_report(speed, cfg.mu, spec.radius)
        out["stability_ratio"] = rep.ratio
        out["classification"] = rep.classification
        out["hessian_at_zero"] = float(rep.hessian[0, 0])
        if rep.sawtooth_slope is not None:
            out["sawtooth_slope"] = rep.sawtooth_slope
    return out


def _relative_std(rho: np.ndarray) -> float:
    return float(rho.std() / rho.mean())


def _peak_summary(rho: np.ndarray, dom) -> dict:
    peaks = find_peaks(rho, dom)
    return {"n_peaks": len(peaks), "peak_locations": peaks.locations,
            "peak_heights": peaks.heights, "peak_masses": peaks.weights}


# ---------------------------------------------------------------------------
# solvers


def _run_kinetic(cfg: ExperimentConfig, out: Path) -> tuple[dict, dict]:
    kcfg = cfg.kinetic_config()
    traj = run_kinetic(kcfg)
    dom = kcfg.domain
    rows = write_csv(out / "rho.csv", "t,x,rho", _series_columns(traj.times, dom.centers, traj.rho))
    s0, s1 = _relative_std(traj.rho[0]), _relative_std(traj.rho[-1])
    # a flat start has no variance to amplify: the growth ratio is undefined
    flat = s0 <= 1e-12
    ratio = float("nan") if flat else s1 / s0
    summary = {"stop_reason": traj.stop_reason, "t_end": traj.final.t, "steps": traj.steps,
               "dt": traj.dt, "mass_drift": traj.mass_drift, "min_f": traj.min_f,
               "std_initial": s0, "std_final": s1, "std_ratio": ratio,
               "pattern_flag": int(not flat and ratio > PATTERN_FACTOR)}
    summary.update(_peak_summary(traj.rho[-1], dom))
    return {"rho.csv": rows}, summary


def _macro_fields(cfg: ExperimentConfig):
    model = cfg["macro"]["model"]
    spec, signal, dom = cfg.kernel_spec(), cfg.signal(), cfg.domain()
    if model == "nonlinear":
        return nonlinear_fields(spec, dom)
    if signal is None:
        raise ConfigError("signal.kind: the macro model needs a signal")
    if model == "keller_segel":
        return keller_segel_fields(signal, spec.radius, dom)
    if model == "diffusive_local":
        return first_order_fields(spec, signal, dom)
    return fields_from_kernel(spec, signal, dom)


def _run_macro(cfg: ExperimentConfig, out: Path) -> tuple[dict, dict]:
    t_final = cfg["time"]["t_final"]
    if t_final is None:
        raise ConfigError("time.t_final: required for macro runs")
    dom = cfg.domain()
    rho0 = cfg.initial().density(dom, np.random.default_rng(cfg["experiment"]["seed"]))
    mcfg = MacroConfig(dom, cfg["macro"]["model"], rho0, t_final, eps=cfg["macro"]["eps"],
                       fields=_macro_fields(cfg), correction=cfg["macro"]["correction"],
                       n_outputs=cfg["time"]["n_outputs"], cfl=cfg["time"]["cfl"])
    run = run_macro(mcfg)
    rows = write_csv(out / "rho.csv", "t,x,rho", _series_columns(run.times, dom.centers, run.rho))
    summary = {"t_end": run.final.t, "steps": run.steps, "dt": run.dt, "mass_drift": run.mass_drift,
               "min_rho": float(run.rho.min())}
    summary.update(_peak_summary(run.rho[-1], dom))
    return {"rho.csv": rows}, summary


def initial_phase(cfg: ExperimentConfig) -> np.ndarray:
    dom = cfg.domain()
    h = cfg["hj"]
    rng = np.random.default_rng(cfg["experiment"]["seed"])
    if h["initial_phase"] == "kinetic":
        kcfg = cfg.kinetic_config()
        kcfg.t_final = h["warmup"]
        kcfg.n_outputs = 1
        rho = run_kinetic(kcfg).rho[-1]
        return hopf_cole(rho, 1.0, dom).phi
    if h["initial_phase"] == "random":
        pattern = InitialCondition("perturbed", 1.0, amplitude=1.0,
                                   modes=cfg["initial"]["modes"]).density(dom, rng) - 1.0
        return h["phase_amplitude"] * pattern
    return hopf_cole(cfg.initial().density(dom, rng), 1.0, dom).phi


def _hj_hamiltonian(cfg: ExperimentConfig):
    kind = cfg["hj"]["hamiltonian"]
    spec = cfg.kernel_spec()
    if kind == "adhesion":
        if spec.speed.kind != "dirac" or spec.speed.direction_dependent:
            raise ConfigError("hj.hamiltonian: the closed adhesion form needs a single symmetric speed")
        return adhesion_closed_form(spec.speed.speed, cfg.mu, spec.radius)
    if kind == "tabulated_adhesion":
        return tabulate_adhesion(spec.speed, spec.radius, cfg.mu)
    if cfg.signal() is None:
        raise ConfigError("signal.kind: the linear Hamiltonian needs a signal")
    return tabulate_linear(spec, cfg.signal(), cfg.domain(), cfg.mu)


def _phase_summary(phi: np.ndarray, dom, derived: dict) -> dict:
    stats = sawtooth_extract(PhaseField(phi, 0.0, dom))
    summary = {"slope_mode": stats.mode, "slope_fraction_near_mode": stats.fraction_near_mode}
    target = derived.get("sawtooth_slope")
    if target:
        summary["slope_mode_relative_error"] = abs(stats.mode - target) / target
    return summary


def _run_hj(cfg: ExperimentConfig, out: Path, derived: dict) -> tuple[dict, dict]:
    dom = cfg.domain()
    h = cfg["hj"]
    phi0 = initial_phase(cfg)
    ham = _hj_hamiltonian(cfg)
    pinned = local_minima(phi0, dom.periodic) if h["constrain_minima"] else None
    run = run_hj(PhaseField(phi0, 0.0, dom), ham, h["t_final"], n_outputs=h["n_outputs"],
                 p_max=h["p_max"], pinned=pinned)
    rows = write_csv(out / "phi.csv", "t,x,phi", _series_columns(run.times, dom.centers, run.phi))
    summary = {"t_end": run.final.t, "steps": run.steps, "dt": run.dt, "lipschitz": run.lam,
               "pinned_cells": int(pinned.sum()) if pinned is not None else 0,
               "min_phi_initial": float(run.minima[0]), "min_phi_final": float(run.minima[-1])}
    summary["initial"] = _phase_summary(phi0, dom, derived)
    summary.update(_phase_summary(run.final.phi, dom, derived))
    return {"phi.csv": rows}, summary


def _run_eikonal(cfg: ExperimentConfig, out: Path) -> tuple[dict, dict]:
    dom = cfg.domain()
    signal = cfg.signal()
    if signal is None:
        raise ConfigError("signal.kind: eikonal runs need a signal")
    fields = fields_from_kernel(cfg.kernel_spec(), signal, dom)
    ham = QuadraticHamiltonian(fields.drift, fields.diffusion)
    phi0 = initial_phase(cfg) if cfg["hj"]["initial_phase"] != "kinetic" else \
        hopf_cole(cfg.initial().density(dom), 1.0, dom).phi
    run = run_hj(PhaseField(phi0, 0.0, dom), ham, cfg["hj"]["t_final"],
                 n_outputs=cfg["hj"]["n_outputs"], p_max=cfg["hj"]["p_max"])
    rows = write_csv(out / "phi.csv", "t,x,phi", _series_columns(run.times, dom.centers, run.phi))
    return {"phi.csv": rows}, {"t_end": run.final.t, "steps": run.steps, "dt": run.dt,
                               "lipschitz": run.lam, "min_phi_final": float(run.minima[-1])}


def _run_hamiltonian(cfg: ExperimentConfig, out: Path) -> tuple[dict, dict]:
    h = cfg["hamiltonian"]
    ps = np.linspace(h["p_min"], h["p_max"], h["n_p"])
    spec = cfg.kernel_spec()
    xs, pcol, hcol = [], [], []
    summary: dict = {}
    if h["model"] == "adhesion":
        ham = AdhesionHamiltonian(spec.speed, spec.radius, cfg.mu)
        values = ham.solve_many(ps, check=False)
        summary["hessian_at_zero"] = float(ham.hessian(0.0)[0, 0])
        if spec.speed.mean_speed() < cfg.mu * spec.radius and spec.speed.kind == "dirac":
            summary["sawtooth_slope"] = sawtooth_slope(spec.speed.mean_speed(), cfg.mu, spec.radius)
        for x in h["positions"]:
            xs.append(np.full(ps.size, x))
            pcol.append(ps)
            hcol.append(values)
    else:
        signal = cfg.signal()
        if signal is None:
            raise ConfigError("signal.kind: the linear Hamiltonian needs a signal")
        dom = cfg.domain()
        failures = 0
        for x in h["positions"]:
            ham = LinearHamiltonian.from_spec(spec, signal, x, dom, cfg.mu)
            vals = np.empty(ps.size)
            for i, p in enumerate(ps):
                try:
                    vals[i] = ham.solve(p)
                except SingularHamiltonian:
                    vals[i] = np.nan
                    failures += 1
            xs.append(np.full(ps.size, x))
            pcol.append(ps)
            hcol.append(vals)
        summary["dimensionality_failures"] = failures
    bound = spec.speed.max_speed * np.abs(np.concatenate(pcol))
    hv = np.concatenate(hcol)
    ok = np.isfinite(hv) & (bound > 0)
    summary["within_bounds"] = bool(np.all(np.abs(hv[ok]) < bound[ok]))
    rows = write_csv(out / "hamiltonian.csv", "x,p,H", [np.concatenate(xs), np.concatenate(pcol), hv])
    return {"hamiltonian.csv": rows}, summary


# ---------------------------------------------------------------------------
# public entry points


def run_experiment(cfg: ExperimentConfig, out_dir) -> dict:
    """Run a single (non-sweep) configuration into ``out_dir``; returns the summary."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    derived = derived_quantities(cfg)
    files: dict = {}
    try:
        if cfg.solver == "kinetic":
            files, summary = _run_kinetic(cfg, out)
        elif cfg.solver == "macro":
            files, summary = _run_macro(cfg, out)
        elif cfg.solver == "hj":
            files, summary = _run_hj(cfg, out, derived)
        elif cfg.solver == "eikonal":
            files, summary = _run_eikonal(cfg, out)
        elif cfg.solver == "hamiltonian":
            files, summary = _run_hamiltonian(cfg, out)
        else:
            source = cfg["analyze"]["source"]
            if not source:
                raise ConfigError("analyze.source: run directory required")
            return analyze_run(source, eps=cfg["analyze"]["eps"])
    except KineticHJError as exc:
        write_manifest(out, cfg, files, derived, {}, time.perf_counter() - start,
                       status="failed", error=f"{type(exc).__name__}: {exc}")
        raise
    write_manifest(out, cfg, files, derived, summary, time.perf_counter() - start)
    return summary


def _sweep_worker(args) -> dict:
    index, ini, out = args
    cfg = parse_text(ini)
    try:
        summary = run_experiment(cfg, out)
        return {"index": index, "status": "ok", **summary}
    except KineticHJError as exc:
        return {"index": index, "status": "error", "error": f"{type(exc).__name__}: {exc}"}


SUMMARY_COLUMNS = ("status", "n_peaks", "peak_locations", "std_ratio", "pattern_flag",
                   "mass_drift", "stop_reason", "t_end", "error")


def run_sweep(cfg: ExperimentConfig, out_dir, threads: int = 1) -> list:
    """Run every sweep point (each in ``run_NNN/``) and write ``summary.csv``."""
    if not cfg.sweep:
        return [{"index": 0, "status": "ok", **run_experiment(cfg, out_dir)}]
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    points = cfg.expand()
    jobs = [(i, p.to_ini(), str(out / f"run_{i:03d}")) for i, p in enumerate(points)]
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(_sweep_worker, jobs))
    else:
        rows = [_sweep_worker(j) for j in jobs]
    axes = list(cfg.sweep)
    for row, point in zip(rows, points):
        row["params"] = cfg.sweep_point(point)
    lines = [",".join(["index"] + axes + list(SUMMARY_COLUMNS))]
    for row in rows:
        cells = [str(row["index"])] + [str(row["params"][a]) for a in axes]
        for col in SUMMARY_COLUMNS:
            v = row.get(col, "")
            if isinstance(v, (np.ndarray, list, tuple)):
                v = ";".join(FLOAT_FMT % q for q in np.asarray(v, dtype=float))
            elif isinstance(v, (float, np.floating)):
                v = FLOAT_FMT % v
            cells.append(str(v).replace(",", ";"))
        lines.append(",".join(cells))
    (out / "summary.csv").write_text("\n".join(lines) + "\n")
    files = {"summary.csv": len(rows)}
    files.update({f"run_{i:03d}/": None for i in range(len(rows))})
    write_manifest(out, cfg, files, derived_quantities(cfg),
                   {"runs": len(rows), "mode": cfg.sweep_mode, "axes": axes,
                    "failed": sum(r["status"] != "ok" for r in rows)},
                   time.perf_counter() - start)
    return rows


def with_seed(cfg: ExperimentConfig, seed: Optional[int]) -> ExperimentConfig:
    if seed is None:
        return cfg
    raw = copy.deepcopy(cfg.raw)
    raw.setdefault("experiment", {})["seed"] = str(seed)
    new = from_mapping(raw)
    new.sweep, new.sweep_mode = cfg.sweep, cfg.sweep_mode
    return new


def with_solver(cfg: ExperimentConfig, solver: str) -> ExperimentConfig:
    raw = copy.deepcopy(cfg.raw)
    raw.setdefault("experiment", {})["solver"] = solver
    new = from_mapping(raw)
    new.sweep, new.sweep_mode = cfg.sweep, cfg.sweep_mode
    return new


def _read_series(path: Path):
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    times = np.unique(data[:, 0])
    last = data[data[:, 0] == times[-1]]
    return times, last[:, 1], last[:, 2]


def analyze_run(run_dir, eps: float = 1.0) -> dict:
    """Peaks, drift zeros and slope statistics of the last frame of a finished run."""
    out = Path(run_dir)
    manifest_path = out / "manifest.json"
    if not manifest_path.exists():
        raise ConfigError(f"{run_dir}: no manifest.json (not a finished run)")
    manifest = json.loads(manifest_path.read_text())
    raw = {s: {k: (", ".join(map(str, v)) if isinstance(v, list) else ("none" if v is None else str(v)))
               for k, v in kv.items()} for s, kv in manifest["config"].items()}
    cfg = from_mapping(raw)
    dom = cfg.domain()
    result: dict = {}
    if (out / "rho.csv").exists():
        _, x, rho = _read_series(out / "rho.csv")
        result.update(_peak_summary(rho, dom))
        result["phase"] = _phase_summary(hopf_cole(rho, eps, dom).phi, dom, manifest.get("derived", {}))
    elif (out / "phi.csv").exists():
        _, x, phi = _read_series(out / "phi.csv")
        result["phase"] = _phase_summary(phi, dom, manifest.get("derived", {}))
    else:
        raise ConfigError(f"{run_dir}: no rho.csv or phi.csv to analyze")
    signal = cfg.signal()
    spec = cfg.kernel_spec()
    if signal is not None and spec.sensing != "adhesion":
        sp = singular_points(fields_from_kernel(spec, signal, dom).drift, dom)
        result["singular_points"] = sp.locations
        result["attracting"] = sp.attracting
    (out / "analysis.json").write_text(json.dumps(jsonable(result), indent=2, sort_keys=True) + "\n")
    manifest["files"]["analysis.json"] = {"rows": None}
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return result


def default_threads() -> int:
    return max(1, min(4, os.cpu_count() or 1))
