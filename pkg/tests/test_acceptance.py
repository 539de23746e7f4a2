"""Acceptance criteria, one test each; results are echoed in the terminal summary."""

import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np
import pytest
from scipy.optimize import brentq

from kinetic_hj.concentration_analysis import boundary_drift_check
from kinetic_hj.config import parse_text
from kinetic_hj.effective_hamiltonian import (AdhesionHamiltonian, LinearHamiltonian,
                                              commuting_limit_gaps)
from kinetic_hj.experiment import run_experiment, run_sweep
from kinetic_hj.hj_eikonal import tabulate_adhesion, tabulate_linear
from kinetic_hj.kinetic_solver import (BoundarySpec, InitialCondition, KineticConfig,
                                       run_kinetic, stationary_distribution)
from kinetic_hj.presets import preset
from kinetic_hj.signals_kernels import (Domain1D, KernelSpec, SpeedDistribution, build_kernel,
                                        kernel_moments, limit_kernel)

# independent reference values, computed once and frozen
H_AT_10 = -3.762754810218307
SAWTOOTH_SLOPE = 99.99091217152304
HESSIAN_AT_ZERO = -0.08


@pytest.fixture
def criterion(request):
    lines = request.config.acceptance_lines

    @contextmanager
    def record(number, title, budget=None):
        start = time.perf_counter()
        try:
            yield
            elapsed = time.perf_counter() - start
            if budget is not None and elapsed > budget:
                raise AssertionError(f"runtime {elapsed:.1f}s over budget {budget:.0f}s")
        except BaseException as exc:
            elapsed = time.perf_counter() - start
            first = (str(exc).strip().splitlines() or [type(exc).__name__])[0]
            lines.append(f"FAIL criterion {number}: {title} ({elapsed:.1f}s) {first[:120]}")
            raise
        lines.append(f"PASS criterion {number}: {title} ({elapsed:.1f}s)")

    return record


_RUNS: dict = {}


def preset_runs(name, tmp_root):
    """Run a preset sweep once per session and return its rows with their directories."""
    if name not in _RUNS:
        out = Path(tmp_root) / name
        rows = run_sweep(preset(name), out, threads=1)
        for row in rows:
            row["dir"] = out / f"run_{row['index']:03d}"
        _RUNS[name] = rows
    return _RUNS[name]


@pytest.fixture(scope="session")
def runs_root(tmp_path_factory):
    return tmp_path_factory.mktemp("acceptance")


def final_frame(run_dir):
    data = np.loadtxt(Path(run_dir) / "rho.csv", delimiter=",", skiprows=1)
    last = data[data[:, 0] == data[-1, 0]]
    return last[:, 1], last[:, 2], data[:, 2]


def closed_adhesion(p, speed, mu, radius):
    num = speed**2 * p**2 - mu * speed * p * np.tanh(radius * p)
    return 2.0 * num / (mu + np.sqrt(mu**2 + 4.0 * num))


def fig1_setup():
    cfg = preset("fig1").expand()[0]
    return cfg.kernel_spec(), cfg.signal(), cfg.domain(), cfg.mu


def test_hamiltonian_oracle(criterion):
    with criterion(1, "bisection H matches the closed form on 401 points", budget=1.0):
        ham = AdhesionHamiltonian(SpeedDistribution.dirac(1.0), 0.05, 100.0)
        ps = np.linspace(-200.0, 200.0, 401)
        values = ham.solve_many(ps, check=False)
        assert np.max(np.abs(values - closed_adhesion(ps, 1.0, 100.0, 0.05))) < 1e-8
        assert abs(ham.solve(10.0) - H_AT_10) < 1e-8
        assert round(ham.solve(10.0), 4) == -3.7628


def test_derivative_identities(criterion):
    with criterion(2, "gradient and Hessian at p=0 match kernel moments", budget=5.0):
        spec, signal, dom, mu = fig1_setup()
        positions = dom.centers[np.linspace(0, dom.n_cells - 1, 101).astype(int)]
        for x in positions:
            kernel = limit_kernel(spec, signal, x, dom, "nonlocal_hyp").leading
            mom = kernel_moments(kernel)
            ham = LinearHamiltonian(kernel, mu, spec.speed)
            assert abs(ham.grad(0.0)[0] - mom.mean[0]) < 1e-6
            assert abs(ham.hessian(0.0)[0, 0] - 2.0 * mom.covariance[0, 0]) < 1e-4
        adhesion = AdhesionHamiltonian(SpeedDistribution.dirac(1.0), 0.05, 100.0)
        assert abs(adhesion.hessian(0.0)[0, 0] - HESSIAN_AT_ZERO) < 1e-4


def test_stability_boundary(criterion, runs_root):
    with criterion(3, "patterns form exactly below V/(mu R) = 1", budget=300.0):
        rows = preset_runs("stability", runs_root)
        assert [r["status"] for r in rows] == ["ok"] * 5
        ratios = [float(r["params"]["kernel.stability_ratio"]) for r in rows]
        assert ratios == [0.2, 0.5, 0.9, 1.1, 2.0]
        assert [r["pattern_flag"] for r in rows] == [1, 1, 1, 0, 0]
        adh = run_experiment(preset("adh").expand()[0], runs_root / "adh")
        assert adh["pattern_flag"] == 1 and adh["n_peaks"] > 1


def test_sawtooth_slope(criterion, runs_root):
    with criterion(4, "saw-tooth slope mode within 5% of the nonzero root of H", budget=60.0):
        root = brentq(lambda p: p - 100.0 * np.tanh(0.05 * p), 1.0, 200.0, xtol=1e-13)
        assert abs(root - SAWTOOTH_SLOPE) < 1e-9
        summary = run_experiment(preset("sawtooth"), runs_root / "sawtooth")
        assert abs(summary["slope_mode"] - SAWTOOTH_SLOPE) / SAWTOOTH_SLOPE < 0.05


def test_fig1_single_peak(criterion, runs_root):
    with criterion(5, "fig1 peak ignores the start; localized variant stays flat", budget=120.0):
        rows = preset_runs("fig1", runs_root)
        assert all(r["status"] == "ok" for r in rows)
        dx = preset("fig1").domain().dx
        constant, shifted, localized = rows
        assert constant["n_peaks"] == 1 and shifted["n_peaks"] == 1
        assert abs(constant["peak_locations"][0] - shifted["peak_locations"][0]) <= 2 * dx
        _, rho, _ = final_frame(localized["dir"])
        assert np.max(np.abs(rho / rho.mean() - 1.0)) < 0.01


def test_fig2_fig3_peak_counts(criterion, runs_root):
    with criterion(6, "fig2 counts {1,1,2}; fig3 gives 2 peaks and 1 asymmetric peak",
                   budget=180.0):
        fig2 = preset_runs("fig2", runs_root)
        assert [r["n_peaks"] for r in fig2] == [1, 1, 2]
        fig3 = preset_runs("fig3", runs_root)
        far, near = fig3
        assert far["n_peaks"] == 2
        assert near["n_peaks"] == 1
        # the spike is a few cells wide, so the asymmetry shows in where it sits:
        # off the midpoint of the two maxima, while equal widths put it on it
        dx = preset("fig3").domain().dx
        assert abs(near["peak_locations"][0] - 0.5) > 2 * dx
        control = parse_text(preset("fig3").expand()[1].to_ini().replace("sigma = 0.06", "sigma = 0.03"))
        even = run_experiment(control, runs_root / "fig3_even")
        assert even["n_peaks"] == 1
        assert abs(even["peak_locations"][0] - 0.5) <= dx


def _entropy_run():
    dom = Domain1D(0.0, 1.0, 200)
    spec = KernelSpec(0.01, SpeedDistribution.uniform(1.0, 4))
    signal = preset("fig1").signal()
    cfg = KineticConfig(dom, spec, 1.0, InitialCondition("gaussian", 1.0, 0.3, 0.1, background=0.1),
                        signal, BoundarySpec("maxwellian", 0.0), t_final=2.0, n_outputs=40,
                        dt=0.2 * dom.dx)
    return run_kinetic(cfg, reference=stationary_distribution(cfg))


def test_conservation_and_positivity(criterion, runs_root):
    with criterion(7, "mass drift < 1e-8, nonnegative densities, entropy decay"):
        for name in ("stability", "fig1", "fig2", "fig3"):
            for row in preset_runs(name, runs_root):
                assert row["mass_drift"] < 1e-8, (name, row["index"])
                assert row["min_f"] >= 0.0
                _, _, every = final_frame(row["dir"])
                assert every.min() >= 0.0
        traj = _entropy_run()
        assert traj.mass_drift < 1e-8 and traj.min_f >= 0.0
        assert np.all(np.diff(traj.entropy) <= 1e-14)
        assert traj.entropy[-1] < traj.entropy[0]


def test_hamiltonian_bounds_and_convexity(criterion):
    with criterion(8, "H within +-U|p| on tables, convex linear H, residual < 1e-10"):
        spec, signal, dom, mu = fig1_setup()
        table = tabulate_linear(spec, signal, dom, mu)
        bound = spec.speed.max_speed * np.abs(table.p_nodes)
        nonzero = bound > 0
        assert np.all(np.isfinite(table.table))
        assert np.all(np.abs(table.table[:, nonzero]) < bound[nonzero])
        assert np.all(table.table[:, ~nonzero] == 0.0)

        unit = SpeedDistribution.dirac(1.0)
        adh = tabulate_adhesion(unit, 0.05, 100.0)
        adh_bound = np.abs(adh.p_nodes)
        assert np.all(np.abs(adh.table[0, adh_bound > 0]) < adh_bound[adh_bound > 0])
        adh_ham = AdhesionHamiltonian(unit, 0.05, 100.0)
        assert max(abs(adh_ham.residual(p, h)) for p, h in zip(adh.p_nodes, adh.table[0])) < 1e-10

        checked = 0
        unit_spec = KernelSpec(spec.radius, unit)
        for x in dom.centers[::50]:
            for ham in (LinearHamiltonian.from_spec(spec, signal, x, dom, mu),
                        LinearHamiltonian(build_kernel(unit_spec, signal, x, dom), mu, unit)):
                ps = np.linspace(-1.0, 1.0, 41) * (2.0 * mu / ham.max_speed)
                values = ham.solve_many(ps)
                for p, h in zip(ps, values):
                    assert abs(ham.residual(p, h)) < 1e-10
                for p in ps[::4]:
                    if ham.check_dimensionality(p):
                        assert ham.hessian(p)[0, 0] > 0
                        checked += 1
        assert checked > 0


def test_commuting_limit(criterion):
    with criterion(9, "H_nu approaches the quadratic Hamiltonian as nu -> 0", budget=10.0):
        spec, signal, dom, _ = fig1_setup()
        ps = np.linspace(-0.1, 0.1, 21)
        for kernel_spec in (spec, KernelSpec(spec.radius, SpeedDistribution.dirac(1.0))):
            for x in (0.5, 0.9, 0.99):
                gaps = commuting_limit_gaps(build_kernel(kernel_spec, signal, x, dom),
                                            [1.0, 0.1, 0.01], ps)
                assert np.all(np.diff(gaps) < 0), gaps


def test_boundary_drift(criterion):
    with criterion(10, "wall drift enters for alpha=0 and vanishes for alpha=1", budget=1.0):
        spec, signal, dom, _ = fig1_setup()
        diffuse = boundary_drift_check(spec, signal, dom, 0.0)
        assert diffuse.passed and all(u < 0 for u in diffuse.normal_drift)
        mirror = boundary_drift_check(spec, signal, dom, 1.0)
        assert mirror.passed and all(abs(u) < 1e-12 for u in mirror.drift)
