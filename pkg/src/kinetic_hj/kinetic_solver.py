"""Finite-volume solver for the 1D kinetic BGK model

    d_t f + v vhat d_x f = mu (rho T - f)

with either a fixed turning kernel (signal driven) or ``T = T[rho]`` rebuilt
from the density (adhesion).  One step is a Strang splitting: half an exact
relaxation, an upwind transport of every ``(vhat, v)`` beam, and another half
relaxation.  Upwinding under ``v dt <= dx`` and the exponential relaxation are
both convex combinations, so ``f`` stays nonnegative; walls exchange exactly
the flux they receive, so mass only moves by round-off.

The distribution is stored with one ghost cell at each end: shape
``(n_cells + 2, 2, n_speed)``, direction index 0 is ``+1``.  Velocity sums use
the speed-quadrature measure of :class:`SpeedDistribution`.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .errors import SchemeFailure, SupportMismatch, TimestepTooLarge
from .signals_kernels import (Domain1D, KernelSpec, SampledSignal, direction_factors,
                              kernel_weights, limit_kernel, uniform_kernel)

logger = logging.getLogger(__name__)

DEFAULT_CFL = 0.9


@dataclass(frozen=True)
class BoundarySpec:
    kind: str = "periodic"            # "periodic" | "maxwellian"
    alpha: float = 0.0                # reflected fraction
    reflection: str = "bounce_back"   # "bounce_back" | "specular" (identical in 1D)

    def __post_init__(self):
        if self.kind not in ("periodic", "maxwellian"):
            raise ValueError(f"unknown boundary kind {self.kind!r}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if self.reflection not in ("bounce_back", "specular"):
            raise ValueError(f"unknown reflection {self.reflection!r}")


@dataclass
class KineticState:
    f: np.ndarray
    t: float
    domain: Domain1D
    speeds: np.ndarray
    measure: np.ndarray
    mu: float

    @property
    def interior(self) -> np.ndarray:
        return self.f[1:-1]

    def copy(self) -> "KineticState":
        return replace(self, f=self.f.copy())


def density(state: KineticState) -> np.ndarray:
    return np.einsum("ids,ds->i", state.interior, state.measure)


def total_mass(state: KineticState) -> float:
    return float(density(state).sum() * state.domain.dx)


def local_equilibrium(state: KineticState, weights: np.ndarray) -> np.ndarray:
    """``rho T`` expressed as node values (same layout as the interior of ``f``)."""
    return density(state)[:, None, None] * weights / state.measure


def relative_entropy(state: KineticState, reference: np.ndarray) -> float:
    """``sum reference * Phi(f / reference)`` with ``Phi(u) = u log u``.

    ``reference`` is either a local equilibrium ``rho T`` or the stationary
    distribution of the scheme; both have node-value layout.
    """
    f = state.interior
    if np.any((reference <= 0) & (f > 0)):
        raise SupportMismatch("f is positive where the reference vanishes")
    with np.errstate(divide="ignore", invalid="ignore"):
        term = np.where(f > 0, f * np.log(f / reference), 0.0)
    return float(np.einsum("ids,ds->", term, state.measure) * state.domain.dx)


def wall_fluxes(state: KineticState) -> tuple[float, float]:
    """Net outward mass flux through the left and right walls (upwind values)."""
    f, flux = state.f, state.speeds * state.measure
    left = np.dot(flux[1], f[1, 1]) - np.dot(flux[0], f[0, 0])
    right = np.dot(flux[0], f[-2, 0]) - np.dot(flux[1], f[-1, 1])
    return float(left), float(right)


def _fill_ghosts(f: np.ndarray, speeds: np.ndarray, measure: np.ndarray, bc: BoundarySpec) -> None:
    if bc.kind == "periodic":
        f[0] = f[-2]
        f[-1] = f[1]
        return
    flux = speeds * measure
    prob = measure / measure.sum(axis=1, keepdims=True)
    # wall law for the entering direction: psi-shaped and carrying unit flux
    maxw_in_plus = prob[0] / measure[0] / np.dot(speeds[0], prob[0])
    maxw_in_minus = prob[1] / measure[1] / np.dot(speeds[1], prob[1])
    out_left = f[1, 1]
    out_right = f[-2, 0]
    f[0, 0] = (bc.alpha * out_left * flux[1] / flux[0]
               + (1.0 - bc.alpha) * maxw_in_plus * np.dot(flux[1], out_left))
    f[-1, 1] = (bc.alpha * out_right * flux[0] / flux[1]
                + (1.0 - bc.alpha) * maxw_in_minus * np.dot(flux[0], out_right))
    f[0, 1] = 0.0
    f[-1, 0] = 0.0


def apply_boundary(state: KineticState, bc: BoundarySpec) -> KineticState:
    """Return a copy whose ghost cells carry the wall inflow for ``bc``."""
    out = state.copy()
    _fill_ghosts(out.f, out.speeds, out.measure, bc)
    return out


def equilibrium_weights(spec: KernelSpec, signal, domain: Domain1D) -> np.ndarray:
    """Turning-kernel weights on every cell for the regime named in ``spec``."""
    xs = domain.centers
    if spec.regime in ("physical", "nonlocal_hyp"):
        return kernel_weights(spec, signal, xs, domain)
    if spec.regime == "local_hyp" and not (spec.sensing == "comparative" and spec.fast_adaptation):
        return np.repeat(uniform_kernel(spec).weights[None], xs.size, axis=0)
    rows = []
    for x in xs:
        lk = limit_kernel(spec, signal, x, domain)
        rows.append(lk.leading.weights + (0.0 if lk.correction is None else lk.correction))
    w = np.array(rows)
    if np.any(w < 0):
        raise SchemeFailure("limit kernel has negative weights on the grid")
    return w


def _adhesion_weights(spec: KernelSpec, rho: np.ndarray, domain: Domain1D, uniform: np.ndarray) -> np.ndarray:
    field_ = SampledSignal.on_grid(domain, rho)
    if spec.regime == "local_hyp":
        return np.broadcast_to(uniform, (domain.n_cells,) + uniform.shape)
    b = direction_factors(spec, field_, domain.centers, domain)
    raw = b[:, :, None] * uniform[None]
    total = raw.sum(axis=(1, 2), keepdims=True)
    empty = total[:, 0, 0] <= 0
    if np.any(empty):
        # no cells within reach: reorientation is isotropic
        raw[empty] = uniform
        total[empty] = 1.0
    return raw / total


class KineticSolver:
    """Precomputes the velocity grid and kernel for repeated stepping."""

    def __init__(self, domain: Domain1D, spec: KernelSpec, mu: float,
                 bc: Optional[BoundarySpec] = None, signal=None, cfl: float = DEFAULT_CFL):
        if spec.dim != 1:
            raise ValueError("the kinetic solver is one-dimensional")
        self.domain = domain
        self.spec = spec
        self.mu = float(mu)
        self.bc = bc or BoundarySpec("periodic" if domain.periodic else "maxwellian")
        if (self.bc.kind == "periodic") != domain.periodic:
            raise ValueError("periodic boundary requires a periodic domain and vice versa")
        self.cfl = cfl
        self.speeds, self.measure, _ = spec.speed.quadrature(2)
        self.nonlinear = spec.sensing == "adhesion"
        self._uniform = uniform_kernel(spec).weights
        self.signal = signal
        self.weights = None if self.nonlinear else equilibrium_weights(spec, signal, domain)
        self.kernel_builds = 0
        self._cache = None

    @property
    def max_dt(self) -> float:
        return self.cfl * self.domain.dx / float(self.speeds.max())

    def kernel_for(self, rho: np.ndarray) -> np.ndarray:
        if not self.nonlinear:
            return self.weights
        self.kernel_builds += 1
        return _adhesion_weights(self.spec, rho, self.domain, self._uniform)

    def state_from_density(self, rho0: np.ndarray, t: float = 0.0) -> KineticState:
        rho0 = np.asarray(rho0, dtype=float)
        if rho0.shape != (self.domain.n_cells,) or np.any(rho0 < 0):
            raise ValueError("initial density must be a nonnegative array on the cells")
        w = self.kernel_for(rho0)
        f = np.zeros((self.domain.n_cells + 2,) + self.speeds.shape)
        f[1:-1] = rho0[:, None, None] * w / self.measure
        self._cache = None
        return KineticState(f, t, self.domain, self.speeds, self.measure, self.mu)

    def _relax(self, f: np.ndarray, dt: float) -> None:
        inner = f[1:-1]
        rho = np.einsum("ids,ds->i", inner, self.measure)
        if self._cache is None:
            self._cache = self.kernel_for(rho)
        eq = rho[:, None, None] * self._cache / self.measure
        decay = np.exp(-self.mu * dt)
        f[1:-1] = eq + (inner - eq) * decay

    def _transport(self, f: np.ndarray, dt: float) -> None:
        _fill_ghosts(f, self.speeds, self.measure, self.bc)
        c = self.speeds * (dt / self.domain.dx)
        plus, minus = f[:, 0].copy(), f[:, 1].copy()
        f[1:-1, 0] = (1.0 - c[0]) * plus[1:-1] + c[0] * plus[:-2]
        f[1:-1, 1] = (1.0 - c[1]) * minus[1:-1] + c[1] * minus[2:]
        self._cache = None

    def step(self, state: KineticState, dt: float, check: bool = True) -> KineticState:
        if dt > self.max_dt * (1.0 + 1e-12):
            raise TimestepTooLarge(f"dt={dt:.6g} exceeds CFL limit {self.max_dt:.6g}")
        f = state.f.copy()
        self._relax(f, 0.5 * dt)
        self._transport(f, dt)
        self._relax(f, 0.5 * dt)
        if check and np.any(f[1:-1] < 0):
            raise SchemeFailure("negative distribution after step")
        return replace(state, f=f, t=state.t + dt)


def step_kinetic(state: KineticState, spec: KernelSpec, signal, dt: float,
                 bc: Optional[BoundarySpec] = None, cfl: float = DEFAULT_CFL) -> KineticState:
    """One splitting step; for repeated stepping build a :class:`KineticSolver` once."""
    return KineticSolver(state.domain, spec, state.mu, bc, signal, cfl).step(state, dt)


# ---------------------------------------------------------------------------
# initial data and runs


@dataclass(frozen=True)
class InitialCondition:
    kind: str = "constant"        # constant | gaussian | bimodal | perturbed
    value: float = 1.0
    center: float = 0.5
    sigma: float = 0.1
    center2: float = 0.5
    sigma2: float = 0.1
    background: float = 0.0
    amplitude: float = 1e-2
    wavenumber: int = 0           # perturbed: single cosine mode if > 0
    modes: int = 16               # perturbed: random-phase modes 1..modes otherwise

    def density(self, domain: Domain1D, rng: Optional[np.random.Generator] = None) -> np.ndarray:
        x = domain.centers
        if self.kind == "constant":
            return np.full(x.size, float(self.value))
        if self.kind == "gaussian":
            return self.background + self.value * np.exp(-(x - self.center) ** 2 / (2 * self.sigma**2))
        if self.kind == "bimodal":
            return self.background + self.value * (np.exp(-(x - self.center) ** 2 / (2 * self.sigma**2))
                                                   + np.exp(-(x - self.center2) ** 2 / (2 * self.sigma2**2)))
        if self.kind == "perturbed":
            phase = 2.0 * np.pi * (x - domain.x_min) / domain.length
            if self.wavenumber > 0:
                pattern = np.cos(self.wavenumber * phase)
            else:
                rng = rng or np.random.default_rng(0)
                shifts = rng.uniform(0.0, 2.0 * np.pi, self.modes)
                pattern = sum(np.cos(k * phase + s) for k, s in zip(range(1, self.modes + 1), shifts))
                pattern /= np.max(np.abs(pattern))
            return self.value * (1.0 + self.amplitude * pattern)
        raise ValueError(f"unknown initial condition {self.kind!r}")


@dataclass
class KineticConfig:
    domain: Domain1D
    spec: KernelSpec
    mu: float
    initial: InitialCondition = field(default_factory=InitialCondition)
    signal: object = None
    bc: Optional[BoundarySpec] = None
    t_final: Optional[float] = None      # None: stop at quasi-stationarity
    t_cap: float = np.inf
    stationary_tol: float = 1e-6
    n_outputs: int = 200
    cfl: float = DEFAULT_CFL
    dt: Optional[float] = None
    seed: int = 0
    keep_final_f: bool = True


@dataclass
class KineticTrajectory:
    times: np.ndarray
    rho: np.ndarray          # (n_out, n_cells)
    mass: np.ndarray
    final: KineticState
    steps: int
    stop_reason: str
    dt: float
    entropy: Optional[np.ndarray] = None
    min_f: float = 0.0

    @property
    def mass_drift(self) -> float:
        return float(np.max(np.abs(self.mass - self.mass[0])) / self.mass[0])


def run_kinetic(cfg: KineticConfig, reference: Optional[np.ndarray] = None,
                callback: Optional[Callable[[KineticState], None]] = None) -> KineticTrajectory:
    """Integrate to ``t_final`` (or to quasi-stationarity) recording ``rho``.

    Output happens every ``max(1, n_steps / n_outputs)`` steps.  Without a final
    time the run stops once the relative L1 change of ``rho`` per unit time
    between two outputs drops below ``stationary_tol``, or at ``t_cap``.
    ``reference`` (node-value layout) switches on relative-entropy monitoring.
    """
    solver = KineticSolver(cfg.domain, cfg.spec, cfg.mu, cfg.bc, cfg.signal, cfg.cfl)
    rng = np.random.default_rng(cfg.seed)
    state = solver.state_from_density(cfg.initial.density(cfg.domain, rng))
    dt = min(cfg.dt or solver.max_dt, solver.max_dt)
    horizon = cfg.t_final if cfg.t_final is not None else cfg.t_cap
    if not np.isfinite(horizon):
        raise ValueError("either t_final or a finite t_cap is required")
    n_steps = int(np.ceil(horizon / dt - 1e-9))
    dt = horizon / n_steps
    every = max(1, n_steps // cfg.n_outputs)

    times, rhos, masses, entropies = [0.0], [density(state)], [total_mass(state)], []
    if reference is not None:
        entropies.append(relative_entropy(state, reference))
    min_f = float(state.interior.min())
    reason = "t_final" if cfg.t_final is not None else "t_cap"
    step = 0
    while step < n_steps:
        state = solver.step(state, dt, check=False)
        step += 1
        if step % every and step != n_steps:
            continue
        low = float(state.interior.min())
        min_f = min(min_f, low)
        if low < 0:
            raise SchemeFailure(f"negative distribution at t={state.t:.6g}")
        rho = density(state)
        if callback is not None:
            callback(state)
        change = np.abs(rho - rhos[-1]).sum() / (np.abs(rhos[-1]).sum() * (state.t - times[-1]))
        times.append(state.t)
        rhos.append(rho)
        masses.append(total_mass(state))
        if reference is not None:
            entropies.append(relative_entropy(state, reference))
        if cfg.t_final is None and change < cfg.stationary_tol:
            reason = "stationary"
            break
    logger.info("kinetic run stopped at t=%.6g after %d steps (%s)", state.t, step, reason)
    return KineticTrajectory(np.array(times), np.array(rhos), np.array(masses), state, step,
                             reason, dt, np.array(entropies) if reference is not None else None, min_f)


def stationary_distribution(cfg: KineticConfig, tol: float = 1e-15, max_steps: int = 2_000_000) -> np.ndarray:
    """Fixed point of the discrete step map (power iteration from the initial data)."""
    solver = KineticSolver(cfg.domain, cfg.spec, cfg.mu, cfg.bc, cfg.signal, cfg.cfl)
    state = solver.state_from_density(cfg.initial.density(cfg.domain, np.random.default_rng(cfg.seed)))
    dt = min(cfg.dt or solver.max_dt, solver.max_dt)
    for _ in range(max_steps // 100):
        prev = state.interior.copy()
        for _ in range(100):
            state = solver.step(state, dt, check=False)
        if np.max(np.abs(state.interior - prev)) <= tol * np.max(np.abs(prev)):
            return state.interior.copy()
    raise SchemeFailure("stationary distribution did not converge")
