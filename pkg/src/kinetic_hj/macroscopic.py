"""Finite-volume solvers for the aggregate (drift-diffusion) limits in 1D.

All models share one conservative update

    rho_i <- rho_i - dt/dx (F_{i+1/2} - F_{i-1/2}),
    F = upwind(rho U_eff) - eps [(D rho)_{i+1} - (D rho)_i] / dx,

with ``U_eff = U (1 - eps dU/dx)`` when the second-order correction is on.
Writing the diffusion as a difference of ``D rho`` keeps the wall flux of the
form ``rho U - eps (D rho' + rho D' + rho U U')`` so zeroing it at the walls
is exactly the no-flux condition.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from .errors import ConcentrationDetected, InvalidSignal, SchemeFailure, TimestepTooLarge
from .kinetic_solver import _adhesion_weights
from .signals_kernels import (Domain1D, KernelSpec, SignalField, eval_signal, limit_kernel,
                              uniform_kernel)

MODELS = ("hyperbolic_order1", "pure_conservation", "diffusive_nonlocal",
          "diffusive_local", "keller_segel", "nonlinear")
CONCENTRATION_LIMIT = 10.0


@dataclass
class MacroFields:
    drift: np.ndarray        # U at cell centers
    diffusion: np.ndarray    # variance D at cell centers


FieldSource = Union[MacroFields, Callable[[np.ndarray], MacroFields]]


@dataclass
class MacroState:
    rho: np.ndarray
    t: float
    domain: Domain1D
    model: str = "pure_conservation"

    def __post_init__(self):
        if self.model not in MODELS:
            raise ValueError(f"unknown model {self.model!r}")
        self.rho = np.asarray(self.rho, dtype=float)

    @property
    def mass(self) -> float:
        return float(self.rho.sum() * self.domain.dx)


def _moments(weights: np.ndarray, velocities: np.ndarray) -> MacroFields:
    """Mean and variance of per-cell probability masses over 1D velocity nodes."""
    drift = np.einsum("xdk,dk->x", weights, velocities)
    second = np.einsum("xdk,dk->x", weights, velocities**2)
    return MacroFields(drift, np.maximum(second - drift**2, 0.0))


def _velocities(spec: KernelSpec) -> np.ndarray:
    speeds, _, _ = spec.speed.quadrature(2)
    return np.array([1.0, -1.0])[:, None] * speeds


def fields_from_kernel(spec: KernelSpec, signal: SignalField, domain: Domain1D,
                       regime: Optional[str] = None) -> MacroFields:
    """Drift and variance of the leading-order kernel at every cell."""
    regime = regime or spec.regime
    vel = _velocities(spec)
    weights = np.array([limit_kernel(spec, signal, x, domain, regime).leading.weights
                        for x in domain.centers])
    return _moments(weights, vel)


def first_order_fields(spec: KernelSpec, signal: SignalField, domain: Domain1D) -> MacroFields:
    """Drift of the first kernel correction and variance of the uniform kernel.

    These are the coefficients of the localized diffusive limit, valid when
    the leading drift vanishes.
    """
    vel = _velocities(spec)
    drift = np.empty(domain.n_cells)
    for i, x in enumerate(domain.centers):
        lk = limit_kernel(spec, signal, x, domain, "small_R_expansion")
        drift[i] = np.sum(lk.correction * vel)
    base = uniform_kernel(spec).weights
    return MacroFields(drift, _moments(base[None], vel).diffusion.repeat(domain.n_cells))


def keller_segel_fields(signal: SignalField, radius: float, domain: Domain1D) -> MacroFields:
    x = domain.centers
    s = eval_signal(signal, x)
    if np.any(s <= 0):
        raise InvalidSignal("Keller-Segel drift needs a positive signal")
    drift = radius * np.asarray(signal.gradient(x), dtype=float) / s
    return MacroFields(drift, np.ones_like(x))


def nonlinear_fields(spec: KernelSpec, domain: Domain1D) -> Callable[[np.ndarray], MacroFields]:
    """Density-dependent drift and variance of the self-sensing kernel."""
    vel = _velocities(spec)
    _, _, prob = spec.speed.quadrature(2)
    uniform = 0.5 * prob

    def build(rho: np.ndarray) -> MacroFields:
        return _moments(_adhesion_weights(spec, rho, domain, uniform), vel)
    return build


def linearized_adhesion_drift(rho: np.ndarray, spec: KernelSpec, domain: Domain1D) -> np.ndarray:
    """Drift of the small-R linearized self-sensing kernel.

    Per direction the kernel is ``1/2 (1 + R vhat rho'/rho)`` times the
    speed law, so the drift is ``R <v> rho'/rho`` with ``<v>`` the mean speed.
    """
    grad = np.gradient(rho, domain.dx)
    vel = _velocities(spec)
    _, _, prob = spec.speed.quadrature(2)
    mean_speed = float(np.sum(prob[0] * vel[0]))
    return spec.radius * mean_speed * grad / rho


# ---------------------------------------------------------------------------
# stepping


def stable_dt(fields: MacroFields, dx: float, eps: float, cfl: float = 0.9) -> float:
    """Largest dt keeping the explicit update monotone (positivity preserving)."""
    rate = 2.0 * np.max(np.abs(fields.drift)) / dx + 2.0 * eps * np.max(fields.diffusion) / dx**2
    return cfl / rate if rate > 0 else np.inf


def _check_dt(fields: MacroFields, dx: float, dt: float, eps: float) -> None:
    if np.max(np.abs(fields.drift)) * dt > 0.9 * dx * (1.0 + 1e-12):
        raise TimestepTooLarge("advective CFL violated")
    if 2.0 * eps * np.max(fields.diffusion) * dt > 0.9 * dx**2 * (1.0 + 1e-12):
        raise TimestepTooLarge("diffusive bound violated")


def interface_fluxes(rho: np.ndarray, fields: MacroFields, domain: Domain1D, eps: float,
                     correction: bool = True) -> np.ndarray:
    """Fluxes at the n+1 interfaces (periodic: entry 0 equals entry n)."""
    dx = domain.dx
    u = fields.drift
    if correction and eps > 0:
        if domain.periodic:
            du = (np.roll(u, -1) - np.roll(u, 1)) / (2.0 * dx)
        else:
            du = np.gradient(u, dx)
        u = u * (1.0 - eps * du)
    dr = fields.diffusion * rho
    if domain.periodic:
        u_r, r_r, dr_r = np.roll(u, -1), np.roll(rho, -1), np.roll(dr, -1)
        face_u = 0.5 * (u + u_r)
        inner = np.maximum(face_u, 0.0) * rho + np.minimum(face_u, 0.0) * r_r - eps * (dr_r - dr) / dx
        return np.concatenate([inner[-1:], inner])
    face_u = 0.5 * (u[:-1] + u[1:])
    inner = (np.maximum(face_u, 0.0) * rho[:-1] + np.minimum(face_u, 0.0) * rho[1:]
             - eps * (dr[1:] - dr[:-1]) / dx)
    return np.concatenate([[np.nan], inner, [np.nan]])


def apply_macro_boundary(fluxes: np.ndarray, domain: Domain1D) -> np.ndarray:
    """Zero the wall fluxes ``(rho U - eps(...)).n`` on a bounded domain."""
    if domain.periodic:
        return fluxes
    out = fluxes.copy()
    out[0] = out[-1] = 0.0
    return out


def step_macro(state: MacroState, fields: FieldSource, dt: float, eps: float = 0.0,
               correction: bool = True, check: bool = True) -> MacroState:
    """One explicit conservative step.

    ``fields`` may be a callable of the density, in which case the drift and
    variance are rebuilt from the current profile.
    """
    current = fields(state.rho) if callable(fields) else fields
    if check:
        _check_dt(current, state.domain.dx, dt, eps)
    fl = apply_macro_boundary(interface_fluxes(state.rho, current, state.domain, eps, correction),
                              state.domain)
    rho = state.rho - dt / state.domain.dx * np.diff(fl)
    if not np.all(np.isfinite(rho)):
        raise SchemeFailure("non-finite density")
    return MacroState(rho, state.t + dt, state.domain, state.model)


def keller_segel_step(state: MacroState, signal: SignalField, radius: float, dt: float) -> MacroState:
    return step_macro(state, keller_segel_fields(signal, radius, state.domain), dt, eps=1.0,
                      correction=False)


def concentration_indicator(rho: np.ndarray, dx: float, eps: float) -> float:
    """``eps max |rho'|/rho``; large values mean the aggregate limit is unreliable."""
    grad = np.abs(np.gradient(rho, dx))
    return float(eps * np.max(grad / np.maximum(rho, 1e-300)))


# ---------------------------------------------------------------------------
# runs


@dataclass
class MacroConfig:
    domain: Domain1D
    model: str
    initial: np.ndarray
    t_final: float
    eps: float = 0.0
    fields: Optional[FieldSource] = None
    correction: bool = True
    n_outputs: int = 100
    cfl: float = 0.9
    dt: Optional[float] = None


@dataclass
class MacroRun:
    times: np.ndarray
    rho: np.ndarray
    mass: np.ndarray
    final: MacroState
    dt: float
    steps: int

    @property
    def mass_drift(self) -> float:
        return float(np.max(np.abs(self.mass - self.mass[0])) / abs(self.mass[0]))


def effective_eps(model: str, eps: float) -> float:
    if model == "pure_conservation":
        return 0.0
    if model in ("diffusive_nonlocal", "diffusive_local", "keller_segel"):
        return 1.0
    return eps


def run_macro(cfg: MacroConfig) -> MacroRun:
    """Integrate to ``t_final``; nonlinear runs abort on concentration."""
    if cfg.fields is None:
        raise ValueError("macro run needs drift/diffusion fields")
    eps = effective_eps(cfg.model, cfg.eps)
    correction = cfg.correction and cfg.model == "hyperbolic_order1"
    state = MacroState(np.array(cfg.initial, dtype=float), 0.0, cfg.domain, cfg.model)
    dynamic = callable(cfg.fields)
    fixed = None if dynamic else cfg.fields
    probe = cfg.fields(state.rho) if dynamic else fixed
    if dynamic:
        # |U| and D never exceed the second velocity moment, whatever rho does
        top = np.sqrt(np.max(probe.diffusion + probe.drift**2))
        probe = MacroFields(np.full_like(probe.drift, top), np.full_like(probe.drift, top**2))
    dt = cfg.dt or stable_dt(probe, cfg.domain.dx, eps, cfg.cfl)
    if not np.isfinite(dt):
        dt = cfg.t_final
    n_steps = max(1, int(np.ceil(cfg.t_final / dt)))
    dt = cfg.t_final / n_steps
    every = max(1, n_steps // max(cfg.n_outputs, 1))
    times, frames, masses = [0.0], [state.rho.copy()], [state.mass]
    for n in range(1, n_steps + 1):
        current = cfg.fields(state.rho) if dynamic else fixed
        if dynamic:
            if concentration_indicator(state.rho, cfg.domain.dx, eps) > CONCENTRATION_LIMIT:
                raise ConcentrationDetected(f"density concentrated at t={state.t:.4g}")
            if dt > stable_dt(current, cfg.domain.dx, eps, cfg.cfl) * (1 + 1e-12):
                raise TimestepTooLarge("fields changed beyond the fixed timestep")
        state = step_macro(state, current, dt, eps, correction, check=False)
        if n % every == 0 or n == n_steps:
            times.append(state.t)
            frames.append(state.rho.copy())
            masses.append(state.mass)
    return MacroRun(np.array(times), np.array(frames), np.array(masses), state, dt, n_steps)
