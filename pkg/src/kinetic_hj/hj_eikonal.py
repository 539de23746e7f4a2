"""Monotone Lax-Friedrichs integration of ``phi_t + H(x, phi_x) = 0`` in 1D.

Hamiltonians are plain objects exposing ``value(x, p)`` (vectorized over
cells) and ``lipschitz(p_max)``, an upper bound of ``|dH/dp|`` on
``|p| <= p_max``.  Three flavours are provided: closed forms wrapped in
``FunctionHamiltonian``, bilinear ``TabulatedHamiltonian`` tables built from
the root solver, and ``QuadraticHamiltonian`` for the eikonal equations.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .effective_hamiltonian import (AdhesionHamiltonian, LinearHamiltonian,
                                    closed_H_nonlinear_1d, sawtooth_slope)
from .errors import BoundaryDegenerate, InvalidDomain, SchemeFailure, TimestepTooLarge
from .signals_kernels import Domain1D, KernelSpec, SpeedDistribution

LIPSCHITZ_SAMPLES = 4001


@dataclass
class PhaseField:
    phi: np.ndarray
    t: float
    domain: Domain1D

    def __post_init__(self):
        self.phi = np.asarray(self.phi, dtype=float)
        if self.phi.shape != (self.domain.n_cells,):
            raise InvalidDomain("phase array does not match the grid")

    @property
    def minimum(self) -> float:
        return float(self.phi.min())

    def gradient(self) -> np.ndarray:
        """Forward differences ``D+ phi`` (periodic wrap or last one repeated)."""
        if self.domain.periodic:
            return (np.roll(self.phi, -1) - self.phi) / self.domain.dx
        d = np.diff(self.phi) / self.domain.dx
        return np.append(d, d[-1])

    def copy(self) -> "PhaseField":
        return PhaseField(self.phi.copy(), self.t, self.domain)


# ---------------------------------------------------------------------------
# Hamiltonians


def _sampled_lipschitz(values: Callable[[np.ndarray], np.ndarray], p_max: float) -> float:
    ps = np.linspace(-p_max, p_max, LIPSCHITZ_SAMPLES)
    h = values(ps)
    slope = np.abs(np.diff(h, axis=-1)) / (ps[1] - ps[0])
    return float(slope.max()) * 1.01


class FunctionHamiltonian:
    """Wraps ``fn(x, p)``; the Lipschitz bound is sampled on a p-grid at ``xs``."""

    def __init__(self, fn: Callable, xs: Optional[np.ndarray] = None):
        self.fn = fn
        self.xs = np.zeros(1) if xs is None else np.asarray(xs, dtype=float)

    def value(self, x, p):
        return self.fn(x, p)

    def lipschitz(self, p_max: float) -> float:
        return _sampled_lipschitz(lambda ps: self.fn(self.xs[:, None], ps[None, :]), p_max)


def adhesion_closed_form(speed: float, mu: float, radius: float) -> FunctionHamiltonian:
    """Closed 1D Hamiltonian of the adhesion model with a single speed."""
    return FunctionHamiltonian(lambda x, p: closed_H_nonlinear_1d(np.broadcast_to(p, np.broadcast(x, p).shape),
                                                                  speed, mu, radius))


def advection_hamiltonian(speed: float) -> FunctionHamiltonian:
    return FunctionHamiltonian(lambda x, p: speed * np.broadcast_to(p, np.broadcast(x, p).shape))


class QuadraticHamiltonian:
    """``H(x, p) = U(x) p + D(x) p^2`` built from drift and diffusion fields."""

    def __init__(self, drift, diffusion):
        self.drift = np.asarray(drift, dtype=float)
        self.diffusion = np.asarray(diffusion, dtype=float)

    def value(self, x, p):
        return self.drift * p + self.diffusion * p * p

    def lipschitz(self, p_max: float) -> float:
        return float(np.max(np.abs(self.drift)) + 2.0 * np.max(np.abs(self.diffusion)) * p_max)


class TabulatedHamiltonian:
    """Bilinear interpolation in a ``(cell, p)`` table.

    The x axis is the cell index so the table is exact on the grid it was
    built for; outside the p range the table is extrapolated linearly.
    """

    def __init__(self, p_nodes: np.ndarray, table: np.ndarray):
        self.p_nodes = np.asarray(p_nodes, dtype=float)
        self.table = np.atleast_2d(np.asarray(table, dtype=float))
        idx = np.arange(self.table.shape[0], dtype=float)
        if idx.size == 1:
            self._interp = None
        else:
            self._interp = RegularGridInterpolator((idx, self.p_nodes), self.table,
                                                   bounds_error=False, fill_value=None)

    def value(self, x, p):
        p = np.asarray(p, dtype=float)
        if self._interp is None:
            return np.interp(p, self.p_nodes, self.table[0])
        cells = np.broadcast_to(np.arange(self.table.shape[0], dtype=float), p.shape)
        return self._interp(np.stack([cells, p], axis=-1))

    def lipschitz(self, p_max: float) -> float:
        slope = np.abs(np.diff(self.table, axis=1)) / np.diff(self.p_nodes)
        return float(slope.max())

    @classmethod
    def from_evaluators(cls, evaluators, p_nodes) -> "TabulatedHamiltonian":
        """One row per evaluator, each solving the defining equation on ``p_nodes``."""
        p_nodes = np.asarray(p_nodes, dtype=float)
        return cls(p_nodes, np.array([ev.solve_many(p_nodes, check=False) for ev in evaluators]))


def default_p_range(slope: float, n: int = 2048) -> np.ndarray:
    hi = 1.2 * slope + 10.0
    return np.linspace(-hi, hi, n)


def tabulate_linear(spec: KernelSpec, signal, domain: Domain1D, mu: float = 1.0,
                    p_nodes: Optional[np.ndarray] = None, regime: Optional[str] = None) -> TabulatedHamiltonian:
    """Table of the signal-driven Hamiltonian at every cell center."""
    if p_nodes is None:
        p_nodes = default_p_range(2.0 * mu / spec.speed.max_speed)
    evs = [LinearHamiltonian.from_spec(spec, signal, x, domain, mu, regime) for x in domain.centers]
    return TabulatedHamiltonian.from_evaluators(evs, p_nodes)


def tabulate_adhesion(speed: SpeedDistribution, radius: float, mu: float,
                      p_nodes: Optional[np.ndarray] = None) -> TabulatedHamiltonian:
    ham = AdhesionHamiltonian(speed, radius, mu)
    if p_nodes is None:
        p_nodes = default_p_range(sawtooth_slope(speed.mean_speed(), mu, radius)
                                  if speed.mean_speed() < mu * radius else mu / speed.mean_speed())
    return TabulatedHamiltonian.from_evaluators([ham], p_nodes)


# ---------------------------------------------------------------------------
# boundary ghosts


@dataclass
class HJBoundary:
    """Ghost values at both walls; ``None`` means homogeneous Neumann."""

    left: Optional[float] = None
    right: Optional[float] = None


def hj_boundary(phase: PhaseField, drift, diffusion) -> HJBoundary:
    """Ghosts enforcing ``phi U.n + D phi_n = 0`` with one-sided differences."""
    if phase.domain.periodic:
        raise InvalidDomain("wall condition requested on a periodic domain")
    drift = np.asarray(drift, dtype=float)
    diffusion = np.asarray(diffusion, dtype=float)
    drift = np.broadcast_to(drift, phase.phi.shape)
    diffusion = np.broadcast_to(diffusion, phase.phi.shape)
    dx = phase.domain.dx
    ghosts = []
    for cell, normal in ((0, -1.0), (-1, 1.0)):
        u_n = drift[cell] * normal
        if u_n == 0.0 or phase.phi[cell] == 0.0:
            ghosts.append(None)
            continue
        if diffusion[cell] <= 0.0:
            raise BoundaryDegenerate("zero diffusion at a wall with nonzero normal drift")
        slope_n = -phase.phi[cell] * u_n / diffusion[cell]
        ghosts.append(float(phase.phi[cell] + dx * slope_n))
    return HJBoundary(*ghosts)


def _padded(phi: np.ndarray, periodic: bool, bc: Optional[HJBoundary]) -> np.ndarray:
    if periodic:
        return np.concatenate([phi[-1:], phi, phi[:1]])
    bc = bc or HJBoundary()
    left = phi[0] if bc.left is None else bc.left
    right = phi[-1] if bc.right is None else bc.right
    return np.concatenate([[left], phi, [right]])


# ---------------------------------------------------------------------------
# stepping


def step_hj(phase: PhaseField, ham, dt: float, lam: Optional[float] = None,
            bc: Optional[HJBoundary] = None, pinned: Optional[np.ndarray] = None) -> PhaseField:
    """One global Lax-Friedrichs step.

    ``lam`` is the dissipation coefficient; it must bound ``|dH/dp|`` for the
    scheme to be monotone and defaults to the Hamiltonian's own estimate over
    the current gradients.  Cells in the boolean mask ``pinned`` keep their
    value (used to hold concentration points fixed).
    """
    dx = phase.domain.dx
    ext = _padded(phase.phi, phase.domain.periodic, bc)
    fwd = (ext[2:] - ext[1:-1]) / dx
    bwd = (ext[1:-1] - ext[:-2]) / dx
    if lam is None:
        lam = ham.lipschitz(max(np.abs(fwd).max(), np.abs(bwd).max(), 1e-12))
    if dt > dx / (2.0 * lam) * (1.0 + 1e-12):
        raise TimestepTooLarge(f"dt={dt:.3g} exceeds dx/(2 lambda)={dx / (2.0 * lam):.3g}")
    h = ham.value(phase.domain.centers, 0.5 * (fwd + bwd))
    phi = phase.phi - dt * (h - 0.5 * lam * (fwd - bwd))
    if pinned is not None:
        phi = np.where(pinned, phase.phi, phi)
    if not np.all(np.isfinite(phi)):
        raise SchemeFailure("non-finite phase")
    return PhaseField(phi, phase.t + dt, phase.domain)


def step_eikonal(phase: PhaseField, drift, diffusion, dt: float,
                 bc: Optional[HJBoundary] = None) -> PhaseField:
    """Lax-Friedrichs step for ``phi_t + U phi_x + D phi_x^2 = 0``."""
    return step_hj(phase, QuadraticHamiltonian(drift, diffusion), dt, bc=bc)


@dataclass
class HJRun:
    times: np.ndarray
    phi: np.ndarray            # (n_out, n_cells)
    minima: np.ndarray         # min phi at every step
    final: PhaseField
    lam: float
    dt: float
    steps: int
    extras: dict = field(default_factory=dict)


def run_hj(phase: PhaseField, ham, t_final: float, n_outputs: int = 50,
           lam: Optional[float] = None, p_max: Optional[float] = None, cfl: float = 0.9,
           bc: Optional[HJBoundary] = None, pinned: Optional[np.ndarray] = None) -> HJRun:
    """Integrate to ``t_final`` with a fixed ``lam`` (and therefore fixed dt).

    Without ``lam`` the bound is sampled once on ``|p| <= p_max`` (default:
    twice the largest initial gradient, at least 1).
    """
    dx = phase.domain.dx
    if lam is None:
        if p_max is None:
            p_max = max(2.0 * float(np.abs(phase.gradient()).max()), 1.0)
        lam = ham.lipschitz(p_max)
    lam = max(lam, 1e-300)
    n_steps = max(1, int(np.ceil(t_final / (cfl * dx / (2.0 * lam)))))
    dt = t_final / n_steps
    out_every = max(1, n_steps // max(n_outputs, 1))
    times, frames, minima = [phase.t], [phase.phi.copy()], [phase.minimum]
    cur = phase
    for n in range(1, n_steps + 1):
        cur = step_hj(cur, ham, dt, lam=lam, bc=bc, pinned=pinned)
        minima.append(cur.minimum)
        if n % out_every == 0 or n == n_steps:
            times.append(cur.t)
            frames.append(cur.phi.copy())
    return HJRun(np.array(times), np.array(frames), np.array(minima), cur, lam, dt, n_steps)


def local_minima(phi: np.ndarray, periodic: bool = True) -> np.ndarray:
    """Boolean mask of strict-left/weak-right discrete local minima."""
    left = np.roll(phi, 1)
    right = np.roll(phi, -1)
    mask = (phi < left) & (phi <= right)
    if not periodic:
        mask[0] = phi[0] <= phi[1]
        mask[-1] = phi[-1] < phi[-2]
    return mask
