"""Post-processing of densities and phases: peaks, drift zeros, slopes, walls."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import signal as sps

from .errors import AppendixViolation, Escaped, InvalidDomain
from .hj_eikonal import PhaseField
from .signals_kernels import Domain1D, KernelSpec, SignalField, direction_factors

DENSITY_FLOOR = 1e-300
PEAK_THRESHOLD = 0.2
PEAK_DISTANCE = 3


def hopf_cole(rho: np.ndarray, eps: float, domain: Domain1D, t: float = 0.0) -> PhaseField:
    """``phi = -eps log rho`` with the density clamped at ``1e-300``."""
    rho = np.maximum(np.asarray(rho, dtype=float), DENSITY_FLOOR)
    return PhaseField(-eps * np.log(rho), t, domain)


def inverse_hopf_cole(phase: PhaseField, eps: float) -> np.ndarray:
    return np.exp(-phase.phi / eps)


@dataclass(frozen=True)
class PeakSet:
    locations: np.ndarray
    heights: np.ndarray
    weights: np.ndarray      # mass between the neighbouring troughs
    indices: np.ndarray
    threshold: float

    def __len__(self) -> int:
        return len(self.locations)


def find_peaks(rho: np.ndarray, domain: Domain1D, rel_threshold: float = PEAK_THRESHOLD,
               min_distance: int = PEAK_DISTANCE) -> PeakSet:
    """Local maxima above ``rel_threshold * max(rho)``.

    Plateaus are reported once at their midpoint.  On bounded domains a
    maximum sitting on the first or last cell counts (a wall peak); on
    periodic domains the profile is wrapped.
    """
    rho = np.asarray(rho, dtype=float)
    n = rho.size
    top = float(rho.max())
    threshold = rel_threshold * top
    if top <= 0 or np.ptp(rho) <= 1e-14 * max(abs(top), 1.0):
        empty = np.array([], dtype=float)
        return PeakSet(empty, empty, empty, np.array([], dtype=int), threshold)
    if domain.periodic:
        ext = np.concatenate([rho, rho, rho])
        idx, _ = sps.find_peaks(ext, height=threshold, distance=min_distance)
        idx = np.unique(idx[(idx >= n) & (idx < 2 * n)] - n)
    else:
        pad = rho.min() - 1.0
        idx, _ = sps.find_peaks(np.concatenate([[pad], rho, [pad]]), height=threshold,
                                distance=min_distance)
        idx = idx - 1
    idx = np.sort(idx)
    weights = _peak_masses(rho, idx, domain)
    return PeakSet(domain.centers[idx], rho[idx], weights, idx, threshold)


def _peak_masses(rho: np.ndarray, idx: np.ndarray, domain: Domain1D) -> np.ndarray:
    if idx.size == 0:
        return np.array([], dtype=float)
    if idx.size == 1:
        return np.array([rho.sum() * domain.dx])
    cuts = [int(a + np.argmin(rho[a:b + 1])) for a, b in zip(idx[:-1], idx[1:])]
    if domain.periodic:
        edges = cuts + [cuts[0] + rho.size]
        tiled = np.concatenate([rho, rho])
        masses = [tiled[a:b].sum() for a, b in zip(edges[:-1], edges[1:])]
        return np.roll(np.array(masses), 1) * domain.dx
    edges = [0] + cuts + [rho.size]
    return np.array([rho[a:b].sum() for a, b in zip(edges[:-1], edges[1:])]) * domain.dx


def expected_weights(peaks: PeakSet, diffusion: np.ndarray, total_mass: float) -> np.ndarray:
    """Informational weights proportional to ``1 / D`` at each peak (not asserted anywhere)."""
    d = np.asarray(diffusion, dtype=float)[peaks.indices]
    inv = 1.0 / np.maximum(d, 1e-300)
    return total_mass * inv / inv.sum() if inv.size else inv


# ---------------------------------------------------------------------------
# drift zeros and the peak ODE


@dataclass(frozen=True)
class SingularPoints:
    locations: np.ndarray
    attracting: np.ndarray    # U' < 0 at the root
    degenerate: bool = False


def singular_points(drift: np.ndarray, domain: Domain1D, atol: float = 1e-300) -> SingularPoints:
    """Sign changes of the sampled drift, refined on its linear interpolant."""
    u = np.asarray(drift, dtype=float)
    x = domain.centers
    if np.all(np.abs(u) <= atol):
        return SingularPoints(np.array([]), np.array([], dtype=bool), degenerate=True)
    roots, attract = [], []
    n = u.size
    for i in np.nonzero(u == 0.0)[0]:
        lo = u[i - 1] if i > 0 or domain.periodic else u[i]
        hi = u[(i + 1) % n] if i < n - 1 or domain.periodic else u[i]
        roots.append(float(x[i]))
        attract.append(hi < lo)
    stop = n if domain.periodic else n - 1
    for i in range(stop):
        j = (i + 1) % n
        a, b = u[i], u[j]
        if a * b < 0:
            xj = x[j] if j > i else x[j] + domain.length
            root = x[i] + (xj - x[i]) * a / (a - b)
            roots.append(float(domain.wrap(root)) if domain.periodic else float(root))
            attract.append(b < a)
    order = np.argsort(roots)
    return SingularPoints(np.asarray(roots, dtype=float)[order], np.asarray(attract, dtype=bool)[order])


@dataclass(frozen=True)
class PeakTrajectory:
    times: np.ndarray
    positions: np.ndarray
    dt: float


def integrate_peak_ode(x0: float, drift: np.ndarray, domain: Domain1D, t_final: float,
                       n_outputs: int = 200, dt: Optional[float] = None) -> PeakTrajectory:
    """Classical RK4 for ``dx/dt = U(x)`` with U linearly interpolated between cells."""
    u = np.asarray(drift, dtype=float)
    x = domain.centers
    if not domain.contains(x0):
        raise InvalidDomain(f"start point {x0} outside the domain")

    if domain.periodic:
        def rhs(y):
            return float(np.interp(domain.wrap(y), x, u, period=domain.length))
    else:
        def rhs(y):
            return float(np.interp(y, x, u))

    top = float(np.max(np.abs(u)))
    if dt is None:
        dt = domain.dx / (10.0 * top) if top > 0 else t_final
    n_steps = max(1, int(np.ceil(t_final / dt)))
    dt = t_final / n_steps
    every = max(1, n_steps // max(n_outputs, 1))
    times, pos = [0.0], [float(x0)]
    y = float(x0)
    for n in range(1, n_steps + 1):
        k1 = rhs(y)
        k2 = rhs(y + 0.5 * dt * k1)
        k3 = rhs(y + 0.5 * dt * k2)
        k4 = rhs(y + dt * k3)
        y += dt * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
        if domain.periodic:
            y = float(domain.wrap(y))
        elif not domain.contains(y):
            raise Escaped(f"trajectory left the domain at t={n * dt:.4g}")
        if n % every == 0 or n == n_steps:
            times.append(n * dt)
            pos.append(y)
    return PeakTrajectory(np.array(times), np.array(pos), dt)


# ---------------------------------------------------------------------------
# saw-tooth slopes


@dataclass(frozen=True)
class SlopeStats:
    mode: float
    fraction_near_mode: float
    histogram: np.ndarray
    edges: np.ndarray


def sawtooth_extract(phase: PhaseField, bins: int = 60, max_slope: Optional[float] = None,
                     tolerance: float = 0.05) -> SlopeStats:
    """Histogram of ``|D+ phi|``; the mode is the median of the fullest bin."""
    g = np.abs(phase.gradient())
    top = max_slope if max_slope is not None else float(g.max())
    if top <= 0:
        return SlopeStats(0.0, 1.0, np.array([g.size]), np.array([0.0, 0.0]))
    hist, edges = np.histogram(g, bins=bins, range=(0.0, top))
    k = int(hist.argmax())
    inside = g[(g >= edges[k]) & (g <= edges[k + 1])]
    mode = float(np.median(inside))
    if mode == 0.0:
        frac = float(np.mean(g <= edges[1]))
    else:
        frac = float(np.mean(np.abs(g - mode) <= tolerance * mode))
    return SlopeStats(mode, frac, hist, edges)


# ---------------------------------------------------------------------------
# wall drift


@dataclass(frozen=True)
class BoundaryDriftReport:
    alpha: float
    regime: str
    drift: tuple            # U at (left wall, right wall)
    normal_drift: tuple     # U.n at (left, right)
    passed: bool


def boundary_drift_check(spec: KernelSpec, signal: SignalField, domain: Domain1D, alpha: float,
                         strict: bool = True) -> BoundaryDriftReport:
    """Mean velocity of the wall-restricted equilibrium kernel at both walls.

    Outgoing directions carry zero speed.  Incoming directions follow the
    sensing kernel for a diffuse wall (``alpha=0``) or mirror the outgoing
    ones for a reflecting wall (``alpha=1``); intermediate values mix both.
    A localized kernel is direction independent and is used as is.
    """
    if domain.periodic:
        raise InvalidDomain("wall drift needs a bounded domain")
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    speeds, _, prob = spec.speed.quadrature(2)
    vel = np.array([1.0, -1.0])[:, None] * speeds
    drifts, normals = [], []
    for wall, normal in ((domain.x_min, -1.0), (domain.x_max, 1.0)):
        if spec.regime == "local_hyp":
            w = 0.5 * prob
            u = float(np.sum(w * vel))
        else:
            b = direction_factors(spec, signal, np.array([wall]), domain)[0]
            out = 0 if normal > 0 else 1
            inn = 1 - out
            diffuse = np.zeros_like(prob)
            diffuse[out] = 0.5 * prob[out]
            diffuse[inn] = b[inn] * prob[inn]
            speed_mask = np.zeros_like(vel)
            speed_mask[inn] = vel[inn]     # outgoing directions move at zero speed
            u_diffuse = float(np.sum(diffuse * speed_mask) / diffuse.sum())
            u = (1.0 - alpha) * u_diffuse   # the mirrored part carries zero speed both ways
        drifts.append(u)
        normals.append(u * normal)
    if alpha == 1.0 or spec.regime == "local_hyp":
        passed = all(abs(u) < 1e-12 for u in drifts)
    else:
        passed = all(un < 0 for un in normals)
    report = BoundaryDriftReport(alpha, spec.regime, tuple(drifts), tuple(normals), passed)
    if strict and not passed:
        raise AppendixViolation(f"wall drift check failed: {report}")
    return report
