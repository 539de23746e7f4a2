"""Effective Hamiltonian of the Hopf-Cole limit of the kinetic model.

At a fixed position the Hamiltonian is the unique root ``H`` of

    1 = mu * sum_k K_k / (mu + H - v_k . p)

on the branch where every denominator stays positive (``H > Hbar(p)`` with
``Hbar(p) = -mu + max_k v_k . p``).  For the linear (signal driven) model
``K`` is the leading-order turning kernel at ``x``; for the adhesion model it
is the tilted kernel ``G_R(v, vhat, p) ~ psi exp(-R vhat . p)`` and ``H`` does
not depend on ``x``.

Roots are bracketed in ``(max(Hbar, -U|p|), U|p|)``, bisected and polished by
Newton steps.  The residual is evaluated as ``sum_k K_k (a_k - H)/(mu + H - a_k)``
which keeps relative accuracy when ``H`` and ``a_k = v_k . p`` are tiny;
denominators are formed as ``(mu - a_k) + H`` so a root just above the floor
is not swamped by rounding.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import integrate, optimize, special

from .errors import FormulaDomainError, NoPositiveRoot, RootBracketError, SingularHamiltonian
from .signals_kernels import (DiscreteKernel, Domain1D, KernelSpec, SpeedDistribution,
                              direction_set, kernel_moments, limit_kernel)

logger = logging.getLogger(__name__)

BISECTION_TOL = 1e-12
NEWTON_STEPS = 2


def _as_points(p, dim: int) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if dim == 1:
        return p.reshape(-1, 1)
    return p.reshape(-1, dim)


def solve_roots(a: np.ndarray, w: np.ndarray, mu: float, bound: np.ndarray,
                tol: float = BISECTION_TOL, newton_steps: int = NEWTON_STEPS) -> np.ndarray:
    """Vectorized root of ``sum_k w_k (a_k - H)/(mu + H - a_k) = 0`` per row.

    Args:
        a: projected velocities ``v_k . p``, shape (n, K).
        w: node weights, shape (n, K) or (K,).
        mu: relaxation rate.
        bound: ``U |p|`` per row; the root lies in ``(-bound, bound)``.
    """
    a = np.atleast_2d(a)
    w = np.broadcast_to(w, a.shape)
    bound = np.asarray(bound, dtype=float).reshape(-1)
    live = np.where(w > 0, a, -np.inf)
    under = live.max(axis=1) - mu
    # the residual is +inf at ``under`` itself, so the floor is a valid bracket end
    lo = np.maximum(under, -bound)
    hi = bound.copy()

    def resid(h):
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.sum(np.where(w > 0, w * (a - h[:, None]) / ((mu - a) + h[:, None]), 0.0), axis=1)
        return np.where(np.isnan(r), np.inf, r)

    out = np.zeros_like(bound)
    active = bound > 0
    if not np.any(active):
        return out
    f_lo = resid(lo)
    exact = active & (f_lo == 0.0)
    out[exact] = lo[exact]
    active &= ~exact
    if np.any(active & (f_lo < 0)):
        raise RootBracketError("residual does not change sign on the admissible bracket")
    scale = np.minimum(1.0, np.where(bound > 0, bound, 1.0))
    for _ in range(400):
        # roots hugging the floor need a width relative to their distance from it
        width = tol * np.minimum(scale, np.maximum(hi - under, 1e-300))
        if not np.any(active & (hi - lo > width)):
            break
        mid = 0.5 * (lo + hi)
        if np.all((mid == lo) | (mid == hi) | ~active):
            break
        pos = resid(mid) > 0
        lo = np.where(active & pos, mid, lo)
        hi = np.where(active & ~pos, mid, hi)
    h = 0.5 * (lo + hi)
    for _ in range(newton_steps):
        d = (mu - a) + h[:, None]
        with np.errstate(divide="ignore", invalid="ignore"):
            f = np.sum(np.where(w > 0, w * (a - h[:, None]) / d, 0.0), axis=1)
            df = -mu * np.sum(np.where(w > 0, w / (d * d), 0.0), axis=1)
            step = np.where(np.isfinite(f / df), f / df, 0.0)
        h = np.clip(h - step, lo, hi)
    out[active] = h[active]
    return out


class HamiltonianEvaluator:
    """Common machinery; subclasses provide the (possibly p-dependent) nodes."""

    mu: float
    dim: int
    max_speed: float

    def nodes(self, points: np.ndarray):
        """Velocities ``(K, d)`` and weights ``(n, K)`` for a batch of covectors."""
        raise NotImplementedError

    def angular_density(self, p: np.ndarray):  # pragma: no cover - 2D only
        raise NotImplementedError

    def _speed_is_atomic(self) -> bool:
        return True

    # -- evaluation -------------------------------------------------------
    def projections(self, p):
        pts = _as_points(p, self.dim)
        vel, w = self.nodes(pts)
        return pts, pts @ vel.T, w

    def underline(self, p) -> float:
        """Value of H at which the largest denominator vanishes."""
        _, a, w = self.projections(p)
        return float(-self.mu + np.max(np.where(w[0] > 0, a[0], -np.inf)))

    def residual(self, p, h: float) -> float:
        """``mu * sum K/(mu + H - v.p) - 1`` at a candidate root."""
        _, a, w = self.projections(p)
        return float(self.mu * np.sum(w[0] / ((self.mu - a[0]) + h)) - 1.0)

    def check_dimensionality(self, p) -> bool:
        pts = _as_points(p, self.dim)[0]
        norm = float(np.linalg.norm(pts))
        if norm == 0.0:
            return True
        if self.dim == 1:
            vel, w = self.nodes(pts[None])
            ahead = np.sign(vel[:, 0]) == np.sign(pts[0])
            return bool(np.sum(w[0][ahead]) > 0)
        theta_p = float(np.arctan2(pts[1], pts[0]))
        if self._speed_is_atomic():
            return bool(self.angular_density(pts)(theta_p) > 0)
        return self.dimensionality_integral(pts) > 1.0

    def dimensionality_integral(self, p) -> float:
        """Continuous-speed 2D value of ``mu * int K / (mu + Hbar - v.p)``.

        The speed integral of a uniform law is done in closed form and the
        angular one by adaptive quadrature (log singularity at ``theta_p``).
        """
        pts = np.asarray(p, dtype=float).reshape(-1)
        norm = float(np.linalg.norm(pts))
        theta_p = float(np.arctan2(pts[1], pts[0]))
        g = self.angular_density(pts)

        def kernel(phi):
            c = np.cos(phi)
            lc = 1.0 if abs(c) < 1e-12 else -np.log1p(-c) / c
            return g(theta_p + phi) * lc

        left, _ = integrate.quad(kernel, -np.pi, 0.0, limit=200)
        right, _ = integrate.quad(kernel, 0.0, np.pi, limit=200)
        return self.mu * (left + right) / (self.max_speed * norm)

    def solve_many(self, ps, check: bool = True) -> np.ndarray:
        pts = _as_points(ps, self.dim)
        if check:
            for q in pts:
                if not self.check_dimensionality(q):
                    raise SingularHamiltonian(f"dimensionality condition fails at p={q}")
        vel, w = self.nodes(pts)
        a = pts @ vel.T
        bound = self.max_speed * np.linalg.norm(pts, axis=1)
        return solve_roots(a, w, self.mu, bound)

    def solve(self, p) -> float:
        return float(self.solve_many(p)[0])

    def _step(self, p: np.ndarray) -> float:
        return 1e-5 * max(1.0, float(np.linalg.norm(p)))

    def grad(self, p) -> np.ndarray:
        p = _as_points(p, self.dim)[0]
        h = self._step(p)
        eye = np.eye(self.dim) * h
        vals = self.solve_many(np.concatenate([p + eye, p - eye]))
        g = (vals[: self.dim] - vals[self.dim:]) / (2.0 * h)
        return g

    def hessian(self, p) -> np.ndarray:
        p = _as_points(p, self.dim)[0]
        h = self._step(p)
        d = self.dim
        eye = np.eye(d) * h
        pts = [p]
        pts += [p + e for e in eye] + [p - e for e in eye]
        pairs = [(i, j) for i in range(d) for j in range(i + 1, d)]
        for i, j in pairs:
            pts += [p + eye[i] + eye[j], p + eye[i] - eye[j], p - eye[i] + eye[j], p - eye[i] - eye[j]]
        vals = self.solve_many(np.array(pts))
        hess = np.empty((d, d))
        for i in range(d):
            hess[i, i] = (vals[1 + i] - 2.0 * vals[0] + vals[1 + d + i]) / h**2
        base = 1 + 2 * d
        for n, (i, j) in enumerate(pairs):
            pp, pm, mp, mm = vals[base + 4 * n: base + 4 * n + 4]
            hess[i, j] = hess[j, i] = (pp - pm - mp + mm) / (4.0 * h**2)
        return hess

    def corrector(self, p) -> np.ndarray:
        """Normalized eigenvector ``Q = K / (mu + H - v.p)`` at covector ``p``."""
        pts, a, w = self.projections(p)
        h = self.solve(pts[0])
        denom = (self.mu - a[0]) + h
        if np.any(denom[w[0] > 0] <= 0):
            raise SingularHamiltonian("nonpositive denominator in the corrector")
        q = np.where(w[0] > 0, w[0] / denom, 0.0)
        return q / q.sum()


class LinearHamiltonian(HamiltonianEvaluator):
    """Hamiltonian of the signal-driven model at the position a kernel was built."""

    def __init__(self, kernel: DiscreteKernel, mu: float = 1.0,
                 speed: Optional[SpeedDistribution] = None):
        self.kernel = kernel
        self.mu = float(mu)
        self.dim = kernel.dim
        self.speed = speed
        self.max_speed = float(speed.max_speed) if speed is not None else kernel.max_speed
        self._vel, self._w = kernel.flat()

    @classmethod
    def from_spec(cls, spec: KernelSpec, signal, x, domain: Optional[Domain1D] = None,
                  mu: float = 1.0, regime: Optional[str] = None) -> "LinearHamiltonian":
        t0 = limit_kernel(spec, signal, x, domain, regime or "nonlocal_hyp").leading
        return cls(t0, mu, spec.speed)

    def nodes(self, points):
        return self._vel, np.broadcast_to(self._w, (len(points), self._w.size))

    def _speed_is_atomic(self) -> bool:
        return self.speed is None or self.speed.atomic

    def angular_density(self, p):
        per_dir = self.kernel.weights.sum(axis=1)
        n = per_dir.size
        dens = per_dir / (2.0 * np.pi / n)
        theta = 2.0 * np.pi * np.arange(n) / n

        def g(t):
            return float(np.interp(np.mod(t, 2.0 * np.pi), theta, dens, period=2.0 * np.pi))
        return g


class AdhesionHamiltonian(HamiltonianEvaluator):
    """Hamiltonian of the adhesion model built on the tilted kernel ``G_R``."""

    def __init__(self, speed: SpeedDistribution, radius: float, mu: float = 1.0,
                 dim: int = 1, n_theta: int = 64):
        self.speed = speed
        self.radius = float(radius)
        self.mu = float(mu)
        self.dim = dim
        self.max_speed = speed.max_speed
        dirs, ang = direction_set(dim, n_theta)
        speeds, _, prob = speed.quadrature(len(dirs))
        self._dirs = dirs
        self._base = ang[:, None] * prob          # (n_dir, n_speed)
        self._vel = (speeds[:, :, None] * dirs[:, None, :]).reshape(-1, dim)

    def tilt_weights(self, points: np.ndarray) -> np.ndarray:
        """Direction weights of ``G_R`` for each covector, shape (n, n_dir, n_speed)."""
        expo = -self.radius * points @ self._dirs.T                 # (n, n_dir)
        expo -= expo.max(axis=1, keepdims=True)
        raw = np.exp(expo)[:, :, None] * self._base[None]
        return raw / raw.sum(axis=(1, 2), keepdims=True)

    def nodes(self, points):
        w = self.tilt_weights(points)
        return self._vel, w.reshape(len(points), -1)

    def _speed_is_atomic(self) -> bool:
        return self.speed.atomic

    def angular_density(self, p):
        p = np.asarray(p, dtype=float)
        rp = self.radius * float(np.linalg.norm(p))
        theta_p = float(np.arctan2(p[1], p[0]))

        def g(t):
            return float(np.exp(-rp * (1.0 + np.cos(t - theta_p))) / (2.0 * np.pi * special.i0e(rp)))
        return g


def scaled_H_nu(kernel: DiscreteKernel, p, nu: float, speed: Optional[SpeedDistribution] = None) -> float:
    """Root of ``1 = nu * sum T0 / (nu + H - v.p)``."""
    return LinearHamiltonian(kernel, mu=nu, speed=speed).solve(p)


def commuting_limit_gaps(kernel: DiscreteKernel, nus, ps) -> np.ndarray:
    """Worst ``|H_nu(p) - quadratic(p)| / |p|^2`` for each ``nu``.

    Speeds are scaled by ``nu`` (small-diffusivity scaling, covariance of
    order ``nu^2``) and the quadratic Hamiltonian is ``U.p + p.(D/nu).p``
    built from the moments of the scaled kernel.
    """
    ps = np.asarray(ps, dtype=float)
    ps = ps[np.linalg.norm(_as_points(ps, kernel.dim), axis=1) > 0]
    pts = _as_points(ps, kernel.dim)
    gaps = []
    for nu in nus:
        scaled = DiscreteKernel(kernel.directions, kernel.speeds * nu, kernel.weights, kernel.x)
        h = LinearHamiltonian(scaled, mu=nu).solve_many(pts)
        mom = kernel_moments(scaled)
        quad = pts @ mom.mean + np.einsum("ni,ij,nj->n", pts, mom.covariance / nu, pts)
        gaps.append(float(np.max(np.abs(h - quad) / np.sum(pts * pts, axis=1))))
    return np.array(gaps)


# ---------------------------------------------------------------------------
# closed 1D forms


def closed_H_linear_1d(x, p, V: float, R: float, sigma: float, center: float,
                       variant: str = "printed", mu: float = 1.0):
    """Closed 1D Hamiltonian for a Gaussian signal and a single speed ``V``.

    ``variant="printed"`` evaluates ``(V^2p^2 + VpD)/(1 + sqrt(1 + 4V^2p^2 + 4VpD))``
    with ``D = tanh(R(x - xbar)/(2 sigma^2))`` (unit rate only).
    ``variant="corrected"`` is the exact root for an unclipped kernel:
    ``H = (-mu + sqrt(mu^2 + 4V^2p^2 + 4 mu V p u))/2`` with the drift ratio
    ``u = tanh(R(xbar - x)/sigma^2)``.
    """
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    if variant == "printed":
        d = np.tanh(R * (x - center) / (2.0 * sigma**2))
        disc = 1.0 + 4.0 * V**2 * p**2 + 4.0 * V * p * d
        if np.any(disc < 0):
            raise FormulaDomainError("negative discriminant")
        out = (V**2 * p**2 + V * p * d) / (1.0 + np.sqrt(disc))
    elif variant == "corrected":
        u = np.tanh(R * (center - x) / sigma**2)
        disc = mu**2 + 4.0 * V**2 * p**2 + 4.0 * mu * V * p * u
        if np.any(disc < 0):
            raise FormulaDomainError("negative discriminant")
        out = 2.0 * (V**2 * p**2 + mu * V * p * u) / (mu + np.sqrt(disc))
    else:
        raise ValueError(f"unknown variant {variant!r}")
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class ZeroReport:
    zeros: tuple            # numerically located zeros of the formula
    stated_zero: float      # the nonzero root as stated alongside the printed formula
    mismatch: bool


def closed_H_linear_1d_zeros(x: float, V: float, R: float, sigma: float, center: float,
                             variant: str = "printed") -> ZeroReport:
    """Locate the zeros of the closed 1D formula and compare with ``-D/(2V)``."""
    def f(q):
        return closed_H_linear_1d(x, q, V, R, sigma, center, variant)

    grid = np.linspace(-2.5 / V, 2.5 / V, 2001)
    grid = grid[grid != 0.0]
    vals = np.array([f(q) for q in grid])
    roots = [0.0]
    for i in np.nonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0)[0]:
        if grid[i] < 0 < grid[i + 1]:
            continue
        roots.append(float(optimize.brentq(f, grid[i], grid[i + 1], xtol=1e-15)))
    d = float(np.tanh(R * (x - center) / (2.0 * sigma**2)))
    stated = -d / (2.0 * V)
    roots = tuple(sorted(roots))
    mismatch = not any(abs(r - stated) < 1e-8 * max(1.0, abs(stated)) for r in roots)
    return ZeroReport(roots, stated, mismatch)


def closed_H_nonlinear_1d(p, V: float, mu: float, R: float):
    """``H = (-mu + sqrt(mu^2 + 4V^2p^2 - 4 mu V p tanh(Rp)))/2``."""
    p = np.asarray(p, dtype=float)
    num = V**2 * p**2 - mu * V * p * np.tanh(R * p)
    disc = mu**2 + 4.0 * num
    assert np.all(disc >= 0), "negative discriminant"
    out = 2.0 * num / (mu + np.sqrt(disc))
    return out if out.ndim else float(out)


def sawtooth_slope(V: float, mu: float, R: float) -> float:
    """Smallest ``p > 0`` with ``V p = mu tanh(R p)`` (unstable regime only)."""
    if V / (mu * R) >= 1.0:
        raise NoPositiveRoot(f"stable regime V/(mu R) = {V / (mu * R):.6g}")
    lo, hi = 0.0, mu / V + 1.0
    while hi - lo > 1e-14 * hi:
        mid = 0.5 * (lo + hi)
        if V * mid - mu * np.tanh(R * mid) < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class StabilityReport:
    ratio: float                 # V / (mu R)
    mean_speed: float
    second_moment: float         # D^2
    hessian: np.ndarray          # D^2_p H(0)
    classification: str          # "stable_convex" | "unstable_convex_concave" | "marginal"
    sawtooth_slope: Optional[float] = None


def stability_report(speed: SpeedDistribution, mu: float, radius: float, dim: int = 1) -> StabilityReport:
    """Classify the homogeneous state of the adhesion model.

    The Hessian at ``p = 0`` is ``(2/d) (D^2/mu - V R) I``; in 1D this is the
    familiar ``2 (D^2/mu - V R)``.
    """
    if speed.direction_dependent:
        v_mean = 0.5 * (speed.mean_speed() + speed.mean_speed(minus=True))
        d2 = 0.5 * (speed.second_moment() + speed.second_moment(minus=True))
    else:
        v_mean, d2 = speed.mean_speed(), speed.second_moment()
    coeff = (2.0 / dim) * (d2 / mu - v_mean * radius)
    hess = coeff * np.eye(dim)
    stable = d2 / v_mean > radius * mu
    # on the boundary the Hessian vanishes and H has no nonzero root
    marginal = bool(np.isclose(d2 / v_mean, radius * mu, rtol=1e-12, atol=0.0))
    slope = None
    if marginal:
        label = "marginal"
    else:
        label = "stable_convex" if stable else "unstable_convex_concave"
    if not stable and not marginal:
        if speed.kind == "dirac" and dim == 1:
            slope = sawtooth_slope(v_mean, mu, radius)
        else:
            slope = adhesion_zero(AdhesionHamiltonian(speed, radius, mu, dim))
    return StabilityReport(v_mean / (mu * radius), v_mean, d2, hess, label, slope)


def adhesion_zero(ham: AdhesionHamiltonian, p_max: Optional[float] = None) -> float:
    """Smallest positive zero of ``H`` along the first axis, located by scan and Brent."""
    p_max = p_max or (ham.mu / max(ham.speed.mean_speed(), 1e-300) + 1.0) * 4.0
    unit = np.zeros(ham.dim)
    unit[0] = 1.0
    grid = np.linspace(0.0, p_max, 4001)[1:]
    vals = ham.solve_many(grid[:, None] * unit, check=False)
    idx = np.nonzero(vals >= 0)[0]
    if idx.size == 0 or idx[0] == 0:
        raise NoPositiveRoot("no sign change of H on the scanned range")
    i = idx[0]
    return float(optimize.brentq(lambda q: ham.solve_many(np.array([q * unit]), check=False)[0],
                                 grid[i - 1], grid[i], xtol=1e-13))
