"""Signal fields, speed distributions and nonlocal turning kernels.

A turning kernel is the probability of picking the velocity ``v * vhat`` after a
reorientation at ``x``.  Cells probe a field at ``x + R(x, vhat) vhat``, the
radius being clipped so the probe segment stays inside the domain:

    T(x, v, vhat) = c(x) psi(v | vhat) b(S(x + R(x, vhat) vhat))

where ``c(x)`` normalizes the weights over the velocity quadrature.  In 1D the
direction set is ``{+1, -1}`` (index 0 is ``+1``); in 2D it is a uniform
angular grid.  Velocity integrals are discrete sums over
``(direction, speed-node)`` pairs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .errors import DegenerateKernel, ExpansionInvalid, InvalidDomain, InvalidSignal


@dataclass(frozen=True)
class Domain1D:
    x_min: float
    x_max: float
    n_cells: int
    periodic: bool = False

    def __post_init__(self):
        if not self.x_max > self.x_min:
            raise InvalidDomain("x_max must exceed x_min")
        if self.n_cells < 2:
            raise InvalidDomain("need at least two cells")

    @property
    def length(self) -> float:
        return self.x_max - self.x_min

    @property
    def dx(self) -> float:
        return self.length / self.n_cells

    @property
    def centers(self) -> np.ndarray:
        return self.x_min + (np.arange(self.n_cells) + 0.5) * self.dx

    def wrap(self, x):
        """Map positions back into ``[x_min, x_max)`` on a periodic domain."""
        if not self.periodic:
            return x
        return self.x_min + np.mod(np.asarray(x, dtype=float) - self.x_min, self.length)

    def contains(self, x, tol: float = 1e-12) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all((x >= self.x_min - tol) & (x <= self.x_max + tol)))


# ---------------------------------------------------------------------------
# signals


def _offset(x, center):
    x = np.asarray(x, dtype=float)
    c = np.asarray(center, dtype=float)
    return x - c, c.ndim


@dataclass(frozen=True)
class GaussianSignal:
    amplitude: float = 1.0
    center: Union[float, tuple] = 0.0
    sigma: float = 1.0

    def __call__(self, x):
        d, nd = _offset(x, self.center)
        r2 = d * d if nd == 0 else np.sum(d * d, axis=-1)
        return self.amplitude * np.exp(-r2 / (2.0 * self.sigma**2))

    def log_gradient(self, x):
        d, _ = _offset(x, self.center)
        return -d / self.sigma**2

    def gradient(self, x):
        g = self.log_gradient(x)
        s = np.asarray(self(x))
        return g * (s if np.ndim(self.center) == 0 else s[..., None])


@dataclass(frozen=True)
class BimodalSignal:
    amplitude1: float = 1.0
    center1: Union[float, tuple] = 0.0
    sigma1: float = 1.0
    amplitude2: float = 1.0
    center2: Union[float, tuple] = 1.0
    sigma2: float = 1.0

    @property
    def modes(self) -> tuple[GaussianSignal, GaussianSignal]:
        return (GaussianSignal(self.amplitude1, self.center1, self.sigma1),
                GaussianSignal(self.amplitude2, self.center2, self.sigma2))

    def __call__(self, x):
        a, b = self.modes
        return a(x) + b(x)

    def gradient(self, x):
        a, b = self.modes
        return a.gradient(x) + b.gradient(x)

    def log_gradient(self, x):
        s = np.asarray(self(x))
        g = self.gradient(x)
        return g / (s if np.ndim(self.center1) == 0 else s[..., None])


@dataclass(frozen=True)
class ConstantSignal:
    value: float = 1.0

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.full(x.shape, float(self.value))

    def gradient(self, x):
        return np.zeros(np.shape(x))

    def log_gradient(self, x):
        return np.zeros(np.shape(x))


@dataclass(frozen=True, eq=False)
class SampledSignal:
    """Piecewise-linear field through ``(nodes, values)``.

    Outside the nodes the value is clamped to the nearest endpoint, unless a
    ``period`` is given, in which case the samples are wrapped.
    """

    nodes: np.ndarray
    values: np.ndarray
    period: Optional[float] = None

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if nodes.shape != values.shape or nodes.ndim != 1 or nodes.size < 2:
            raise InvalidSignal("sampled signal needs matching 1D node/value arrays")
        if np.any(np.diff(nodes) <= 0):
            raise InvalidSignal("sample nodes must be strictly increasing")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "values", values)

    @classmethod
    def on_grid(cls, domain: Domain1D, values) -> "SampledSignal":
        return cls(domain.centers, np.asarray(values, dtype=float),
                   domain.length if domain.periodic else None)

    def __call__(self, x):
        return np.interp(x, self.nodes, self.values, period=self.period)

    def gradient(self, x):
        if self.period is None:
            slopes = np.gradient(self.values, self.nodes)
        else:
            ext_x = np.concatenate(([self.nodes[-1] - self.period], self.nodes,
                                    [self.nodes[0] + self.period]))
            ext_v = np.concatenate(([self.values[-1]], self.values, [self.values[0]]))
            slopes = np.gradient(ext_v, ext_x)[1:-1]
        return np.interp(x, self.nodes, slopes, period=self.period)

    def log_gradient(self, x):
        return self.gradient(x) / self(x)


SignalField = Union[GaussianSignal, BimodalSignal, ConstantSignal, SampledSignal]


def eval_signal(signal: SignalField, x):
    """Evaluate ``signal`` at ``x``, insisting on strict positivity."""
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise InvalidSignal("non-finite evaluation point")
    s = np.asarray(signal(x), dtype=float)
    if np.any(~(s > 0)):
        raise InvalidSignal("signal must be strictly positive")
    return s if s.ndim else float(s)


def signal_variation_length(signal: SignalField, domain: Domain1D) -> float:
    """Return ``1 / max |S'/S|`` over cell centers (``inf`` for flat signals)."""
    xc = domain.centers
    s = eval_signal(signal, xc)
    if isinstance(signal, SampledSignal):
        if domain.periodic:
            grad = (np.roll(s, -1) - np.roll(s, 1)) / (2.0 * domain.dx)
        else:
            grad = np.gradient(s, domain.dx)
        rate = np.abs(grad) / s
    else:
        rate = np.abs(np.asarray(signal.log_gradient(xc), dtype=float))
    top = float(np.max(rate))
    return np.inf if top == 0.0 else 1.0 / top


def clipped_radius(domain: Domain1D, x, direction, radius: float):
    """Largest probe length in ``[0, radius]`` keeping ``x + s*direction`` in the domain."""
    if domain.periodic:
        shape = np.broadcast(np.asarray(x), np.asarray(direction)).shape
        return np.full(shape, float(radius)) if shape else float(radius)
    x = np.asarray(x, dtype=float)
    direction = np.asarray(direction, dtype=float)
    if not domain.contains(x):
        raise InvalidDomain("position outside the domain")
    room = np.where(direction > 0, domain.x_max - x,
                    np.where(direction < 0, x - domain.x_min, np.inf))
    out = np.clip(np.minimum(radius, room), 0.0, radius)
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# velocities


@dataclass(frozen=True)
class SpeedDistribution:
    """Speed law ``psi(v | vhat)``.

    ``dirac`` puts all mass at ``speed`` (optionally ``speed_minus`` for the
    ``-1`` direction in 1D), ``uniform`` spreads it on ``[0, speed]`` with a
    Gauss-Legendre rule, ``custom`` lists atoms and probabilities.
    """

    kind: str = "dirac"
    speed: float = 1.0
    speed_minus: Optional[float] = None
    n_nodes: int = 8
    nodes: tuple = ()
    weights: tuple = ()

    def __post_init__(self):
        if self.kind not in ("dirac", "uniform", "custom"):
            raise ValueError(f"unknown speed distribution kind {self.kind!r}")
        if self.kind == "custom":
            w = np.asarray(self.weights, dtype=float)
            v = np.asarray(self.nodes, dtype=float)
            if w.shape != v.shape or w.size == 0:
                raise ValueError("custom speeds need matching nodes and weights")
            if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12 or np.any(v < 0):
                raise ValueError("custom weights must be nonnegative and sum to 1")
        elif self.speed <= 0 or (self.speed_minus is not None and self.speed_minus <= 0):
            raise ValueError("speeds must be positive")
        if self.kind == "uniform" and self.n_nodes < 1:
            raise ValueError("uniform speeds need at least one node")

    @classmethod
    def dirac(cls, speed: float, speed_minus: Optional[float] = None) -> "SpeedDistribution":
        return cls("dirac", speed, speed_minus)

    @classmethod
    def uniform(cls, speed: float, n_nodes: int = 8) -> "SpeedDistribution":
        return cls("uniform", speed, n_nodes=n_nodes)

    @classmethod
    def custom(cls, nodes, weights) -> "SpeedDistribution":
        return cls("custom", float(max(nodes)), nodes=tuple(map(float, nodes)),
                   weights=tuple(map(float, weights)))

    @property
    def atomic(self) -> bool:
        return self.kind != "uniform"

    @property
    def direction_dependent(self) -> bool:
        return self.kind == "dirac" and self.speed_minus is not None and self.speed_minus != self.speed

    def _nodes(self, minus: bool = False):
        if self.kind == "dirac":
            v = self.speed_minus if (minus and self.speed_minus is not None) else self.speed
            return np.array([v]), np.array([1.0]), np.array([1.0])
        if self.kind == "uniform":
            t, w = np.polynomial.legendre.leggauss(self.n_nodes)
            return 0.5 * self.speed * (t + 1.0), 0.5 * self.speed * w, 0.5 * w
        v = np.asarray(self.nodes, dtype=float)
        p = np.asarray(self.weights, dtype=float)
        return v, p.copy(), p

    def quadrature(self, n_directions: int):
        """Return ``(speeds, measure, probability)`` arrays of shape (n_dir, n_speed).

        ``measure`` integrates functions of ``v`` (the kinetic density lives in
        that measure), ``probability`` holds the psi-masses of each node.
        """
        rows = [self._nodes(minus=(n_directions == 2 and i == 1)) for i in range(n_directions)]
        return tuple(np.stack([r[k] for r in rows]) for k in range(3))

    @property
    def max_speed(self) -> float:
        s, _, p = self.quadrature(2)
        if self.kind == "uniform":
            return float(self.speed)
        return float(np.max(np.where(p > 0, s, 0.0)))

    def mean_speed(self, minus: bool = False) -> float:
        v, _, p = self._nodes(minus)
        return float(np.sum(v * p))

    def second_moment(self, minus: bool = False) -> float:
        v, _, p = self._nodes(minus)
        return float(np.sum(v * v * p))


def direction_set(dim: int, n_theta: int = 64):
    """Direction nodes and angular weights summing to |S^{d-1}|."""
    if dim == 1:
        return np.array([[1.0], [-1.0]]), np.array([1.0, 1.0])
    if dim == 2:
        theta = 2.0 * np.pi * np.arange(n_theta) / n_theta
        dirs = np.stack([np.cos(theta), np.sin(theta)], axis=1)
        return dirs, np.full(n_theta, 2.0 * np.pi / n_theta)
    raise ValueError("only d = 1 or d = 2 direction sets are available")


# ---------------------------------------------------------------------------
# kernels


SENSING_KINDS = ("linear", "comparative", "adhesion")
REGIMES = ("physical", "local_hyp", "nonlocal_hyp", "small_R_expansion")


@dataclass(frozen=True)
class KernelSpec:
    radius: float
    speed: SpeedDistribution = field(default_factory=SpeedDistribution)
    sensing: str = "linear"
    regime: str = "physical"
    alpha: float = 1.0
    beta: float = 0.0
    k: float = 1.0
    fast_adaptation: bool = False
    dim: int = 1
    n_theta: int = 64

    def __post_init__(self):
        if self.radius < 0:
            raise ValueError("sensing radius must be nonnegative")
        if self.sensing not in SENSING_KINDS:
            raise ValueError(f"unknown sensing {self.sensing!r}")
        if self.regime not in REGIMES:
            raise ValueError(f"unknown regime {self.regime!r}")
        if self.sensing == "comparative":
            if not (self.alpha > 0 and self.beta >= 0 and self.k > 0 and self.alpha > self.beta):
                raise ValueError("comparative sensing needs alpha > beta >= 0 and k > 0")
        if self.dim not in (1, 2):
            raise ValueError("dim must be 1 or 2")
        if self.dim == 2 and self.speed.direction_dependent:
            raise ValueError("direction-dependent speeds are 1D only")

    def directions(self):
        return direction_set(self.dim, self.n_theta)


@dataclass(frozen=True, eq=False)
class DiscreteKernel:
    directions: np.ndarray   # (n_dir, d)
    speeds: np.ndarray       # (n_dir, n_speed)
    weights: np.ndarray      # (n_dir, n_speed), sums to 1
    x: object = None

    @property
    def dim(self) -> int:
        return self.directions.shape[1]

    @property
    def velocities(self) -> np.ndarray:
        return self.speeds[:, :, None] * self.directions[:, None, :]

    def flat(self):
        """Velocity vectors ``(K, d)`` and weights ``(K,)``."""
        return self.velocities.reshape(-1, self.dim), self.weights.reshape(-1)

    @property
    def max_speed(self) -> float:
        return float(np.max(np.where(self.weights > 0, self.speeds, 0.0)))


@dataclass(frozen=True)
class KernelMoments:
    mean: np.ndarray        # U_S, shape (d,)
    covariance: np.ndarray  # D_S, shape (d, d)


def _probes_1d(spec: KernelSpec, xs, domain: Optional[Domain1D]):
    signs = np.array([1.0, -1.0])
    if domain is None:
        lam = np.full((xs.size, 2), spec.radius)
    else:
        lam = clipped_radius(domain, xs[:, None], signs[None, :], spec.radius)
        lam = np.broadcast_to(lam, (xs.size, 2))
    return signs, lam


def _field_at(field_, pts, domain):
    pts = domain.wrap(pts) if (domain is not None and domain.periodic) else pts
    return np.asarray(field_(pts), dtype=float)


def direction_factors(spec: KernelSpec, field_, xs, domain: Optional[Domain1D] = None) -> np.ndarray:
    """Unnormalized direction weights ``b(...)`` for each position, shape (n_x, n_dir)."""
    dirs, _ = spec.directions()
    if spec.dim == 1:
        xs = np.atleast_1d(np.asarray(xs, dtype=float))
        signs, lam = _probes_1d(spec, xs, domain)
        if spec.sensing == "comparative":
            lam = np.minimum(lam, lam[:, ::-1])
        ahead = _field_at(field_, xs[:, None] + lam * signs, domain)
        if spec.sensing != "comparative":
            return ahead
        behind = _field_at(field_, xs[:, None] - lam * signs, domain)
    else:
        xs = np.atleast_2d(np.asarray(xs, dtype=float))
        ahead = _field_at(field_, xs[:, None, :] + spec.radius * dirs[None], None)
        if spec.sensing != "comparative":
            return ahead
        behind = _field_at(field_, xs[:, None, :] - spec.radius * dirs[None], None)
    return spec.alpha + spec.beta * (behind - ahead) / (2.0 * spec.k + ahead + behind)


def _normalize(raw: np.ndarray) -> np.ndarray:
    total = raw.sum(axis=(-2, -1), keepdims=True)
    if np.any(~(total > 0)):
        raise DegenerateKernel("all sensing weights vanish")
    return raw / total


def kernel_weights(spec: KernelSpec, field_, xs, domain: Optional[Domain1D] = None) -> np.ndarray:
    """Normalized kernel weights at many positions, shape (n_x, n_dir, n_speed)."""
    b = direction_factors(spec, field_, xs, domain)
    if spec.sensing in ("linear", "adhesion") and np.any(b < 0):
        raise InvalidSignal("field must be nonnegative at probe points")
    if spec.sensing == "linear" and np.any(~(b > 0)):
        raise InvalidSignal("signal must be strictly positive at probe points")
    dirs, ang = spec.directions()
    _, _, prob = spec.speed.quadrature(len(dirs))
    return _normalize(b[:, :, None] * ang[None, :, None] * prob[None])


def build_kernel(spec: KernelSpec, field_, x, domain: Optional[Domain1D] = None) -> DiscreteKernel:
    """Turning kernel at one position ``x`` (a scalar in 1D, a 2-vector in 2D)."""
    dirs, _ = spec.directions()
    speeds, _, _ = spec.speed.quadrature(len(dirs))
    pts = np.atleast_1d(float(x)) if spec.dim == 1 else np.asarray(x, dtype=float)[None, :]
    w = kernel_weights(spec, field_, pts, domain)[0]
    return DiscreteKernel(dirs, speeds, w, x)


def uniform_kernel(spec: KernelSpec, x=None) -> DiscreteKernel:
    dirs, ang = spec.directions()
    speeds, _, prob = spec.speed.quadrature(len(dirs))
    w = ang[:, None] * prob / ang.sum()
    return DiscreteKernel(dirs, speeds, w, x)


def kernel_moments(kernel: DiscreteKernel) -> KernelMoments:
    vel, w = kernel.flat()
    mean = w @ vel
    dev = vel - mean
    cov = (dev * w[:, None]).T @ dev
    return KernelMoments(mean, 0.5 * (cov + cov.T))


@dataclass(frozen=True)
class LimitKernel:
    leading: DiscreteKernel
    correction: Optional[np.ndarray] = None  # first-order term, same shape as weights


def limit_kernel(spec: KernelSpec, field_, x, domain: Optional[Domain1D] = None,
                 regime: Optional[str] = None) -> LimitKernel:
    """Leading-order kernel of a scaling regime (plus its first correction if defined)."""
    regime = regime or spec.regime
    if regime in ("physical", "nonlocal_hyp"):
        return LimitKernel(build_kernel(spec, field_, x, domain))
    base = uniform_kernel(spec, x)
    if regime == "local_hyp":
        if spec.sensing == "comparative" and spec.fast_adaptation:
            grad = np.atleast_1d(np.asarray(field_.gradient(x), dtype=float))
            s = float(np.asarray(field_(x)))
            bias = spec.alpha + spec.beta * spec.radius * (base.directions @ grad) / (spec.k + s)
            if np.any(bias <= 0):
                raise DegenerateKernel("fast-adaptation kernel is not positive")
            return LimitKernel(DiscreteKernel(base.directions, base.speeds,
                                              _normalize(base.weights * bias[:, None]), x))
        return LimitKernel(base)
    if regime == "small_R_expansion":
        if domain is not None:
            length = signal_variation_length(field_, domain)
            if spec.radius >= length:
                raise ExpansionInvalid(f"R={spec.radius} is not below l_S={length}")
        rate = np.atleast_1d(np.asarray(field_.log_gradient(x), dtype=float))
        first = base.weights * (spec.radius * (base.directions @ rate))[:, None]
        return LimitKernel(base, first)
    raise ValueError(f"unknown regime {regime!r}")
