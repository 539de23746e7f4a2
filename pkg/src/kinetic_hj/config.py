"""INI experiment configuration with a strict schema.

Every section and key is declared in ``SCHEMA``; anything else is a
``ConfigError`` naming the offending field.  A ``[sweep]`` section holds
``section.key = v1, v2, ...`` axes plus ``mode = product | zip``.
"""

from __future__ import annotations

import configparser
import copy
import io
import itertools
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

from .errors import ConfigError
from .kinetic_solver import BoundarySpec, InitialCondition, KineticConfig
from .signals_kernels import (BimodalSignal, ConstantSignal, Domain1D, GaussianSignal,
                              KernelSpec, SpeedDistribution)

SOLVERS = ("kinetic", "macro", "hj", "eikonal", "hamiltonian", "analyze")


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _floats(text: str) -> tuple:
    return tuple(float(t) for t in text.replace(",", " ").split())


def _opt_float(text: str) -> Optional[float]:
    return None if text.strip().lower() in ("", "none") else float(text)


def _choice(*options):
    def parse(text: str) -> str:
        if text not in options:
            raise ValueError(f"expected one of {options}, got {text!r}")
        return text
    return parse


# section -> key -> (parser, default)
SCHEMA: dict[str, dict[str, tuple]] = {
    "experiment": {
        "solver": (_choice(*SOLVERS), "kinetic"),
        "name": (str, "run"),
        "seed": (int, 0),
    },
    "domain": {
        "x_min": (float, 0.0),
        "x_max": (float, 1.0),
        "n_cells": (int, 1000),
        "periodic": (_bool, False),
    },
    "speed": {
        "kind": (_choice("dirac", "uniform", "custom"), "dirac"),
        "speed": (float, 1.0),
        "speed_minus": (_opt_float, None),
        "n_nodes": (int, 8),
        "nodes": (_floats, ()),
        "weights": (_floats, ()),
    },
    "kernel": {
        "radius": (float, 0.01),
        "stability_ratio": (_opt_float, None),
        "sensing": (_choice("linear", "comparative", "adhesion"), "linear"),
        "regime": (_choice("physical", "local_hyp", "nonlocal_hyp", "small_R_expansion"), "physical"),
        "alpha": (float, 1.0),
        "beta": (float, 0.0),
        "k": (float, 1.0),
        "fast_adaptation": (_bool, False),
        "mu": (float, 1.0),
    },
    "signal": {
        "kind": (_choice("gaussian", "bimodal", "constant", "none"), "none"),
        "amplitude": (float, 1.0),
        "center": (float, 0.5),
        "sigma": (float, 0.05),
        "amplitude2": (float, 1.0),
        "center2": (float, 0.5),
        "sigma2": (float, 0.05),
        "value": (float, 1.0),
    },
    "initial": {
        "kind": (_choice("constant", "gaussian", "bimodal", "perturbed"), "constant"),
        "value": (float, 1.0),
        "center": (float, 0.5),
        "sigma": (float, 0.1),
        "center2": (float, 0.5),
        "sigma2": (float, 0.1),
        "background": (float, 0.0),
        "amplitude": (float, 1e-2),
        "wavenumber": (int, 0),
        "modes": (int, 16),
    },
    "boundary": {
        "kind": (_choice("periodic", "maxwellian"), "maxwellian"),
        "alpha": (float, 0.0),
        "reflection": (_choice("bounce_back", "specular"), "bounce_back"),
    },
    "time": {
        "t_final": (_opt_float, None),
        "t_cap": (float, 1e6),
        "stationary_tol": (float, 1e-6),
        "n_outputs": (int, 200),
        "cfl": (float, 0.9),
    },
    "macro": {
        "model": (_choice("hyperbolic_order1", "pure_conservation", "diffusive_nonlocal",
                          "diffusive_local", "keller_segel", "nonlinear"), "pure_conservation"),
        "eps": (float, 0.0),
        "correction": (_bool, True),
    },
    "hj": {
        "hamiltonian": (_choice("adhesion", "tabulated_adhesion", "linear"), "adhesion"),
        "initial_phase": (_choice("kinetic", "random", "density"), "kinetic"),
        "phase_amplitude": (float, 1e-2),
        "warmup": (float, 10.0),
        "t_final": (float, 1.0),
        "p_max": (_opt_float, None),
        "constrain_minima": (_bool, True),
        "n_outputs": (int, 50),
    },
    "hamiltonian": {
        "model": (_choice("adhesion", "linear"), "adhesion"),
        "p_min": (float, -200.0),
        "p_max": (float, 200.0),
        "n_p": (int, 401),
        "positions": (_floats, (0.5,)),
    },
    "analyze": {
        "source": (str, ""),
        "eps": (float, 1.0),
    },
}


@dataclass
class ExperimentConfig:
    values: dict                            # section -> key -> parsed value
    sweep: dict = field(default_factory=dict)   # "section.key" -> list of raw strings
    sweep_mode: str = "product"
    raw: dict = field(default_factory=dict)     # section -> key -> raw string (as given)

    def __getitem__(self, section: str) -> dict:
        return self.values[section]

    @property
    def solver(self) -> str:
        return self.values["experiment"]["solver"]

    # --- builders -------------------------------------------------------

    def domain(self) -> Domain1D:
        d = self.values["domain"]
        periodic = d["periodic"] or self.values["boundary"]["kind"] == "periodic"
        return Domain1D(d["x_min"], d["x_max"], d["n_cells"], periodic)

    def speed(self) -> SpeedDistribution:
        s = self.values["speed"]
        if s["kind"] == "dirac":
            return SpeedDistribution.dirac(s["speed"], s["speed_minus"])
        if s["kind"] == "uniform":
            return SpeedDistribution.uniform(s["speed"], s["n_nodes"])
        return SpeedDistribution.custom(s["nodes"], s["weights"])

    @property
    def mu(self) -> float:
        return self.values["kernel"]["mu"]

    def radius(self) -> float:
        k = self.values["kernel"]
        if k["stability_ratio"] is not None:
            return self.speed().mean_speed() / (self.mu * k["stability_ratio"])
        return k["radius"]

    def kernel_spec(self) -> KernelSpec:
        k = self.values["kernel"]
        return KernelSpec(self.radius(), self.speed(), sensing=k["sensing"], regime=k["regime"],
                          alpha=k["alpha"], beta=k["beta"], k=k["k"],
                          fast_adaptation=k["fast_adaptation"])

    def signal(self):
        s = self.values["signal"]
        if s["kind"] == "gaussian":
            return GaussianSignal(s["amplitude"], s["center"], s["sigma"])
        if s["kind"] == "bimodal":
            return BimodalSignal(s["amplitude"], s["center"], s["sigma"],
                                 s["amplitude2"], s["center2"], s["sigma2"])
        if s["kind"] == "constant":
            return ConstantSignal(s["value"])
        return None

    def initial(self) -> InitialCondition:
        return InitialCondition(**self.values["initial"])

    def boundary(self) -> BoundarySpec:
        b = self.values["boundary"]
        if b["kind"] == "periodic" or self.values["domain"]["periodic"]:
            return BoundarySpec("periodic")
        return BoundarySpec("maxwellian", b["alpha"], b["reflection"])

    def kinetic_config(self, seed: Optional[int] = None) -> KineticConfig:
        t = self.values["time"]
        spec = self.kernel_spec()
        signal = self.signal()
        if spec.sensing != "adhesion" and signal is None:
            raise ConfigError("signal.kind: a signal is required unless kernel.sensing = adhesion")
        return KineticConfig(self.domain(), spec, self.mu, self.initial(), signal=signal,
                             bc=self.boundary(), t_final=t["t_final"], t_cap=t["t_cap"],
                             stationary_tol=t["stationary_tol"], n_outputs=t["n_outputs"],
                             cfl=t["cfl"], seed=self.values["experiment"]["seed"] if seed is None else seed)

    # --- sweep expansion ------------------------------------------------

    def expand(self) -> list:
        """Concrete configs for every sweep point (a single one without sweep)."""
        if not self.sweep:
            return [self]
        keys = list(self.sweep)
        lists = [self.sweep[k] for k in keys]
        if self.sweep_mode == "zip":
            if len({len(v) for v in lists}) != 1:
                raise ConfigError("sweep: zip mode needs axes of equal length")
            points = list(zip(*lists))
        else:
            points = list(itertools.product(*lists))
        out = []
        for point in points:
            raw = copy.deepcopy(self.raw)
            for key, value in zip(keys, point):
                section, name = key.split(".", 1)
                raw.setdefault(section, {})[name] = value
            out.append(from_mapping(raw))
        return out

    def sweep_point(self, other: "ExperimentConfig") -> dict:
        return {k: other.raw.get(k.split(".", 1)[0], {}).get(k.split(".", 1)[1]) for k in self.sweep}

    def resolved(self) -> dict:
        """Plain JSON-ready echo of every parsed value."""
        def plain(v: Any):
            if isinstance(v, tuple):
                return list(v)
            if isinstance(v, np.generic):
                return v.item()
            return v
        return {s: {k: plain(v) for k, v in kv.items()} for s, kv in self.values.items()}

    def to_ini(self) -> str:
        parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
        parser.optionxform = str
        for section, kv in self.raw.items():
            parser[section] = dict(kv)
        if self.sweep:
            parser["sweep"] = {"mode": self.sweep_mode, **{k: ", ".join(v) for k, v in self.sweep.items()}}
        buf = io.StringIO()
        parser.write(buf)
        return buf.getvalue()


def from_mapping(raw: dict) -> ExperimentConfig:
    values: dict = {}
    for section, keys in SCHEMA.items():
        given = raw.get(section, {})
        values[section] = {}
        for key, (parse, default) in keys.items():
            if key in given:
                try:
                    values[section][key] = parse(given[key])
                except (TypeError, ValueError) as exc:
                    raise ConfigError(f"{section}.{key}: {exc}") from None
            else:
                values[section][key] = default
        for key in given:
            if key not in keys:
                raise ConfigError(f"{section}.{key}: unknown key")
    for section in raw:
        if section not in SCHEMA:
            raise ConfigError(f"[{section}]: unknown section")
    cfg = ExperimentConfig(values, raw=copy.deepcopy(raw))
    _validate(cfg)
    return cfg


def _validate(cfg: ExperimentConfig) -> None:
    d = cfg["domain"]
    if not d["x_max"] > d["x_min"]:
        raise ConfigError("domain.x_max: must exceed domain.x_min")
    if d["n_cells"] < 2:
        raise ConfigError("domain.n_cells: must be at least 2")
    positive = [("kernel", "mu"), ("speed", "speed"), ("time", "t_cap"), ("time", "cfl"),
                ("hj", "t_final")]
    for section, key in positive:
        if not cfg[section][key] > 0:
            raise ConfigError(f"{section}.{key}: must be positive")
    if cfg["kernel"]["radius"] < 0:
        raise ConfigError("kernel.radius: must be nonnegative")
    if cfg["time"]["t_final"] is not None and cfg["time"]["t_final"] <= 0:
        raise ConfigError("time.t_final: must be positive")
    if cfg["time"]["n_outputs"] < 1:
        raise ConfigError("time.n_outputs: must be at least 1")
    if not 0.0 <= cfg["boundary"]["alpha"] <= 1.0:
        raise ConfigError("boundary.alpha: must lie in [0, 1]")
    ratio = cfg["kernel"]["stability_ratio"]
    if ratio is not None and ratio <= 0:
        raise ConfigError("kernel.stability_ratio: must be positive")
    if cfg["hamiltonian"]["n_p"] < 2 or not cfg["hamiltonian"]["p_max"] > cfg["hamiltonian"]["p_min"]:
        raise ConfigError("hamiltonian.p_max: need p_max > p_min and n_p >= 2")
    try:
        cfg.kernel_spec()
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"kernel: {exc}") from None


def parse_text(text: str) -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"unreadable config: {exc}") from None
    raw = {s: dict(parser[s]) for s in parser.sections()}
    sweep_raw = raw.pop("sweep", {})
    mode = sweep_raw.pop("mode", "product")
    if mode not in ("product", "zip"):
        raise ConfigError("sweep.mode: expected product or zip")
    sweep = {}
    for key, text_values in sweep_raw.items():
        if "." not in key:
            raise ConfigError(f"sweep.{key}: axes are written section.key")
        section, name = key.split(".", 1)
        if section not in SCHEMA or name not in SCHEMA[section]:
            raise ConfigError(f"sweep.{key}: unknown field")
        sweep[key] = [v.strip() for v in text_values.split(",") if v.strip()]
        if not sweep[key]:
            raise ConfigError(f"sweep.{key}: no values")
    cfg = from_mapping(raw)
    cfg.sweep, cfg.sweep_mode = sweep, mode
    if sweep:
        cfg.expand()   # validates every point up front
    return cfg


def load(path) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_text(text)
