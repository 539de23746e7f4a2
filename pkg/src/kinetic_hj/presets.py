"""Built-in experiment configurations (INI text, dumpable and editable)."""

from __future__ import annotations

from .config import ExperimentConfig, parse_text
from .errors import ConfigError

_SIGNAL_RUN = """
[domain]
x_min = 0
x_max = 1
n_cells = 1000

[speed]
kind = uniform
speed = 5e-5

[boundary]
kind = maxwellian
alpha = 0

[time]
t_cap = 2e6
stationary_tol = 1e-6
n_outputs = 200
"""

PRESETS = {
    "fig1": """
[experiment]
name = fig1
solver = kinetic
""" + _SIGNAL_RUN + """
[kernel]
mu = 1
radius = 0.01

[signal]
kind = gaussian
center = 1.0
sigma = 0.05

[initial]
center = 1.5
sigma = 0.3

# constant start, shifted Gaussian start, and the localized variant
# (sensing radius scaled by 1e-5)
[sweep]
mode = zip
initial.kind = constant, gaussian, constant
initial.value = 0.1, 1.0, 0.1
kernel.radius = 0.01, 0.01, 1e-7
""",
    "fig2": """
[experiment]
name = fig2
solver = kinetic
""" + _SIGNAL_RUN + """
[kernel]
mu = 1
radius = 0.4

[signal]
kind = bimodal
center = 0.1
sigma = 0.03
sigma2 = 0.03

[initial]
kind = constant
value = 0.1

# separations 0.2, 0.4 (= R) and 0.5
[sweep]
mode = zip
signal.center2 = 0.3, 0.5, 0.6
""",
    "fig3": """
[experiment]
name = fig3
solver = kinetic
""" + _SIGNAL_RUN + """
[kernel]
mu = 1
radius = 0.4

[signal]
kind = bimodal
sigma = 0.06
sigma2 = 0.03

[initial]
kind = constant
value = 0.1

# separations 0.8 (= 2R) and 0.2 (= R/2)
[sweep]
mode = zip
signal.center = 0.1, 0.4
signal.center2 = 0.9, 0.6
""",
    "adh": """
[experiment]
name = adh
solver = kinetic
seed = 1

[domain]
x_min = 0
x_max = 5
n_cells = 5000
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
value = 1.0
sigma = 0.1
sigma2 = 0.1
amplitude = 1e-2

[time]
t_final = 10
n_outputs = 100

# perturbed homogeneous state, far bimodal, close bimodal
[sweep]
mode = zip
initial.kind = perturbed, bimodal, bimodal
initial.center = 2.3, 2.3, 2.4
initial.center2 = 2.7, 2.7, 2.6
""",
    "stability": """
[experiment]
name = stability
solver = kinetic
seed = 1

[domain]
x_min = 0
x_max = 1
n_cells = 1000
periodic = true

[speed]
kind = dirac
speed = 1

[kernel]
mu = 100
sensing = adhesion

[boundary]
kind = periodic

[initial]
kind = perturbed
value = 1.0
amplitude = 1e-2

[time]
t_final = 10
n_outputs = 20

[sweep]
mode = product
kernel.stability_ratio = 0.2, 0.5, 0.9, 1.1, 2.0
""",
    "hamiltonian-H": """
[experiment]
name = hamiltonian-H
solver = hamiltonian

[speed]
kind = dirac
speed = 1

[kernel]
mu = 100
radius = 0.05
sensing = adhesion

[hamiltonian]
model = adhesion
p_min = -200
p_max = 200
n_p = 401
""",
    "sawtooth": """
[experiment]
name = sawtooth
solver = hj
seed = 1

[domain]
x_min = 0
x_max = 1
n_cells = 1000
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
value = 1.0
amplitude = 1e-2

[hj]
hamiltonian = adhesion
initial_phase = kinetic
warmup = 10
t_final = 5
constrain_minima = true
""",
}


def preset_text(name: str) -> str:
    try:
        return PRESETS[name].lstrip()
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


def preset(name: str) -> ExperimentConfig:
    return parse_text(preset_text(name))
