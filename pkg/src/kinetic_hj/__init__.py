"""Velocity-jump kinetic models with nonlocal sensing, their Hamilton-Jacobi
limits and aggregate equations."""

__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .signals_kernels import (BimodalSignal, ConstantSignal, Domain1D, GaussianSignal,  # noqa: F401
                              KernelSpec, SampledSignal, SpeedDistribution, build_kernel,
                              clipped_radius, eval_signal, kernel_moments, limit_kernel,
                              signal_variation_length)
from .kinetic_solver import (BoundarySpec, InitialCondition, KineticConfig, KineticState,  # noqa: F401
                             density, relative_entropy, run_kinetic, step_kinetic)
from .effective_hamiltonian import (AdhesionHamiltonian, LinearHamiltonian,  # noqa: F401
                                    closed_H_linear_1d, closed_H_nonlinear_1d, sawtooth_slope,
                                    stability_report)
from .hj_eikonal import PhaseField, hj_boundary, run_hj, step_eikonal, step_hj  # noqa: F401
from .macroscopic import MacroState, keller_segel_step, run_macro, step_macro  # noqa: F401
from .concentration_analysis import (boundary_drift_check, find_peaks, hopf_cole,  # noqa: F401
                                     integrate_peak_ode, sawtooth_extract, singular_points)
