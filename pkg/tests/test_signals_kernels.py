import numpy as np
import pytest

from kinetic_hj.errors import DegenerateKernel, ExpansionInvalid, InvalidDomain, InvalidSignal
from kinetic_hj.signals_kernels import (BimodalSignal, ConstantSignal, Domain1D, GaussianSignal,
                                        KernelSpec, SampledSignal, SpeedDistribution, build_kernel,
                                        clipped_radius, eval_signal, kernel_moments, kernel_weights,
                                        limit_kernel, signal_variation_length, uniform_kernel)

UNIT = Domain1D(0.0, 1.0, 1000)
PEAKED = GaussianSignal(1.0, 1.0, 0.05)


def test_domain_validation():
    with pytest.raises(InvalidDomain):
        Domain1D(1.0, 1.0, 10)
    with pytest.raises(InvalidDomain):
        Domain1D(0.0, 1.0, 1)
    assert UNIT.dx == pytest.approx(1e-3)


def test_gaussian_values():
    assert eval_signal(PEAKED, 1.0) == 1.0
    assert eval_signal(PEAKED, 0.95) == pytest.approx(np.exp(-0.5), abs=1e-12)
    assert eval_signal(PEAKED, 0.95) == pytest.approx(0.60653, abs=1e-5)


def test_bimodal_midpoint_symmetry():
    sig = BimodalSignal(1.0, 0.3, 0.05, 1.0, 0.7, 0.05)
    a, b = sig.modes
    assert a(0.5) == pytest.approx(b(0.5), rel=1e-14)
    assert sig(0.5) == pytest.approx(2 * a(0.5))


def test_nonpositive_signal_rejected():
    with pytest.raises(InvalidSignal):
        eval_signal(ConstantSignal(0.0), 0.3)
    with pytest.raises(InvalidSignal):
        eval_signal(PEAKED, np.nan)


def test_sampled_signal_clamps():
    dom = Domain1D(0.0, 1.0, 10)
    sig = SampledSignal.on_grid(dom, np.linspace(1.0, 2.0, 10))
    assert eval_signal(sig, -5.0) == pytest.approx(1.0)
    assert eval_signal(sig, 5.0) == pytest.approx(2.0)


def test_variation_length():
    assert signal_variation_length(ConstantSignal(2.0), UNIT) == np.inf
    # the maximum over cell centers sits half a cell inside the wall
    assert signal_variation_length(PEAKED, UNIT) == pytest.approx(0.05**2 / 0.9995, rel=1e-12)
    assert signal_variation_length(PEAKED, UNIT) == pytest.approx(0.0025, rel=2e-3)
    wide = GaussianSignal(1.0, 0.5, 0.1)
    assert signal_variation_length(wide, UNIT) == pytest.approx(0.01 / 0.4995, rel=1e-12)
    assert signal_variation_length(wide, UNIT) == pytest.approx(0.02, rel=2e-3)


def test_clipped_radius():
    assert clipped_radius(UNIT, 0.5, 1, 0.01) == pytest.approx(0.01)
    assert clipped_radius(UNIT, 0.9, 1, 0.4) == pytest.approx(0.1)
    assert clipped_radius(UNIT, 1.0, 1, 0.4) == 0.0
    assert clipped_radius(UNIT, 0.05, -1, 0.4) == pytest.approx(0.05)
    ring = Domain1D(0.0, 1.0, 10, periodic=True)
    assert clipped_radius(ring, 0.99, 1, 0.4) == 0.4


def test_constant_field_gives_uniform_kernel():
    spec = KernelSpec(0.05, SpeedDistribution.uniform(2.0, 4))
    k = build_kernel(spec, ConstantSignal(3.0), 0.4, UNIT)
    np.testing.assert_allclose(k.weights, uniform_kernel(spec).weights, atol=1e-15)
    assert kernel_moments(k).mean[0] == pytest.approx(0.0, abs=1e-15)


def test_gaussian_direction_ratio_and_drift():
    spec = KernelSpec(0.01, SpeedDistribution.dirac(1.0))
    k = build_kernel(spec, PEAKED, 0.5, UNIT)
    w_plus, w_minus = k.weights[0, 0], k.weights[1, 0]
    assert w_plus / w_minus == pytest.approx(np.exp(4.0), rel=1e-12)
    assert kernel_moments(k).mean[0] == pytest.approx(np.tanh(2.0), rel=1e-12)
    assert kernel_moments(k).mean[0] == pytest.approx(0.96403, abs=1e-5)


def test_dirac_balanced_variance():
    spec = KernelSpec(0.0, SpeedDistribution.dirac(3.0))
    m = kernel_moments(uniform_kernel(spec))
    assert m.covariance[0, 0] == pytest.approx(9.0)


def test_comparative_without_bias_is_uniform():
    spec = KernelSpec(0.1, SpeedDistribution.dirac(1.0), sensing="comparative", alpha=1.0, beta=0.0)
    k = build_kernel(spec, PEAKED, 0.7, UNIT)
    np.testing.assert_allclose(k.weights, [[0.5], [0.5]], atol=1e-15)


def test_comparative_positivity_enforced():
    with pytest.raises(ValueError):
        KernelSpec(0.1, sensing="comparative", alpha=1.0, beta=2.0)


def test_degenerate_adhesion_field():
    spec = KernelSpec(0.1, sensing="adhesion")
    with pytest.raises(DegenerateKernel):
        build_kernel(spec, lambda x: np.zeros_like(x), 0.5, UNIT)


def test_limit_kernels():
    spec = KernelSpec(0.001, SpeedDistribution.dirac(1.0))
    local = limit_kernel(spec, PEAKED, 0.5, UNIT, "local_hyp").leading
    np.testing.assert_allclose(local.weights, [[0.5], [0.5]])
    nonlocal_ = limit_kernel(spec, PEAKED, 0.5, UNIT, "nonlocal_hyp").leading
    np.testing.assert_array_equal(nonlocal_.weights, build_kernel(spec, PEAKED, 0.5, UNIT).weights)
    expansion = limit_kernel(spec, PEAKED, 0.5, UNIT, "small_R_expansion")
    assert abs(expansion.correction.sum()) <= 1e-12


def test_fast_adaptation_limit():
    spec = KernelSpec(0.01, SpeedDistribution.dirac(1.0), sensing="comparative",
                      alpha=1.0, beta=0.5, k=1.0, fast_adaptation=True)
    k = limit_kernel(spec, PEAKED, 0.9, UNIT, "local_hyp").leading
    grad = float(PEAKED.gradient(0.9))
    s = float(PEAKED(0.9))
    raw = np.array([1.0 + 0.5 * 0.01 * grad / (1.0 + s), 1.0 - 0.5 * 0.01 * grad / (1.0 + s)])
    np.testing.assert_allclose(k.weights[:, 0], raw / raw.sum(), rtol=1e-13)


def test_expansion_needs_small_radius():
    spec = KernelSpec(0.01, SpeedDistribution.dirac(1.0))
    with pytest.raises(ExpansionInvalid):
        limit_kernel(spec, PEAKED, 0.5, UNIT, "small_R_expansion")


def test_weights_normalized_on_grid():
    spec = KernelSpec(0.4, SpeedDistribution.uniform(5e-5, 8))
    sig = BimodalSignal(1.0, 0.1, 0.03, 1.0, 0.6, 0.03)
    w = kernel_weights(spec, sig, UNIT.centers, UNIT)
    assert np.all(w >= 0)
    np.testing.assert_allclose(w.sum(axis=(1, 2)), 1.0, atol=1e-12)


def test_drift_antisymmetric_about_signal_peak():
    dom = Domain1D(0.0, 1.0, 200)
    sig = GaussianSignal(1.0, 0.5, 0.1)
    spec = KernelSpec(0.02, SpeedDistribution.dirac(1.0))
    for h in (0.013, 0.1, 0.37):
        up = kernel_moments(build_kernel(spec, sig, 0.5 + h, dom)).mean[0]
        down = kernel_moments(build_kernel(spec, sig, 0.5 - h, dom)).mean[0]
        assert up == pytest.approx(-down, abs=1e-13)


def test_two_dimensional_kernel():
    spec = KernelSpec(0.1, SpeedDistribution.dirac(1.0), dim=2, n_theta=64)
    sig = GaussianSignal(1.0, (1.0, 0.0), 0.5)
    k = build_kernel(spec, sig, (0.0, 0.0))
    assert k.weights.sum() == pytest.approx(1.0, abs=1e-12)
    m = kernel_moments(k)
    assert m.mean[0] > 0 and abs(m.mean[1]) < 1e-12
    assert np.all(np.linalg.eigvalsh(m.covariance) >= -1e-14)
