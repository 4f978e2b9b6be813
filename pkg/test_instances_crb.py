import math

import numpy as np
import pytest

from services.crb import crb, observation_jacobian
from services.exceptions import DomainError, NumericalError
from services.fejer_kernel import second_derivative_at_zero
from services.instances import (
    InstanceSpec,
    NoiseSpec,
    add_noise,
    db_to_linear,
    gen_instance,
    make_rng,
    noise_variance,
)
from services.signal_model import PsfWeights, SpikeParams, observe, wraparound_separation


def test_instance_respects_separation_and_annulus():
    spec = InstanceSpec(n=40, r=5, kappa=4.0, min_sep_scaled=3.0)
    for seed in range(5):
        truth = gen_instance(spec, make_rng(seed))
        assert truth.r == 5
        assert wraparound_separation(truth.locations).scaled(40) >= 3.0
        moduli = np.abs(truth.amplitudes)
        assert np.all((moduli >= 1.0) & (moduli <= 4.0))
        assert np.all(np.diff(truth.locations) > 0)


def test_instance_is_reproducible():
    spec = InstanceSpec(n=24, r=3, kappa=2.0, min_sep_scaled=2.0, seed=9)
    first, second = gen_instance(spec), gen_instance(spec)
    np.testing.assert_array_equal(first.amplitudes, second.amplitudes)
    np.testing.assert_array_equal(first.locations, second.locations)
    other = gen_instance(spec, make_rng([9, 1]))
    assert not np.array_equal(first.locations, other.locations)


def test_instance_spec_validation():
    invalid = [
        dict(n=1),
        dict(r=0),
        dict(kappa=0.5),
        dict(min_sep_scaled=-1.0),
        dict(n=10, r=6, min_sep_scaled=2.0),
    ]
    for kwargs in invalid:
        with pytest.raises(DomainError):
            InstanceSpec(**kwargs)


def test_db_to_linear():
    assert db_to_linear(20.0) == pytest.approx(100.0)
    assert db_to_linear(0.0) == 1.0
    assert db_to_linear(math.inf) == math.inf
    with pytest.raises(DomainError):
        NoiseSpec(snr=0.0)


def test_noise_hits_target_snr_exactly():
    truth = SpikeParams(amplitudes=[1.0, -0.5j], locations=[-0.2, 0.3])
    clean = observe(truth, PsfWeights.triangular(20))
    noisy = add_noise(clean, NoiseSpec(snr=db_to_linear(15.0)), make_rng(4))
    noise = noisy.samples - clean.samples
    assert clean.energy() / np.vdot(noise, noise).real == pytest.approx(db_to_linear(15.0), rel=1e-10)
    assert add_noise(clean, NoiseSpec()) is clean
    assert noise_variance(clean, 10.0) == pytest.approx(clean.energy() / (41 * 10.0))
    assert noise_variance(clean, math.inf) == 0.0


def test_single_spike_crb_closed_form():
    n = 16
    sigma2 = 0.01
    truth = SpikeParams(amplitudes=[2.0 * np.exp(0.3j)], locations=[0.1])
    report = crb(truth, PsfWeights.triangular(n), sigma2)
    curvature = -second_derivative_at_zero(n)
    np.testing.assert_allclose(
        report.variances,
        [sigma2 / 2, sigma2 / 2, sigma2 / (2 * 4.0 * curvature)],
        rtol=1e-9,
    )
    assert report.amplitude_bounds[0] == pytest.approx(math.sqrt(sigma2) / 2.0)
    assert report.location_bounds[0] == pytest.approx(math.sqrt(sigma2 / 8.0))
    assert report.weighted_benchmark == pytest.approx(math.sqrt(sigma2) / 2.0)
    assert report.r == 1


def test_crb_scales_with_noise_variance():
    truth = SpikeParams(amplitudes=[1.0, 2.0j, -1.2], locations=[-0.3, 0.05, 0.33])
    psf = PsfWeights.triangular(24)
    low = crb(truth, psf, 1e-4)
    high = crb(truth, psf, 4e-4)
    np.testing.assert_allclose(high.variances, 4.0 * low.variances, rtol=1e-9)
    assert high.weighted_benchmark == pytest.approx(2.0 * low.weighted_benchmark)
    assert observation_jacobian(truth, psf).shape == (49, 9)


def test_crb_noiseless_and_singular():
    truth = SpikeParams(amplitudes=[1.0, 1.0], locations=[0.1, 0.4])
    psf = PsfWeights.triangular(12)
    assert crb(truth, psf, 0.0).weighted_benchmark == 0.0
    collided = SpikeParams(amplitudes=[1.0, 1.0], locations=[0.1, 0.1])
    with pytest.raises(NumericalError):
        crb(collided, psf, 1e-3)
    with pytest.raises(NumericalError):
        crb(collided, psf, 0.0)


def test_crb_is_invariant_under_global_phase():
    truth = SpikeParams(amplitudes=[1.0, 2.0j, -1.2 + 0.5j], locations=[-0.3, 0.05, 0.33])
    rotated = SpikeParams(amplitudes=truth.amplitudes * np.exp(0.7j), locations=truth.locations)
    psf = PsfWeights.triangular(24)
    base, turned = crb(truth, psf, 1e-3), crb(rotated, psf, 1e-3)
    np.testing.assert_allclose(turned.amplitude_bounds, base.amplitude_bounds, rtol=1e-9)
    np.testing.assert_allclose(turned.location_bounds, base.location_bounds, rtol=1e-9)
    assert turned.weighted_benchmark == pytest.approx(base.weighted_benchmark, rel=1e-9)
