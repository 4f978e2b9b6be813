import math

import numpy as np
import pytest

from services.exceptions import DegenerateIterateError, DomainError, NumericalError
from services.experiments import draw_equidistant_start
from services.fejer_kernel import second_derivative_at_zero
from services.preconditioned_gd import (
    CSV_HEADER,
    PreconditionerKind,
    build_preconditioner,
    default_a_scale,
    gd_step,
    rate_constants,
    run,
    weighted_error,
)
from services.signal_model import Observation, PsfWeights, SpikeParams, loss, observe

N = 32


def _truth():
    # (n+1) Delta = 16.5 at n = 32
    return SpikeParams(amplitudes=np.array([1.0, 0.8j]), locations=np.array([-0.25, 0.25]))


def _obs(truth):
    return observe(truth, PsfWeights.triangular(N))


def test_invariant_preconditioner():
    precond = build_preconditioner(PreconditionerKind.INVARIANT, np.array([1.0, 2.0j]), N, a_scale=3.0)
    expected = 1.0 / (-second_derivative_at_zero(N) * 9.0)
    np.testing.assert_allclose(precond.amplitude_steps, [1.0, 1.0])
    np.testing.assert_allclose(precond.location_steps, [expected, expected])
    with pytest.raises(DomainError):
        build_preconditioner(PreconditionerKind.INVARIANT, np.array([1.0]), N)
    with pytest.raises(DomainError):
        build_preconditioner('invariant', np.array([1.0]), N, a_scale=-1.0)


def test_adaptive_preconditioner():
    precond = build_preconditioner(PreconditionerKind.ADAPTIVE, np.array([1.0, 2.0j]), N)
    curvature = -second_derivative_at_zero(N)
    np.testing.assert_allclose(precond.location_steps, [1.0 / curvature, 1.0 / (4.0 * curvature)])
    assert precond.r == 2
    with pytest.raises(DegenerateIterateError):
        build_preconditioner(PreconditionerKind.ADAPTIVE, np.array([1.0, 0.0]), N, iteration=7)


def test_weighted_error():
    truth = _truth()
    assert weighted_error(truth, truth, N) == 0.0
    moved = SpikeParams(amplitudes=truth.amplitudes * np.array([1.1, 1.0]), locations=truth.locations)
    assert weighted_error(moved, truth, N) == pytest.approx(0.1)


def test_weighted_error_across_the_boundary():
    truth = SpikeParams(amplitudes=[1.0], locations=[-0.4999])
    estimate = SpikeParams(amplitudes=[1.0], locations=[0.4999])
    scale = math.sqrt(-second_derivative_at_zero(N))
    assert weighted_error(estimate, truth, N) == pytest.approx(scale * 2e-4, rel=1e-6)


def test_step_decreases_loss_near_truth():
    truth = _truth()
    obs = _obs(truth)
    start = draw_equidistant_start(truth, N, 0.3, np.random.default_rng(0))
    precond = build_preconditioner(PreconditionerKind.ADAPTIVE, start.amplitudes, N)
    assert loss(gd_step(start, obs, precond), obs) < loss(start, obs)


def test_run_from_truth_stops_immediately():
    truth = _truth()
    trace = run(truth, _obs(truth), PreconditionerKind.ADAPTIVE, truth=truth)
    assert trace.converged
    assert trace.iterations_run == 0
    assert len(trace.csv_rows()) == 1


@pytest.mark.parametrize('kind', list(PreconditionerKind))
def test_run_converges_from_nearby_start(kind):
    truth = _truth()
    start = draw_equidistant_start(truth, N, 0.2, np.random.default_rng(1))
    trace = run(start, _obs(truth), kind, truth=truth, max_iters=200, a_scale=default_a_scale(truth))
    assert not trace.failed
    assert trace.converged
    assert trace.records[0].weighted_error == pytest.approx(0.2)
    assert trace.records[-1].weighted_error <= 1e-12
    assert len(trace.csv_rows()) == trace.iterations_run + 1
    assert all(len(row) == len(CSV_HEADER) for row in trace.csv_rows())
    assert math.isnan(trace.records[0].contraction_ratio)


def test_run_without_truth_stops_on_gradient():
    truth = _truth()
    start = draw_equidistant_start(truth, N, 0.1, np.random.default_rng(2))
    trace = run(start, _obs(truth), PreconditionerKind.ADAPTIVE, max_iters=300, tol=1e-9)
    assert trace.converged
    assert np.all(np.isnan(trace.weighted_errors))
    assert weighted_error(trace.final_params, truth, N) < 1e-6


def test_run_rejects_bad_arguments():
    truth = _truth()
    obs = _obs(truth)
    with pytest.raises(DomainError):
        run(truth, obs, PreconditionerKind.ADAPTIVE, max_iters=0)
    with pytest.raises(DomainError):
        run(truth, obs, PreconditionerKind.ADAPTIVE, tol=0.0)
    with pytest.raises(DomainError):
        run(truth, obs, PreconditionerKind.INVARIANT, truth=truth)
    single = SpikeParams(amplitudes=[1.0], locations=[0.0])
    with pytest.raises(DomainError):
        run(single, obs, PreconditionerKind.ADAPTIVE, truth=truth)


def test_rate_constants():
    truth = _truth()
    a_scale = default_a_scale(truth)
    rates = rate_constants(truth, N, a_scale)
    spread = 16.5 ** -2
    assert a_scale == pytest.approx(1.5)
    assert rates.gamma == pytest.approx(11.60 * 1.25 * spread)
    assert rates.predicted_rate_adaptive == pytest.approx(0.5 + rates.gamma)
    assert rates.adaptive_hypotheses_hold
    assert rates.eta == pytest.approx(276.21 * 2.25 / 0.8 ** 3 * spread)
    assert rates.predicted_rate_fixed == pytest.approx(1 - 0.25 * (0.8 / 1.5) ** 2 * (1 - rates.eta))
    assert not rates.fixed_hypotheses_hold


def test_rate_constants_without_a_scale():
    rates = rate_constants(_truth(), N)
    assert rates.eta is None
    assert rates.predicted_rate_fixed is None
    with pytest.raises(DomainError):
        rate_constants(SpikeParams(amplitudes=[1.0], locations=[0.0]), N)


@pytest.mark.parametrize('kind', list(PreconditionerKind))
def test_single_spike_amplitude_recovered_in_one_step(kind):
    truth = SpikeParams(amplitudes=[1.5 * np.exp(0.7j)], locations=[0.2])
    start = SpikeParams(amplitudes=[0.3 + 0.1j], locations=[0.2])
    precond = build_preconditioner(kind, start.amplitudes, N, a_scale=default_a_scale(truth))
    step = gd_step(start, _obs(truth), precond)
    np.testing.assert_allclose(step.amplitudes, truth.amplitudes, atol=1e-12)
    np.testing.assert_allclose(step.locations, truth.locations, atol=1e-12)


def test_adaptive_iterates_are_scale_equivariant():
    truth = _truth()
    obs = _obs(truth)
    start = draw_equidistant_start(truth, N, 0.3, np.random.default_rng(4))
    c = 2.5 * np.exp(-1.1j)
    scaled_obs = Observation(samples=c * obs.samples, psf=obs.psf)
    scaled_start = SpikeParams(amplitudes=c * start.amplitudes, locations=start.locations)

    plain = run(start, obs, PreconditionerKind.ADAPTIVE, max_iters=8, tol=1e-300)
    scaled = run(scaled_start, scaled_obs, PreconditionerKind.ADAPTIVE, max_iters=8, tol=1e-300)
    assert plain.iterations_run == scaled.iterations_run == 8
    np.testing.assert_allclose(scaled.final_params.amplitudes, c * plain.final_params.amplitudes, atol=1e-10)
    np.testing.assert_allclose(scaled.final_params.locations, plain.final_params.locations, atol=1e-12)


def test_step_failures_abort_the_run_but_bugs_propagate(monkeypatch):
    truth = _truth()
    start = draw_equidistant_start(truth, N, 0.2, np.random.default_rng(1))

    def singular_step(params, obs, precond):
        raise NumericalError('singular preconditioner')

    monkeypatch.setattr('services.preconditioned_gd.gd_step', singular_step)
    trace = run(start, _obs(truth), PreconditionerKind.ADAPTIVE, truth=truth)
    assert trace.failed
    assert 'singular preconditioner' in trace.failure_reason

    def broken_step(params, obs, precond):
        raise TypeError('unexpected argument')

    monkeypatch.setattr('services.preconditioned_gd.gd_step', broken_step)
    with pytest.raises(TypeError):
        run(start, _obs(truth), PreconditionerKind.ADAPTIVE, truth=truth)
