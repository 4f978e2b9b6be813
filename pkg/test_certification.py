import numpy as np
import pytest

from services.certification import (
    ADAPTIVE_REGIME,
    FIXED_REGIME,
    PUBLISHED_HESSIAN_CONSTANTS,
    REPORT_HEADER,
    ZERO_RESIDUAL_TOLERANCE,
    CheckSummary,
    adaptive_deviation_bound,
    check_adaptive_regime,
    check_contraction,
    check_fixed_regime,
    check_gramian_bound,
    check_residual_derivative_bound,
    draw_adaptive_contraction_trial,
    draw_adaptive_regime_trial,
    draw_fixed_contraction_trial,
    draw_fixed_regime_trial,
    fixed_deviation_bound,
    hessian_constants,
    segment_contraction,
    segment_point,
    trial_weighted_distance,
    verify_bounds,
)
from services.exceptions import DomainError
from services.instances import make_rng
from services.fejer_kernel import BoundParams, bound_constants, check_summation_bound
from services.preconditioned_gd import PreconditionerKind, build_preconditioner, weighted_error
from services.signal_model import PsfWeights, SpikeParams, observe, wraparound_separation


def test_hessian_constants_at_fixed_regime_separation():
    constants = hessian_constants(16.5)
    published = PUBLISHED_HESSIAN_CONSTANTS[16.5]
    assert constants.k_delta == pytest.approx(2.1207, abs=2e-3)
    assert constants.k_a == pytest.approx(4.3958, abs=2e-3)
    assert constants.k_tau == pytest.approx(6.7072, abs=2e-3)
    for name, ceiling in published.items():
        assert getattr(constants, name) <= ceiling


def test_hessian_constants_at_adaptive_regime_separation():
    constants = hessian_constants(4.7, 1.175)
    assert constants.k_delta == pytest.approx(2.3196, abs=2e-3)
    assert constants.k_theta_adaptive == pytest.approx(75.796, abs=1e-2)
    assert constants.k_theta_adaptive <= ADAPTIVE_REGIME.k_theta
    assert hessian_constants(4.7) == constants


def test_deviation_bounds():
    sep = 20.0
    assert adaptive_deviation_bound(0.0, 2.0, sep) == pytest.approx(4 * 2.32 * 2.0 / sep ** 2)
    assert fixed_deviation_bound(0.0, 1.0, 1.0, sep) == pytest.approx(4 * 2.13 / sep ** 2)
    e = 0.3
    expected = 1 - 0.25 * 0.49 + (4 * 2.13 + 44.42 * e) * 3.0 / sep ** 2 * 1.69
    assert fixed_deviation_bound(e, 3.0, 0.5, sep) == pytest.approx(expected)
    assert fixed_deviation_bound(0.1, 1.0, 0.5, sep, FIXED_REGIME) < 1.0
    with pytest.raises(DomainError):
        adaptive_deviation_bound(1.0, 1.0, sep)
    with pytest.raises(DomainError):
        fixed_deviation_bound(-0.1, 1.0, 0.5, sep)


def test_gramian_bound_for_equispaced_spikes():
    tau = np.array([-0.5, -0.25, 0.0, 0.25])
    check = check_gramian_bound(tau, 64)
    assert check.holds
    assert 0 < check.lhs <= check.rhs


def test_residual_derivative_bound_at_truth():
    truth = SpikeParams(amplitudes=[1.0, 2.0j, -1.5], locations=[-0.3, 0.0, 0.3])
    check = check_residual_derivative_bound(truth, truth, 40)
    assert check.holds
    assert check.first.lhs == pytest.approx(0.0, abs=1e-12)
    assert check.self_first == pytest.approx(0.0, abs=1e-12)
    assert check.self_second == pytest.approx(0.0, abs=1e-9)


def test_segment_endpoints():
    truth = SpikeParams(amplitudes=[1.0, 2.0], locations=[-0.49, 0.2])
    iterate = SpikeParams(amplitudes=[1.1, 1.9], locations=[0.495, 0.21])
    np.testing.assert_allclose(segment_point(iterate, truth, 0.0).locations, truth.locations)
    np.testing.assert_allclose(segment_point(iterate, truth, 1.0).locations, iterate.locations, atol=1e-15)
    np.testing.assert_allclose(segment_point(iterate, truth, 0.5).locations, [-0.4975, 0.205])


def test_fixed_regime_trials():
    for index in range(4):
        trial = draw_fixed_regime_trial(make_rng([7, index]))
        assert 40 <= trial.n <= 100
        assert trial.separation_scaled >= 16.5
        assert trial.distance < 0.9
        assert trial.a_scale >= 1.5 * np.abs(trial.truth.amplitudes).max()
        assert trial.a_scale >= np.abs(trial.iterate.amplitudes).max()
        assert trial_weighted_distance(trial) == pytest.approx(trial.distance, abs=1e-12)
        check = check_fixed_regime(trial)
        assert check.zero_residual_error <= ZERO_RESIDUAL_TOLERANCE
        assert check.deviation <= check.bound


def test_adaptive_regime_trials():
    for index in range(4):
        trial = draw_adaptive_regime_trial(make_rng([8, index]))
        assert 16 <= trial.n <= 64
        assert wraparound_separation(trial.truth.locations).scaled(trial.n) >= 4.7
        assert 1.0 <= trial.dynamic_range <= 6.0
        assert trial.distance < 0.8
        check = check_adaptive_regime(trial)
        assert check.deviation <= check.bound


def test_segment_contraction_matches_endpoint_at_truth():
    trial = draw_adaptive_regime_trial(make_rng([9, 0]))
    obs = observe(trial.truth, PsfWeights.triangular(trial.n))
    precond = build_preconditioner(PreconditionerKind.ADAPTIVE, trial.iterate.amplitudes, trial.n)
    worst = segment_contraction(trial.iterate, trial.truth, precond, obs, points=5)
    bound = adaptive_deviation_bound(trial.distance, trial.dynamic_range, trial.separation_scaled)
    assert 0 <= worst <= bound
    with pytest.raises(DomainError):
        segment_contraction(trial.iterate, trial.truth, precond, obs, points=1)


def test_check_summary_records_ratios():
    summary = CheckSummary('demo')
    summary.record(1.0, 2.0, True)
    summary.record(3.0, 2.0, False)
    assert summary.checked == 2
    assert summary.violations == 1
    assert summary.worst_ratio == pytest.approx(1.5)
    assert len(summary.csv_row()) == len(REPORT_HEADER)


def test_verify_bounds_smoke():
    report = verify_bounds(trials=3, summation_trials=4, seed=0)
    checks = report.by_name()
    assert list(checks) == [
        'published_constants',
        'summation_bound',
        'gramian_bound',
        'residual_first_derivative',
        'residual_second_derivative',
        'fixed_hessian_deviation',
        'adaptive_hessian_deviation',
        'fixed_contraction',
        'adaptive_contraction',
    ]
    assert checks['published_constants'].checked == 14
    assert checks['published_constants'].violations == 0
    assert checks['summation_bound'].checked == 16
    assert checks['gramian_bound'].violations == 0
    assert checks['fixed_hessian_deviation'].checked == 3
    assert report.violations == sum(check.violations for check in report.checks)
    assert checks['fixed_contraction'].checked == 3


@pytest.mark.parametrize('draw, kind', [
    (draw_fixed_contraction_trial, PreconditionerKind.INVARIANT),
    (draw_adaptive_contraction_trial, PreconditionerKind.ADAPTIVE),
])
def test_observed_contraction_stays_below_predicted_rate(draw, kind):
    for index in range(5):
        trial = draw(make_rng([11, index]))
        assert trial.kind is kind
        assert weighted_error(trial.start, trial.truth, trial.n) < 0.5
        check = check_contraction(trial)
        assert check.hypotheses_hold
        assert 0 < check.worst_ratio <= check.predicted_rate < 1
        assert check.holds


def test_verify_bounds_full_count_has_no_violations():
    report = verify_bounds(trials=200, summation_trials=1000, seed=0)
    checks = report.by_name()
    assert checks['summation_bound'].checked == 4000
    assert checks['fixed_contraction'].checked == 200
    assert checks['adaptive_contraction'].checked == 200
    for check in report.checks:
        assert check.violations == 0, check.name
    assert report.violations == 0


def test_certified_constants_cover_near_antipodal_pair():
    n = 40
    tau = np.array([-0.25, 0.25 - 0.3 / (n + 1)])
    alpha = (n + 1) * 0.5 - 0.3
    printed_rhs = bound_constants(BoundParams(alpha=alpha)).c3 * (n + 1) ** 3 / alpha ** 2
    check = check_summation_bound(tau, n, 3)
    assert check.lhs > printed_rhs
    assert check.holds
