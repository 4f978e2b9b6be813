import math

import numpy as np
import pytest

from services.exceptions import DomainError
from services.experiments import (
    BASIN_HEADER,
    CRB_TABLE_HEADER,
    SLOPE_HEADER,
    SNR_HEADER,
    basin_experiment,
    convergence_experiment,
    draw_equidistant_start,
    fit_log_linear_slope,
    fit_loglog_slope,
    iterations_to_reach,
    kappa_specs,
    parallel_map,
    resolve_schemes,
    snr_experiment,
)
from services.instances import InstanceSpec, gen_instance, make_rng
from services.preconditioned_gd import PreconditionerKind, weighted_error

SMALL_SPEC = InstanceSpec(n=32, r=2, kappa=1.0, min_sep_scaled=8.0, seed=0)


def _square(x):
    return x * x


def test_resolve_schemes():
    assert resolve_schemes('both') == (PreconditionerKind.INVARIANT, PreconditionerKind.ADAPTIVE)
    assert resolve_schemes('adaptive') == (PreconditionerKind.ADAPTIVE,)
    with pytest.raises(ValueError):
        resolve_schemes('newton')


def test_parallel_map_keeps_order():
    assert parallel_map(_square, [3, 1, 2], workers=1) == [9, 1, 4]
    assert parallel_map(_square, [], workers=4) == []


@pytest.mark.parametrize('distance', [0.0, 0.05, 0.4, 0.9])
def test_equidistant_start_has_requested_distance(distance):
    truth = gen_instance(InstanceSpec(n=40, r=4, kappa=3.0, min_sep_scaled=4.0), make_rng(2))
    start = draw_equidistant_start(truth, 40, distance, make_rng(5))
    assert weighted_error(start, truth, 40) == pytest.approx(distance, abs=1e-12)


def test_equidistant_start_rejects_negative_distance():
    truth = gen_instance(SMALL_SPEC)
    with pytest.raises(DomainError):
        draw_equidistant_start(truth, 32, -0.1, make_rng(0))


def test_slope_fits():
    errors = 10.0 ** (-0.5 * np.arange(20))
    assert fit_log_linear_slope(errors) == pytest.approx(-0.5)
    assert math.isnan(fit_log_linear_slope(np.array([1e-3])))
    assert iterations_to_reach(errors, 2e-6) == 12
    assert iterations_to_reach(errors, 1e-30) == -1
    snr = np.array([1e2, 1e3, 1e4])
    assert fit_loglog_slope(snr, snr ** -0.5) == pytest.approx(-0.5)
    assert math.isnan(fit_loglog_slope([1e2, math.inf], [0.1, 0.0]))


def test_basin_experiment_smoke():
    rows = basin_experiment(SMALL_SPEC, 'both', [0.0, 0.1], trials=3, iterations=60)
    assert len(rows) == 4
    assert [(row.distance, row.scheme) for row in rows] == [
        (0.0, 'invariant'), (0.0, 'adaptive'), (0.1, 'invariant'), (0.1, 'adaptive'),
    ]
    for row in rows:
        assert len(row.csv_row()) == len(BASIN_HEADER)
        assert row.trials == 3
        assert row.failures == 0
    assert rows[0].success_rate == 1.0 and rows[1].success_rate == 1.0


def test_basin_experiment_is_deterministic():
    first = basin_experiment(SMALL_SPEC, 'adaptive', [0.3], trials=2, iterations=30)
    second = basin_experiment(SMALL_SPEC, 'adaptive', [0.3], trials=2, iterations=30)
    assert [row.csv_row() for row in first] == [row.csv_row() for row in second]
    with pytest.raises(DomainError):
        basin_experiment(SMALL_SPEC, 'adaptive', [0.3], trials=0)


def test_convergence_experiment_smoke():
    specs = kappa_specs(SMALL_SPEC, [1.0, 2.0])
    assert [spec.kappa for spec in specs] == [1.0, 2.0]
    results = convergence_experiment(specs, 'both', iterations=30)
    assert [(result.kappa, result.scheme) for result in results] == [
        (1.0, 'invariant'), (1.0, 'adaptive'), (2.0, 'invariant'), (2.0, 'adaptive'),
    ]
    for result in results:
        assert 1 <= result.errors.size <= 31
        assert len(result.slope_row()) == len(SLOPE_HEADER)
        assert len(result.curve_rows()) == result.errors.size


def test_snr_experiment_smoke():
    spec = InstanceSpec(n=24, r=2, kappa=2.0, min_sep_scaled=6.0, seed=1)
    result = snr_experiment(spec, [30.0, 50.0], trials=2, iterations=40)
    assert len(result.rows) == 2
    assert all(len(row.csv_row()) == len(SNR_HEADER) for row in result.rows)
    assert len(result.crb_table) == 2 * 2 * 3 * spec.r
    assert all(len(row) == len(CRB_TABLE_HEADER) for row in result.crb_table)
    low, high = result.rows
    assert 0 < high.crb_weighted < low.crb_weighted
    assert high.crb_weighted == pytest.approx(low.crb_weighted * 0.1, rel=1e-9)


def test_snr_experiment_tracks_crb_at_high_snr():
    spec = InstanceSpec(n=32, r=4, kappa=3.0, min_sep_scaled=3.0, seed=0)
    result = snr_experiment(spec, [30.0, 40.0], trials=16, iterations=200)
    for row in result.rows:
        assert row.failures_invariant == 0 and row.failures_adaptive == 0
        # the benchmark is the largest per-parameter standard deviation, and the mean
        # modulus of a circular complex Gaussian is sqrt(pi)/2 of its deviation
        for error in (row.mean_error_invariant, row.mean_error_adaptive):
            assert 0.8 * row.crb_weighted <= error <= 3.0 * row.crb_weighted


def test_dynamic_range_slows_only_the_invariant_scheme():
    base = InstanceSpec(n=32, r=6, kappa=1.0, min_sep_scaled=2.0, seed=0)
    results = convergence_experiment(kappa_specs(base, [1.0, 3.0, 6.0]), 'both', iterations=2000)
    invariant = [result for result in results if result.scheme == 'invariant']
    adaptive = [result for result in results if result.scheme == 'adaptive']
    assert not any(result.failed for result in results)

    reached = [result.iterations_to_target for result in invariant]
    assert all(count > 0 for count in reached)
    assert reached[0] < reached[1] < reached[2]

    slopes = [result.slope for result in adaptive]
    assert all(slope < 0 for slope in slopes)
    assert max(slopes) - min(slopes) <= 0.2 * max(abs(slope) for slope in slopes)
