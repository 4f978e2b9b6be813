import math

import numpy as np
import pytest

from services.exceptions import DomainError
from services.fejer_kernel import (
    BoundParams,
    bound_constants,
    certified_bound_constants,
    check_summation_bound,
    fejer_closed_form,
    fejer_eval,
    fejer_sum,
    min_pairwise_wrap_distance,
    second_derivative_at_zero,
    wrap_distance,
)


@pytest.mark.parametrize('n', [2, 7, 32])
@pytest.mark.parametrize('order', [0, 1, 2, 3])
def test_closed_form_matches_trigonometric_sum(n, order):
    t = np.concatenate([np.linspace(0.01, 0.49, 40), -np.linspace(0.02, 0.48, 17)])
    scale = (2 * math.pi * (n + 1)) ** order
    np.testing.assert_allclose(fejer_closed_form(t, n, order), fejer_sum(t, n, order), rtol=0, atol=1e-9 * scale)


def test_values_at_zero():
    n = 12
    assert fejer_eval(0.0, n, 0) == 1.0
    assert fejer_eval(0.0, n, 1) == 0.0
    assert fejer_eval(0.0, n, 3) == 0.0
    assert fejer_eval(0.0, n, 2) == pytest.approx(second_derivative_at_zero(n))
    assert fejer_sum(0.0, n, 2) == pytest.approx(second_derivative_at_zero(n), rel=1e-12)


def test_near_singular_points_use_exact_sum():
    n = 20
    t = np.array([1e-7, -3e-6, 1.0 + 5e-6, 5e-5])
    for order in range(4):
        scale = (2 * math.pi * (n + 1)) ** order
        np.testing.assert_allclose(fejer_eval(t, n, order), fejer_sum(t, n, order), atol=1e-9 * scale)


def test_kernel_is_periodic_and_even():
    n = 9
    t = np.linspace(-0.45, 0.45, 31)
    np.testing.assert_allclose(fejer_eval(t + 1.0, n), fejer_eval(t, n), atol=1e-12)
    np.testing.assert_allclose(fejer_eval(-t, n), fejer_eval(t, n), atol=1e-12)
    np.testing.assert_allclose(fejer_eval(-t, n, 1), -fejer_eval(t, n, 1), atol=1e-9)


def test_eval_keeps_input_shape():
    assert isinstance(fejer_eval(0.1, 5), float)
    assert fejer_eval(np.zeros((2, 3)) + 0.1, 5, 2).shape == (2, 3)


def test_invalid_arguments():
    with pytest.raises(DomainError):
        fejer_eval(0.1, 5, 4)
    with pytest.raises(DomainError):
        fejer_eval(0.1, 1)
    with pytest.raises(DomainError):
        BoundParams(alpha=2.0, beta=1.0)
    with pytest.raises(DomainError):
        BoundParams(alpha=0.0)


def test_wrap_distance():
    np.testing.assert_allclose(wrap_distance([0.9, -0.7, 0.25, 2.0]), [0.1, 0.3, 0.25, 0.0], atol=1e-15)
    assert min_pairwise_wrap_distance(np.array([-0.49, 0.0, 0.49])) == pytest.approx(0.02)
    assert min_pairwise_wrap_distance(np.array([0.3])) == math.inf


def test_bound_constants_at_fixed_regime_separation():
    constants = bound_constants(BoundParams(alpha=16.5, beta=4.125))
    assert constants.c1 == pytest.approx(2.743, abs=1e-3)
    assert constants.c2 == pytest.approx(19.076, abs=1e-3)
    assert constants.c3 == pytest.approx(48.736, abs=1e-3)


def test_bound_constants_at_adaptive_regime_separation():
    constants = bound_constants(BoundParams(alpha=4.7, beta=1.175))
    assert constants.c1 == pytest.approx(3.2363, abs=1e-3)
    assert constants.c2 == pytest.approx(22.895, abs=1e-2)
    assert constants.c3 == pytest.approx(105.544, abs=1e-2)


@pytest.mark.parametrize('order', [0, 1, 2, 3])
def test_summation_bound_holds_for_equispaced_spikes(order):
    tau = np.array([-0.5, -0.25, 0.0, 0.25])
    check = check_summation_bound(tau, 40, order)
    assert check.holds
    assert 0 < check.lhs <= check.rhs


def test_summation_bound_with_perturbation():
    rng = np.random.default_rng(3)
    tau = np.array([-0.4, -0.1, 0.2])
    n = 30
    u = rng.uniform(-0.05, 0.05, size=(3, 3)) / (n + 1)
    for order in range(4):
        assert check_summation_bound(tau, n, order, u).holds


def test_summation_bound_edge_cases():
    check = check_summation_bound(np.array([0.1]), 10, 2)
    assert check.holds and check.rhs == math.inf
    with pytest.raises(DomainError):
        check_summation_bound(np.array([0.1, 0.1]), 10, 0)
    with pytest.raises(DomainError):
        check_summation_bound(np.array([0.1, 0.3]), 10, 0, np.zeros((3, 3)))


def test_closed_form_matches_sum_on_random_points():
    rng = np.random.default_rng(0)
    compared = 0
    for n in rng.integers(2, 65, size=10):
        t = rng.uniform(-2.0, 2.0, size=1000)
        t = t[wrap_distance(t) > 1e-3]
        for order in range(4):
            scale = (2 * math.pi * (n + 1)) ** order
            np.testing.assert_allclose(
                fejer_closed_form(t, n, order), fejer_sum(t, n, order), rtol=0, atol=1e-9 * scale,
            )
            compared += t.size
    assert compared >= 4 * 9900


@pytest.mark.parametrize('order, sign', [(0, 1.0), (1, -1.0), (2, 1.0), (3, -1.0)])
def test_derivative_parity(order, sign):
    n = 17
    t = np.random.default_rng(1).uniform(-0.5, 0.5, size=200)
    scale = (2 * math.pi * (n + 1)) ** order
    np.testing.assert_allclose(fejer_eval(-t, n, order), sign * fejer_eval(t, n, order), atol=1e-10 * scale)


def test_certified_constants_only_raise_c3():
    params = BoundParams(alpha=16.5, beta=4.125)
    printed, certified = bound_constants(params), certified_bound_constants(params)
    assert (certified.c0, certified.c1, certified.c2) == (printed.c0, printed.c1, printed.c2)
    g = 1.0 / (16.5 - 2 * 4.125)
    assert certified.c3 - printed.c3 == pytest.approx(16.0 * math.pi * g * 16.5)
