import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from contraction_lab.errors import DomainError
from contraction_lab.sequences import (FourierFunction, GridFunction, RateParams, basis_eval,
                                       grid_l2_norm, l2_norm, rate_rn, sobolev_norm, sup_norm,
                                       synthesize, worst_case_f0, worst_case_sobolev_tail,
                                       worst_case_tail)

coeff_lists = st.lists(st.floats(-5, 5, allow_nan=False), min_size=1, max_size=51)


def test_basis_values():
    assert basis_eval(1, 0.3) == 1.0
    assert basis_eval(2, 0.0) == 1.0
    assert basis_eval(3, 0.25) == pytest.approx(1.0, abs=1e-15)
    assert basis_eval(4, 0.25) == pytest.approx(-1.0, abs=1e-15)


@pytest.mark.parametrize("k,t", [(0, 0.5), (1, -0.1), (2, 1.5), (1.5, 0.2)])
def test_basis_rejects_bad_arguments(k, t):
    with pytest.raises(DomainError):
        basis_eval(k, t)


def test_basis_is_orthogonal_on_fine_grid():
    # no sqrt(2) factor: cosines and sines have squared norm 1/2
    t = np.linspace(0, 1, 4001)
    B = np.array([basis_eval(k, t) for k in range(1, 8)])
    w = np.full(t.size, 1 / 4000)
    w[[0, -1]] /= 2
    norms = np.array([1.0] + [0.5] * 6)
    assert np.allclose((B * w) @ B.T, np.diag(norms), atol=1e-12)


def test_synthesize_examples():
    assert np.allclose(synthesize(FourierFunction([2.5]), 17).values, 2.5)
    assert np.allclose(synthesize(FourierFunction(np.zeros(5)), 9).values, 0.0)
    g = synthesize(FourierFunction([0.0, 1.0]), 101)
    assert g.values[50] == pytest.approx(-1.0)
    assert np.allclose(g.values, np.cos(2 * np.pi * g.t))


def test_sobolev_examples():
    assert sobolev_norm(FourierFunction([0, 0, 2.0]), 1.0) == pytest.approx(6.0)
    assert sobolev_norm(FourierFunction(np.zeros(4)), 0.7) == 0.0
    with pytest.raises(DomainError):
        sobolev_norm(FourierFunction([1.0]), 0.0)


def test_sobolev_power_sequence_truncation_stability():
    def norm(K):
        return sobolev_norm(FourierFunction(np.arange(1, K + 1.0) ** -1.6), 1.0)
    a, b = norm(10_000), norm(20_000)
    assert math.isfinite(a)
    assert abs(b / a - 1) < 0.01


def test_norm_examples():
    assert l2_norm(FourierFunction([3.0, 4.0])) == 5.0
    assert sup_norm(GridFunction(np.full(5, -2.0))) == 2.0


@settings(max_examples=50, deadline=None)
@given(coeff_lists)
def test_parseval_on_grid(coeffs):
    f = FourierFunction(coeffs)
    m = max(4 * f.K_max, 8) + 1
    c = f.coeffs
    want = math.sqrt(c[0] ** 2 + 0.5 * np.sum(c[1:] ** 2))
    got = grid_l2_norm(synthesize(f, m))
    assert got == pytest.approx(want, rel=1e-3, abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(coeff_lists.filter(lambda c: len(c) >= 2 and any(abs(x) > 1e-3 for x in c[1:])),
       st.floats(0.05, 3), st.floats(0.0, 2))
def test_sobolev_nondecreasing_in_smoothness(coeffs, beta, gap):
    f = FourierFunction(coeffs)
    assert sobolev_norm(f, beta + gap) >= sobolev_norm(f, beta) * (1 - 1e-12)


def test_rate_examples():
    assert rate_rn(RateParams(0.5, 0.5, 10_000)) == pytest.approx(0.1, rel=1e-14)
    assert rate_rn(RateParams(1.0, 2.0, 10 ** 6)) == pytest.approx(0.01, rel=1e-14)
    for a in (0.3, 1.0, 2.5):
        assert rate_rn(RateParams(a, a, 777)) == pytest.approx(777 ** (-a / (2 * a + 1)))


@pytest.mark.parametrize("a,b,n", [(0.0, 1.0, 10), (1.0, -1.0, 10), (1.0, 1.0, 0), (1.0, 1.0, 2.5)])
def test_rate_params_validation(a, b, n):
    with pytest.raises(DomainError):
        RateParams(a, b, n)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.1, 3), st.floats(0.1, 3), st.integers(1, 10 ** 8))
def test_rate_strictly_decreasing_in_n(a, b, n):
    assert rate_rn(RateParams(a, b, n + 1)) < rate_rn(RateParams(a, b, n))


@pytest.mark.parametrize("beta", [0.3, 0.5, 1.0, 2.0])
def test_rate_fastest_at_matching_regularity(beta):
    # the exponent min(alpha, beta)/(2 alpha + 1) peaks at alpha = beta
    alphas = np.linspace(0.05, 4, 400)
    alphas = np.sort(np.append(alphas, beta))
    rates = [rate_rn(RateParams(a, beta, 10 ** 5)) for a in alphas]
    assert alphas[int(np.argmin(rates))] == pytest.approx(beta)


def test_worst_case_coefficients():
    f = worst_case_f0(0.5, 1000)
    # independently evaluated at 30 digits: 2.44660506860189209...
    assert f.coeffs[2] == pytest.approx(2.4466050686018921, rel=1e-13)
    assert f.coeffs[0] == 0.0 and f.coeffs[1] == 0.0
    assert np.all(f.coeffs[2:] > 0)
    assert np.all(np.diff(f.coeffs[2:]) < 0)
    with pytest.raises(DomainError):
        worst_case_f0(0.5, 2)


def test_worst_case_sobolev_partial_sums_converge():
    f = worst_case_f0(0.5, 10 ** 5)
    k = np.arange(1, f.K_max + 1)
    partial = np.cumsum(k * f.coeffs ** 2)
    assert math.isfinite(sobolev_norm(f, 0.5))
    # remaining mass is bounded by the Bertrand tail, which goes to zero
    for K in (10 ** 3, 10 ** 4):
        assert partial[-1] - partial[K - 1] <= worst_case_sobolev_tail(0.5, K)
    assert worst_case_sobolev_tail(0.5, 10 ** 5) < worst_case_sobolev_tail(0.5, 10 ** 3)


def test_worst_case_scaling_respects_radius():
    f = worst_case_f0(0.5, 5000, L=1.0)
    full = math.sqrt(sobolev_norm(f, 0.5) ** 2 + worst_case_sobolev_tail(0.5, 5000)
                     * (f.coeffs[2] / worst_case_f0(0.5, 5000).coeffs[2]) ** 2)
    assert full <= 1.0 + 1e-12


def test_worst_case_tail_bounds_the_sum():
    f = worst_case_f0(1.0, 200_000)
    for K in (100, 1000, 10_000):
        assert f.tail_sq(K) <= worst_case_tail(1.0, K)


def test_fourier_function_validation_and_immutability():
    with pytest.raises(DomainError):
        FourierFunction([])
    with pytest.raises(DomainError):
        FourierFunction([1.0, math.nan])
    f = FourierFunction([1.0, 2.0])
    with pytest.raises(ValueError):
        f.coeffs[0] = 3.0
    assert np.array_equal((f + FourierFunction([1.0])).coeffs, [2.0, 2.0])
    assert f.tail_sq(1) == 4.0


def test_grid_function_validation():
    with pytest.raises(DomainError):
        GridFunction([1.0])
    with pytest.raises(DomainError):
        GridFunction([1.0, math.inf])
