import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from contraction_lab.errors import DomainError
from contraction_lab.gaussian import SeriesPrior
from contraction_lab.sequences import FourierFunction, RateParams, rate_rn, sobolev_norm
from contraction_lab.whitenoise import (GaussianPosterior, RingConfig, aggregate_rows, ball_mass,
                                        in_kl_ball, kl_divergence_wn, lemma1_ratio, observe,
                                        posterior, prior_as_posterior, remark2_experiment,
                                        ring_experiment, single_coefficient_f0)


def test_observe_huge_n_recovers_truth():
    f0 = FourierFunction([0.3, -0.2, 0.1])
    obs = observe(f0, 10 ** 12, seed=1)
    assert np.allclose(obs.X, f0.coeffs, atol=1e-5)


def test_observe_noise_variance():
    f0 = FourierFunction.zeros(20_000)
    X = observe(f0, 100, seed=2).X
    v = np.mean(X ** 2)
    se = np.std(X ** 2, ddof=1) / math.sqrt(X.size)
    assert abs(v - 0.01) < 3 * se


def test_observe_determinism_and_tail():
    f0 = FourierFunction([1.0, 0.5, 0.25])
    a, b = observe(f0, 50, seed=3), observe(f0, 50, seed=3)
    assert np.array_equal(a.X, b.X)
    assert not np.array_equal(a.X, observe(f0, 50, seed=4).X)
    short = observe(f0, 50, K=2, seed=3)
    assert short.K == 2 and short.tail == pytest.approx(0.0625)


def test_posterior_single_coordinate():
    obs = observe(FourierFunction([0.5]), 100, seed=0)
    obs = type(obs)(100, [0.5])
    post = posterior(SeriesPrior(1.0, 1), obs)
    assert post.means[0] == pytest.approx(0.49505, abs=1e-5)
    assert post.variances[0] == pytest.approx(0.009901, abs=1e-6)
    zero = posterior(SeriesPrior(1.0, 1), type(obs)(100, [0.0]))
    assert zero.means[0] == 0.0


def test_posterior_shape_mismatch():
    obs = observe(FourierFunction.zeros(3), 10)
    with pytest.raises(DomainError):
        posterior(SeriesPrior(1.0, 4), obs)


def test_ball_mass_edge_radii():
    post = GaussianPosterior(np.zeros(3), np.full(3, 0.1))
    f0 = FourierFunction.zeros(3)
    assert ball_mass(post, f0, 0.0).probability == 0.0
    assert ball_mass(post, f0, math.inf).probability == 1.0
    assert ball_mass(post, f0, 50.0).probability == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(DomainError):
        ball_mass(post, f0, -1.0)
    with pytest.raises(DomainError):
        ball_mass(post, f0, 1.0, method="bogus")


def test_ball_mass_one_dimensional_closed_form():
    m, v, c, r = 0.3, 0.04, 0.1, 0.25
    post = GaussianPosterior(np.array([m]), np.array([v]))
    sd = math.sqrt(v)
    want = stats.norm.cdf((c + r - m) / sd) - stats.norm.cdf((c - r - m) / sd)
    assert ball_mass(post, FourierFunction([c]), r).probability == pytest.approx(want, rel=1e-9)


def test_ball_mass_methods_agree():
    prior = SeriesPrior(1.0, 30)
    f0 = FourierFunction(np.arange(1, 31.0) ** -1.5)
    post = posterior(prior, observe(f0, 500, seed=5))
    r = 0.15
    cf = ball_mass(post, f0, r)
    mc = ball_mass(post, f0, r, "mc", N=100_000, seed=1)
    tilt = ball_mass(post, f0, r, "tilted-mc", N=50_000, seed=1)
    assert abs(cf.probability - mc.probability) < 4 * mc.se
    assert abs(cf.probability - tilt.probability) < 4 * tilt.se + 1e-9


@settings(max_examples=25, deadline=None)
@given(st.floats(0.01, 1.0), st.floats(1.01, 3.0), st.integers(0, 1000))
def test_ball_mass_nondecreasing_in_radius(r, factor, seed):
    prior = SeriesPrior(0.8, 12)
    f0 = FourierFunction(np.linspace(0.5, 0.0, 12))
    post = posterior(prior, observe(f0, 200, seed=seed))
    a = ball_mass(post, f0, r).probability
    b = ball_mass(post, f0, r * factor).probability
    assert 0 <= a <= b + 1e-12 <= 1 + 1e-12


def test_kl_examples_and_scaling():
    assert kl_divergence_wn(FourierFunction([1.0]), FourierFunction([0.0]), 4) == (2.0, 4.0)
    f0, f = FourierFunction([0.2, 0.1]), FourierFunction([0.0, 0.3])
    k1, v1 = kl_divergence_wn(f0, f, 10)
    k2, v2 = kl_divergence_wn(f0, f, 30)
    assert k2 == pytest.approx(3 * k1) and v2 == pytest.approx(3 * v1)
    assert v1 == pytest.approx(2 * k1)


def test_kl_ball_membership():
    f0 = FourierFunction([0.0])
    assert in_kl_ball(f0, FourierFunction([0.1]), 100, 0.1)
    assert not in_kl_ball(f0, FourierFunction([0.11]), 100, 0.1)


def test_ring_config_validation():
    f0 = FourierFunction([0.1])
    with pytest.raises(DomainError):
        RingConfig(0.0, 1.0, f0, (10,))
    with pytest.raises(DomainError):
        RingConfig(1.0, 1.0, f0, (10.5,))
    with pytest.raises(DomainError):
        RingConfig(1.0, 1.0, f0, (10,), R=0)


def test_ring_with_wide_outer_radius_holds_all_mass():
    f0 = FourierFunction(np.arange(1, 41.0) ** -1.6)
    cfg = RingConfig(1.0, 1.0, f0, (100, 1000), M=50.0, R=5, seed=2)
    rows = ring_experiment(cfg)
    agg = aggregate_rows(rows)
    assert len(agg) == 2 and len(rows) == 12
    for r in agg:
        assert r["outer"] == pytest.approx(1.0, abs=1e-9)
        assert r["inner"] < r["outer"]
        assert r["rate"] == pytest.approx(rate_rn(RateParams(1.0, 1.0, r["n"])))


def test_ring_log_power_shrinks_inner_radius():
    f0 = FourierFunction(np.arange(1, 21.0) ** -1.6)
    plain = aggregate_rows(ring_experiment(RingConfig(1.0, 1.0, f0, (500,), R=2)))[0]
    logged = aggregate_rows(ring_experiment(RingConfig(1.0, 1.0, f0, (500,), R=2,
                                                       log_power=1.0)))[0]
    assert logged["inner_radius"] == pytest.approx(plain["inner_radius"] / math.log(500))
    assert logged["inner"] <= plain["inner"]


def test_single_coefficient_truth():
    f0 = single_coefficient_f0(1.0, 0.5, 1000)
    k = math.ceil(1000 ** (1 / 3))
    assert f0.K_max == k and np.count_nonzero(f0.coeffs) == 1
    # Sobolev norm of order beta equals L
    assert sobolev_norm(f0, 0.5) == pytest.approx(1.0, rel=1e-12)


def test_moving_truth_experiment():
    rows = remark2_experiment(1.0, 0.5, [100, 1000], R=3, seed=1)
    agg = [r for r in rows if r["replicate"] == -1]
    assert [r["n_index"] for r in agg] == [0, 1]
    assert all(r["sobolev"] == pytest.approx(1.0) for r in agg)
    with pytest.raises(DomainError):
        remark2_experiment(1.0, 1.0, [100])


def test_prior_mass_ratio_not_met_at_equal_radii():
    prior = SeriesPrior(1.0, 50)
    f0 = FourierFunction(np.arange(1, 51.0) ** -1.6)
    rep = lemma1_ratio(prior, f0, 0.2, 0.2, 100)
    assert rep.log_ratio == pytest.approx(0.0, abs=1e-12)
    assert not rep.condition_met


def test_prior_mass_ratio_monotone_in_inner_radius():
    prior = SeriesPrior(1.0, 50)
    f0 = FourierFunction(np.arange(1, 51.0) ** -1.6)
    ratios = [lemma1_ratio(prior, f0, z, 0.3, 50).log_ratio for z in (0.05, 0.1, 0.2)]
    assert ratios[0] < ratios[1] < ratios[2]
    with pytest.raises(DomainError):
        lemma1_ratio(prior, f0, 0.0, 0.3, 50)


def test_small_prior_ratio_gives_small_posterior_mass():
    # when Pi(ball)/Pi(KL ball) <= exp(-2 n a^2), the posterior puts little mass on the ball
    alpha, n = 1.0, 2000
    prior = SeriesPrior(alpha, 60)
    f0 = FourierFunction(np.arange(1, 61.0) ** -1.6)
    a_n, zeta = 0.08, 0.02
    rep = lemma1_ratio(prior, f0, zeta, a_n, n)
    assert rep.condition_met
    masses = [ball_mass(posterior(prior, observe(f0, n, 60, seed=s)), f0, zeta).probability
              for s in range(20)]
    assert np.mean(masses) <= 0.1


def test_prior_as_posterior():
    post = prior_as_posterior(SeriesPrior(0.5, 4))
    assert np.all(post.means == 0) and post.variances[0] == 1.0
