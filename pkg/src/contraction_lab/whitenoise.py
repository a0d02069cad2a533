"""Gaussian white-noise model in coefficient space.

Projecting dX = f dt + n^{-1/2} dW on the trigonometric basis gives
X_k = f_k + g_k / sqrt(n) with g_k iid N(0, 1).  Under the series prior the
posterior is Gaussian and independent across coordinates.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .concentration import tilted_ball_mc
from .errors import DomainError, NumericError, UnderflowError
from .gaussian import SeriesPrior
from .quadform import quadform_cdf
from .rng import MomentSums, batch_sizes, generator
from .sequences import FourierFunction, RateParams, rate_rn, sobolev_norm


@dataclass(frozen=True)
class SequenceObservation:
    n: int
    X: np.ndarray
    tail: float = 0.0  # squared norm of f0 beyond K

    def __post_init__(self):
        X = np.array(self.X, dtype=float)
        if not np.all(np.isfinite(X)):
            raise DomainError("observations must be finite")
        if self.n < 1:
            raise DomainError("n must be at least 1")
        X.setflags(write=False)
        object.__setattr__(self, "X", X)

    @property
    def K(self) -> int:
        return self.X.size


@dataclass(frozen=True)
class GaussianPosterior:
    means: np.ndarray
    variances: np.ndarray

    @property
    def K(self) -> int:
        return self.means.size


def default_truncation(alpha: float, n: int, f0: FourierFunction) -> int:
    return max(int(math.ceil(4 * n ** (1.0 / (2 * alpha + 1)))), f0.K_max)


def observe(f0: FourierFunction, n: int, K: int | None = None, seed: int = 0,
            stream=(0,)) -> SequenceObservation:
    K = f0.K_max if K is None else K
    g = generator(seed, *stream).standard_normal(K)
    return SequenceObservation(n, f0.padded(K) + g / math.sqrt(n), f0.tail_sq(K))


def posterior(prior: SeriesPrior, obs: SequenceObservation) -> GaussianPosterior:
    if prior.K != obs.K:
        raise DomainError(f"prior truncation {prior.K} does not match data length {obs.K}")
    s2 = prior.variances
    inv_n = 1.0 / obs.n
    return GaussianPosterior(s2 * obs.X / (s2 + inv_n), (s2 * inv_n) / (s2 + inv_n))


def prior_as_posterior(prior: SeriesPrior) -> GaussianPosterior:
    return GaussianPosterior(np.zeros(prior.K), prior.variances)


@dataclass(frozen=True)
class BallMass:
    probability: float
    se: float
    log_probability: float
    method: str


def ball_mass(post: GaussianPosterior, f0: FourierFunction, r: float, method: str = "cf-inversion",
              N: int = 100_000, seed: int = 0, stream=(0,), extra_tail: float = 0.0) -> BallMass:
    """P(sum_k (theta_k - f0_k)^2 + tail <= r^2), theta_k ~ N(m_k, v_k) independent.

    The tail sum_{k>K} f0_k^2 (plus ``extra_tail``) enters as a constant.
    """
    if r < 0:
        raise DomainError("radius must be non-negative")
    tail = f0.tail_sq(post.K) + extra_tail
    x = r * r - tail
    if x <= 0:
        return BallMass(0.0, 0.0, -math.inf, method)
    if math.isinf(r):
        return BallMass(1.0, 0.0, 0.0, method)
    c = post.means - f0.padded(post.K)
    v = post.variances
    if method == "cf-inversion":
        res = quadform_cdf(v, c ** 2 / v, x)
        p = math.exp(res.log_p)
        return BallMass(p, res.rel_err * p, res.log_p, method)
    if method == "mc":
        sd = np.sqrt(v)
        stats = MomentSums()
        for b, size in enumerate(batch_sizes(N, 20_000)):
            z = generator(seed, *stream, b).standard_normal((size, v.size))
            S = np.sum((c + sd * z) ** 2, axis=1)
            stats = stats + MomentSums.of(S <= x)
        p = stats.mean
        return BallMass(p, stats.sem, math.log(p) if p > 0 else -math.inf, method)
    if method == "tilted-mc":
        sb = tilted_ball_mc(np.sqrt(v), -c, math.sqrt(x), N, seed, stream)
        p = math.exp(-sb.neg_log_prob)
        return BallMass(p, sb.se * p, -sb.neg_log_prob, method)
    raise DomainError(f"unknown method {method!r}")


def kl_divergence_wn(f0: FourierFunction, f: FourierFunction, n: float) -> tuple[float, float]:
    """(K, V2) between the white-noise laws of f0 and f: ((n/2) d^2, n d^2)."""
    d2 = float(np.sum((f0 - f).coeffs ** 2))
    return 0.5 * n * d2, n * d2


def in_kl_ball(f0: FourierFunction, f: FourierFunction, n: float, epsilon: float) -> bool:
    K, V2 = kl_divergence_wn(f0, f, n)
    return K <= n * epsilon ** 2 and V2 <= n * epsilon ** 2


# -- experiments ---------------------------------------------------------------------

@dataclass(frozen=True)
class RingConfig:
    alpha: float
    beta: float
    f0: FourierFunction
    n_list: tuple
    M: float = 3.0
    m_ring: float = 0.05
    R: int = 200
    K: int | None = None
    seed: int = 0
    log_power: float = 0.0  # inner radius m_ring * rate / log(n)^p
    method: str = "cf-inversion"

    def __post_init__(self):
        if self.alpha <= 0 or self.beta <= 0:
            raise DomainError("alpha and beta must be positive")
        if self.M <= 0 or self.m_ring <= 0:
            raise DomainError("radius constants must be positive")
        if self.R < 1:
            raise DomainError("R must be at least 1")
        if not self.n_list or any(int(n) != n or n < 1 for n in self.n_list):
            raise DomainError("n_list must hold positive integers")


def _ring_replicate(cfg: RingConfig, i_n: int, n: int, K: int, rep: int, outer_r, inner_r):
    prior = SeriesPrior(cfg.alpha, K)
    obs = observe(cfg.f0, n, K, cfg.seed, (i_n, rep))
    post = posterior(prior, obs)
    outer = ball_mass(post, cfg.f0, outer_r, cfg.method, seed=cfg.seed, stream=(i_n, rep, 1))
    inner = ball_mass(post, cfg.f0, inner_r, cfg.method, seed=cfg.seed, stream=(i_n, rep, 2))
    return outer.probability, inner.probability


def ring_experiment(cfg: RingConfig, replicate_map=map) -> list[dict]:
    """Outer, inner and ring posterior masses per replicate and averaged.

    Aggregate rows carry replicate = -1 and across-replicate standard errors.
    ``replicate_map`` may be a parallel map; rows are ordered by replicate.
    """
    rows = []
    for i_n, n in enumerate(cfg.n_list):
        n = int(n)
        K = cfg.K or default_truncation(cfg.alpha, n, cfg.f0)
        rate = rate_rn(RateParams(cfg.alpha, cfg.beta, n))
        outer_r = cfg.M * rate
        inner_r = cfg.m_ring * rate / (math.log(n) ** cfg.log_power if cfg.log_power else 1.0)
        jobs = [(cfg, i_n, n, K, rep, outer_r, inner_r) for rep in range(cfg.R)]
        res = list(replicate_map(_ring_job, jobs))
        out_s, in_s, ring_s = MomentSums(), MomentSums(), MomentSums()
        for rep, (o, m) in enumerate(res):
            rows.append(dict(n=n, replicate=rep, K=K, N=0, rate=rate, outer_radius=outer_r,
                             inner_radius=inner_r, outer=o, inner=m, ring=o - m,
                             outer_se=0.0, inner_se=0.0, ring_se=0.0))
            out_s, in_s, ring_s = out_s + MomentSums.of([o]), in_s + MomentSums.of([m]), \
                ring_s + MomentSums.of([o - m])
        rows.append(dict(n=n, replicate=-1, K=K, N=0, rate=rate, outer_radius=outer_r,
                         inner_radius=inner_r, outer=out_s.mean, inner=in_s.mean,
                         ring=ring_s.mean, outer_se=_sem(out_s), inner_se=_sem(in_s),
                         ring_se=_sem(ring_s)))
    return rows


def _sem(s: MomentSums) -> float:
    return s.sem if s.count > 1 else 0.0


def _ring_job(args):
    return _ring_replicate(*args)


def aggregate_rows(rows):
    return [r for r in rows if r["replicate"] == -1]


def single_coefficient_f0(alpha: float, beta: float, n: int, L: float = 1.0) -> FourierFunction:
    """f0 with one coefficient L k^{-beta} at k = ceil(n^{1/(2 alpha + 1)})."""
    k = int(math.ceil(n ** (1.0 / (2 * alpha + 1))))
    c = np.zeros(k)
    c[k - 1] = L * k ** (-beta)
    return FourierFunction(c)


def remark2_experiment(alpha: float, beta: float, n_list, M: float = 10.0, R: int = 50,
                       L: float = 1.0, seed: int = 0, replicate_map=map) -> list[dict]:
    """Inner posterior mass at radius rate/M for the moving truth f0_n (beta < alpha)."""
    if not beta < alpha:
        raise DomainError("moving-truth experiment requires beta < alpha")
    rows = []
    for i_n, n in enumerate(n_list):
        f0 = single_coefficient_f0(alpha, beta, int(n), L)
        cfg = RingConfig(alpha, beta, f0, (int(n),), M=1.0, m_ring=1.0 / M, R=R, seed=seed)
        sub = ring_experiment(cfg, replicate_map)
        for r in sub:
            r = dict(r)
            r["n_index"] = i_n
            r["k_n"] = f0.K_max
            r["sobolev"] = sobolev_norm(f0, beta)
            rows.append(r)
    return rows


@dataclass(frozen=True)
class Lemma1Report:
    zeta: float
    alpha_n: float
    n: float
    log_numerator: float
    log_denominator: float
    log_ratio: float
    log_threshold: float
    condition_met: bool
    bound_only: bool


def _log_prior_ball(prior: SeriesPrior, f0: FourierFunction, r: float, N: int, seed: int,
                    stream) -> tuple[float, bool]:
    post = prior_as_posterior(prior)
    try:
        bm = ball_mass(post, f0, r, "cf-inversion")
        if bm.se <= 1e-6 * bm.probability or bm.probability == 0.0:
            return bm.log_probability, False
    except NumericError:
        pass
    try:
        bm = ball_mass(post, f0, r, "tilted-mc", N=N, seed=seed, stream=stream)
        return bm.log_probability, False
    except UnderflowError:
        return -math.inf, True


def lemma1_ratio(prior: SeriesPrior, f0: FourierFunction, zeta: float, alpha_n: float, n: float,
                 N: int = 200_000, seed: int = 0) -> Lemma1Report:
    """Prior mass ratio Pi(|f - f0| <= zeta) / Pi(B_KL(f0, alpha_n)) against e^{-2 n alpha_n^2}.

    In the white-noise model the KL neighbourhood is the L2 ball of radius alpha_n.
    """
    if zeta <= 0 or alpha_n <= 0:
        raise DomainError("radii must be positive")
    num, b1 = _log_prior_ball(prior, f0, zeta, N, seed, (1,))
    den, b2 = _log_prior_ball(prior, f0, alpha_n, N, seed, (2,))
    if math.isinf(den):
        raise UnderflowError("denominator mass underflows", alpha_n=alpha_n)
    log_ratio = num - den
    thr = -2.0 * n * alpha_n ** 2
    return Lemma1Report(zeta, alpha_n, n, num, den, log_ratio, thr, bool(log_ratio <= thr), b1 or b2)
