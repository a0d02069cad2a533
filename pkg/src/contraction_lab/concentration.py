"""Concentration function phi = phi_A + phi_B, its inverse, and the checks
built on it.

phi_A(eps) = inf { |h|_H^2 : |h - f0| <= eps }   (squared RKHS norm, no 1/2)
phi_B(eps) = -log P(|Z| < eps)
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .errors import (DomainError, NumericError, RangeError, TruncationError,
                     UnderflowError)
from .gaussian import FiniteGaussian, SeriesPrior
from .quadform import quadform_cdf, saddlepoint_tilt
from .rng import MomentSums, batch_sizes, generator
from .sequences import FourierFunction

MC_BATCH = 20_000
CF_RTOL = 1e-6


# -- phi_A: Euclidean ball, diagonal weights ------------------------------------

@dataclass(frozen=True)
class WaterfillResult:
    value: float
    h: np.ndarray
    mu: float
    tail: float
    K: int
    target: np.ndarray = field(repr=False, compare=False)

    @property
    def residual(self) -> float:
        """Distance from h to f0, tail included."""
        return float(np.sqrt(self.tail + np.sum((self.h - self.target) ** 2)))


def series_weights(prior: SeriesPrior) -> np.ndarray:
    return prior.rkhs_weights


def _waterfill_mu(w, f, budget, rtol=1e-10):
    """Root of sum (w f/(w+mu))^2 = budget, safeguarded Newton in log mu."""
    wf2 = (w * f) ** 2

    def g(mu):
        d = w + mu
        return float(np.sum(wf2 / d ** 2)) - budget, float(-2.0 * np.sum(wf2 / d ** 3))

    lo, hi = 0.0, 1.0
    while g(hi)[0] > 0:
        lo, hi = hi, hi * 4.0
    mu = 0.5 * (lo + hi)
    for _ in range(500):
        val, der = g(mu)
        if val > 0:
            lo = mu
        else:
            hi = mu
        step = mu - val / der if der < 0 else None
        mu_new = step if step is not None and lo < step < hi else 0.5 * (lo + hi)
        if abs(mu_new - mu) <= rtol * mu_new or hi - lo <= rtol * hi:
            return mu_new
        mu = mu_new
    raise NumericError("water-filling multiplier did not converge", lo=lo, hi=hi)


def phi_A_waterfill(weights, f0: FourierFunction, epsilon: float,
                    extra_tail: float = 0.0) -> WaterfillResult:
    """min sum w_k h_k^2 subject to sum_{k<=K} (h_k - f0_k)^2 + tail <= eps^2.

    K = len(weights).  ``tail`` is the squared norm of f0 beyond K: the stored
    coefficients past K plus ``extra_tail`` (e.g. an analytic bound for an
    infinite sequence).  It must stay below eps^2/4.
    """
    if epsilon <= 0:
        raise DomainError("epsilon must be positive")
    w = np.asarray(weights, dtype=float)
    if np.any(w <= 0):
        raise DomainError("weights must be positive")
    K = w.size
    f = f0.padded(K)
    tail = f0.tail_sq(K) + float(extra_tail)
    if tail >= epsilon ** 2 / 4:
        raise TruncationError(
            f"truncation insufficient: tail {tail:.3g} >= eps^2/4 = {epsilon ** 2 / 4:.3g}")
    budget = epsilon ** 2 - tail
    if float(np.sum(f ** 2)) <= budget:
        return WaterfillResult(0.0, np.zeros(K), 0.0, tail, K, f)
    mu = _waterfill_mu(w, f, budget)
    h = mu * f / (w + mu)
    return WaterfillResult(float(np.sum(w * h ** 2)), h, mu, tail, K, f)


# -- phi_A: sup-norm box on a grid ----------------------------------------------

@dataclass(frozen=True)
class BoxResult:
    value: float
    h: np.ndarray
    iterations: int
    kkt_residual: float


def _kkt_residual(Q, h, lo, hi):
    g = Q @ h
    scale = max(np.linalg.norm(g), 1.0)
    at_lo = h <= lo + 1e-12 * (1 + np.abs(lo))
    at_hi = h >= hi - 1e-12 * (1 + np.abs(hi))
    viol = np.where(at_lo, np.minimum(g, 0.0), np.where(at_hi, np.maximum(g, 0.0), g))
    return float(np.linalg.norm(viol) / scale)


def _pdas(Q, h, lo, hi, max_iter=100):
    """Primal-dual active set iteration for min h'Qh on the box [lo, hi]."""
    g = Q @ h
    c = 1.0 / max(np.max(np.abs(np.diag(Q))), 1e-300)
    prev = None
    for _ in range(max_iter):
        lam = -g
        up = lam + (h - hi) / c > 0
        dn = lam + (h - lo) / c < 0
        dn &= ~up
        key = (up.tobytes(), dn.tobytes())
        if key == prev:
            return h
        prev = key
        free = ~(up | dn)
        h = np.where(up, hi, np.where(dn, lo, 0.0))
        if free.any():
            fixed = ~free
            rhs = -Q[np.ix_(free, fixed)] @ h[fixed] if fixed.any() else np.zeros(free.sum())
            h[free] = np.linalg.lstsq(Q[np.ix_(free, free)], rhs, rcond=None)[0]
        g = Q @ h
    return h


def phi_A_box(G: FiniteGaussian, f0, epsilon: float, max_iter: int = 20_000,
              floor: float | None = None) -> BoxResult:
    """min h' Sigma^{-1} h subject to |h_i - f0_i| <= eps on every grid point.

    Sigma^{-1} is applied through the eigenbasis with eigenvalues floored at
    ``floor * lambda_1`` (default: the law's rank_tol).  Accelerated projected
    gradient with backtracking runs until the relative objective change stays
    below 1e-8 for 50 iterations; an active-set pass then polishes the face.
    """
    if epsilon <= 0:
        raise DomainError("epsilon must be positive")
    f0 = np.asarray(getattr(f0, "values", f0), dtype=float)
    if f0.shape != (G.dim,):
        raise DomainError("f0 has the wrong dimension")
    lo, hi = f0 - epsilon, f0 + epsilon
    if np.all(lo <= 0) and np.all(hi >= 0):
        return BoxResult(0.0, np.zeros(G.dim), 0, 0.0)
    floor = G.rank_tol if floor is None else floor
    lam = np.maximum(G.eigenvalues, floor * G.eigenvalues[0])
    U = G.eigenvectors
    Q = (U / lam) @ U.T
    Q = 0.5 * (Q + Q.T)
    obj = lambda v: float(v @ Q @ v)
    proj = lambda v: np.clip(v, lo, hi)

    x = proj(np.zeros(G.dim))
    y, t_mom, L = x.copy(), 1.0, 2.0 / lam[0]
    f_old, quiet, it = obj(x), 0, 0
    for it in range(1, max_iter + 1):
        gy = 2.0 * (Q @ y)
        fy = obj(y)
        while True:
            x_new = proj(y - gy / L)
            d = x_new - y
            if obj(x_new) <= fy + gy @ d + 0.5 * L * (d @ d) * (1 + 1e-12) + 1e-300:
                break
            L *= 2.0
        f_new = obj(x_new)
        if f_new > f_old:  # restart momentum
            t_mom, y = 1.0, x.copy()
            continue
        t_next = 0.5 * (1 + math.sqrt(1 + 4 * t_mom ** 2))
        y = x_new + ((t_mom - 1) / t_next) * (x_new - x)
        t_mom = t_next
        quiet = quiet + 1 if abs(f_old - f_new) <= 1e-8 * max(abs(f_new), 1e-300) else 0
        x, f_old = x_new, f_new
        if quiet >= 50:
            break
    h = _pdas(Q, x.copy(), lo, hi)
    h = np.clip(h, lo, hi)
    if obj(h) > obj(x):
        h = x
    res = _kkt_residual(Q, h, lo, hi)
    if quiet < 50 and res > 1e-6:
        raise NumericError("box-constrained minimization did not converge",
                           iterations=it, kkt_residual=res, objective=obj(h))
    return BoxResult(obj(h), h, it, res)


# -- phi_B ------------------------------------------------------------------------

@dataclass(frozen=True)
class SmallBall:
    neg_log_prob: float
    se: float
    method: str
    N: int
    tilt: float
    K: int


def _log_mgf_real(theta, var, c2):
    a = 1.0 + 2.0 * theta * var
    return float(np.sum(-0.5 * np.log(a) - theta * c2 / a))


def tilted_ball_mc(sd, center, epsilon: float, N: int, seed: int, stream=(0,)) -> SmallBall:
    """-log P(sum_k (sd_k Z_k - c_k)^2 < eps^2) by exponential tilting.

    Under the tilted law X_k ~ N(2 theta s_k^2 c_k / a_k, s_k^2 / a_k),
    a_k = 1 + 2 theta s_k^2, with theta the saddlepoint tilt, so the event is
    typical; weights exp(theta (S - eps^2)) lie in (0, 1] on the event.
    """
    if epsilon <= 0:
        raise DomainError("epsilon must be positive")
    sd = np.asarray(sd, dtype=float)
    c = np.zeros_like(sd) if center is None else np.asarray(center, dtype=float)
    var = sd ** 2
    x = epsilon ** 2
    theta = saddlepoint_tilt(var, c ** 2 / var, x)
    a = 1.0 + 2.0 * theta * var
    mean, scale = 2.0 * theta * var * c / a, sd / np.sqrt(a)
    stats = MomentSums()
    for b, size in enumerate(batch_sizes(N, MC_BATCH)):
        z = generator(seed, *stream, b).standard_normal((size, sd.size))
        S = np.sum((mean + scale * z - c) ** 2, axis=1)
        y = np.where(S < x, np.exp(theta * (S - x)), 0.0)
        stats = stats + MomentSums.of(y)
    if stats.total == 0:
        raise UnderflowError("no Monte Carlo draw hit the ball; increase N or epsilon",
                             epsilon=epsilon, N=N, tilt=theta)
    log_p = _log_mgf_real(theta, var, c ** 2) + theta * x + math.log(stats.mean)
    return SmallBall(-log_p, stats.sem / stats.mean, "tilted-mc", N, theta, sd.size)


def cf_ball(sd, center, epsilon: float) -> SmallBall:
    """Same quantity by characteristic-function inversion (se = quadrature error)."""
    if epsilon <= 0:
        raise DomainError("epsilon must be positive")
    sd = np.asarray(sd, dtype=float)
    c = np.zeros_like(sd) if center is None else np.asarray(center, dtype=float)
    var = sd ** 2
    try:
        r = quadform_cdf(var, c ** 2 / var, epsilon ** 2)
    except NumericError as exc:
        raise UnderflowError("use tilted-mc", **exc.diagnostics) from exc
    if not math.isfinite(r.log_p) or r.rel_err > CF_RTOL:
        raise UnderflowError("use tilted-mc", log_p=r.log_p, rel_err=r.rel_err)
    return SmallBall(-r.log_p, r.rel_err, "cf-inversion", 0, r.tau, sd.size)


def small_ball_series(prior: SeriesPrior, epsilon: float, method: str = "tilted-mc",
                      N: int = 1_000_000, seed: int = 0, stream=(0,), center=None) -> SmallBall:
    """-log P(sum_{k<=K} (sigma_k Z_k - c_k)^2 < eps^2); c = 0 gives phi_B."""
    c = None
    if center is not None:
        if not isinstance(center, FourierFunction):
            center = FourierFunction(center)
        if center.tail_sq(prior.K) > 0:
            raise DomainError("center has coefficients beyond the prior truncation K")
        c = center.padded(prior.K)
    if method == "tilted-mc":
        return tilted_ball_mc(prior.sigma, c, epsilon, N, seed, stream)
    if method == "cf-inversion":
        return cf_ball(prior.sigma, c, epsilon)
    raise DomainError(f"unknown method {method!r}; use tilted-mc or cf-inversion")


def small_ball_sup_mc(sampler, epsilon: float, N: int, seed: int = 0, stream=(0,),
                      tilt_spec: float | None = None, batch: int = MC_BATCH) -> SmallBall:
    """-log P(max_i |X_i| < eps) by plain Monte Carlo over a grid process.

    ``sampler`` is a FiniteGaussian or a callable ``(size, seed, stream)``
    returning paths as rows.  With a FiniteGaussian, ``tilt_spec = c`` in
    (0, 1] draws from N(0, c^2 Sigma) instead and reweights each path by
    c^r exp((1 - c^2) |xi|^2 / 2), xi the whitened draw.
    """
    if epsilon <= 0:
        raise DomainError("epsilon must be positive")
    cs = None
    if tilt_spec is not None:
        if not isinstance(sampler, FiniteGaussian):
            raise DomainError("tilt_spec needs a FiniteGaussian sampler")
        cs = float(tilt_spec)
        if not 0 < cs <= 1:
            raise DomainError("tilt_spec must lie in (0, 1]")
    stats = MomentSums()
    for b, size in enumerate(batch_sizes(N, batch)):
        sub = (*stream, b)
        if isinstance(sampler, FiniteGaussian):
            xi = generator(seed, *sub).standard_normal((size, sampler.rank))
            paths = xi @ sampler.factor.T
        else:
            paths = sampler(size, seed, sub)
        if cs is None:
            y = (np.max(np.abs(paths), axis=1) < epsilon).astype(float)
        else:
            hit = np.max(np.abs(cs * paths), axis=1) < epsilon
            logw = sampler.rank * math.log(cs) + 0.5 * (1 - cs ** 2) * np.sum(xi ** 2, axis=1)
            y = np.where(hit, np.exp(logw), 0.0)
        stats = stats + MomentSums.of(y)
    if tilt_spec is None and stats.total < 10:
        raise UnderflowError("probability too small for plain MC at this N",
                             epsilon=epsilon, N=N, hits=stats.total)
    if stats.total == 0:
        raise UnderflowError("probability too small for plain MC at this N", epsilon=epsilon, N=N)
    K = getattr(sampler, "dim", 0)
    return SmallBall(-math.log(stats.mean), stats.sem / stats.mean,
                     "plain-mc" if tilt_spec is None else "scaled-mc", N,
                     0.0 if tilt_spec is None else float(tilt_spec), K)


# -- profiles ---------------------------------------------------------------------

@dataclass(frozen=True)
class ConcentrationProfile:
    """phi = phiA + phiB tabulated on a decreasing epsilon grid."""

    epsilons: np.ndarray
    phiA: np.ndarray
    phiB: np.ndarray
    se: np.ndarray
    norm_kind: str = "L2-coefficients"
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        eps = np.asarray(self.epsilons, dtype=float)
        if eps.ndim != 1 or eps.size < 1 or np.any(eps <= 0):
            raise DomainError("epsilons must be positive")
        if eps.size > 1 and np.any(np.diff(eps) >= 0):
            raise DomainError("epsilons must be strictly decreasing")
        if self.norm_kind not in ("L2-coefficients", "sup-grid"):
            raise DomainError(f"unknown norm kind {self.norm_kind!r}")
        for name in ("epsilons", "phiA", "phiB", "se"):
            arr = np.array(getattr(self, name), dtype=float)
            if arr.shape != eps.shape:
                raise DomainError(f"{name} must match the epsilon grid")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def phi(self) -> np.ndarray:
        return self.phiA + self.phiB

    def check_monotone(self, slack: float = 2.0) -> bool:
        """phi(eps_i) >= phi(eps_j) - slack (se_i + se_j) whenever eps_i < eps_j."""
        phi, se = self.phi, self.se
        for j in range(phi.size):
            for i in range(j + 1, phi.size):
                if phi[i] < phi[j] - slack * (se[i] + se[j]) - 1e-9 * abs(phi[j]):
                    return False
        return True

    def check_convex(self, slack: float = 3.0) -> bool:
        """Second divided differences on the (non-uniform) grid >= -slack * local SE."""
        e, phi, se = self.epsilons, self.phi, self.se
        for i in range(1, e.size - 1):
            a, b, c = e[i + 1], e[i], e[i - 1]  # increasing order
            fa, fb, fc = phi[i + 1], phi[i], phi[i - 1]
            # phi(b) <= interpolation of the chord
            chord = fa + (fc - fa) * (b - a) / (c - a)
            local = se[i - 1] + se[i] + se[i + 1]
            if fb > chord + slack * local + 1e-9 * abs(chord):
                return False
        return True

    def check_lemma3(self) -> bool:
        return self.check_monotone() and self.check_convex()

    def rows(self):
        for i, e in enumerate(self.epsilons):
            yield {"epsilon": float(e), "phiA": float(self.phiA[i]), "phiB": float(self.phiB[i]),
                   "phi": float(self.phi[i]), "se": float(self.se[i])}


def analytic_profile(fn, epsilons) -> ConcentrationProfile:
    """Profile of a closed-form phi (phiB = fn, phiA = 0, se = 0)."""
    eps = np.asarray(epsilons, dtype=float)
    return ConcentrationProfile(eps, np.zeros_like(eps), fn(eps), np.zeros_like(eps),
                                provenance={"source": "analytic"})


def build_profile(f0, law, eps_grid, method: str = "tilted-mc", N: int = 1_000_000,
                  seed: int = 0, extra_tail: float = 0.0, stream=(0,)) -> ConcentrationProfile:
    """Tabulate phi over ``eps_grid`` (sorted decreasing on return).

    ``law`` is a SeriesPrior (L2 coefficient norm, f0 a FourierFunction) or a
    FiniteGaussian (sup norm on the grid, f0 grid values).  The MC stream is
    shared across epsilons so neighbouring entries use common random numbers.
    """
    eps = np.sort(np.asarray(eps_grid, dtype=float))[::-1]
    A, B, S = [], [], []
    if isinstance(law, SeriesPrior):
        w = series_weights(law)
        f0 = f0 if f0 is not None else FourierFunction.zeros(law.K)
        for e in eps:
            A.append(phi_A_waterfill(w, f0, e, extra_tail).value)
            sb = small_ball_series(law, e, method, N, seed, stream)
            B.append(sb.neg_log_prob)
            S.append(sb.se if method == "tilted-mc" else 0.0)
        prov = {"K": law.K, "N": N if method == "tilted-mc" else 0, "method": method,
                "alpha": law.alpha, "seed": seed}
        kind = "L2-coefficients"
    elif isinstance(law, FiniteGaussian):
        f0v = np.zeros(law.dim) if f0 is None else np.asarray(getattr(f0, "values", f0))
        for e in eps:
            A.append(phi_A_box(law, f0v, e).value)
            sb = small_ball_sup_mc(law, e, N, seed, stream)
            B.append(sb.neg_log_prob)
            S.append(sb.se)
        prov = {"K": law.dim, "N": N, "method": "plain-mc", "seed": seed}
        kind = "sup-grid"
    else:
        raise DomainError("law must be a SeriesPrior or a FiniteGaussian")
    return ConcentrationProfile(eps, np.array(A), np.array(B), np.array(S), kind, prov)


# -- inverse and fixed points ---------------------------------------------------------

def _log_interp(profile: ConcentrationProfile):
    """phi as a function of epsilon: linear interpolation in (log eps, log phi)."""
    e = profile.epsilons[::-1]
    phi = profile.phi[::-1]
    if np.any(phi <= 0):
        return lambda x: float(np.interp(math.log(x), np.log(e), phi))
    return lambda x: float(np.exp(np.interp(math.log(x), np.log(e), np.log(phi))))


def phi_inverse(profile: ConcentrationProfile, y: float) -> float:
    """Epsilon with phi(epsilon) = y on the monotone interpolant."""
    phi = profile.phi
    lo_val, hi_val = float(np.min(phi)), float(np.max(phi))
    if not lo_val <= y <= hi_val:
        raise RangeError(f"value {y:.6g} outside the attainable interval [{lo_val:.6g}, {hi_val:.6g}]")
    f = _log_interp(profile)
    a, b = float(profile.epsilons[-1]), float(profile.epsilons[0])
    if f(a) == y:
        return a
    if f(b) == y:
        return b
    return optimize.brentq(lambda x: f(x) - y, a, b, xtol=1e-14, rtol=1e-12, maxiter=500)


def solve_epsilon_n(profile: ConcentrationProfile, n: float) -> float:
    """Smallest epsilon with phi(epsilon) <= n epsilon^2 on the interpolant."""
    if n < 1:
        raise DomainError("n must be at least 1")
    f = _log_interp(profile)
    gap = lambda x: f(x) - n * x * x
    a, b = float(profile.epsilons[-1]), float(profile.epsilons[0])
    if gap(a) <= 0:
        raise RangeError("profile does not reach small enough epsilon for this n")
    if gap(b) > 0:
        raise RangeError("phi exceeds n eps^2 over the whole profile")
    return optimize.brentq(gap, a, b, xtol=1e-14, rtol=1e-12, maxiter=500)


def zeta_lower(profile: ConcentrationProfile, n: float, epsilon_n: float, c: float = 7.0) -> float:
    """phi^{-1}((2 + c) n eps_n^2); c = 7 gives the factor 9."""
    return phi_inverse(profile, (2.0 + c) * n * epsilon_n ** 2)


# -- verifiers ----------------------------------------------------------------------

@dataclass(frozen=True)
class SandwichReport:
    epsilon: float
    estimate: float
    se: float
    lower: float
    upper: float
    phiA: float
    phiA_half: float
    phiB: float
    phiB_half: float
    passed: bool


def sandwich_check(prior: SeriesPrior, f0: FourierFunction, epsilon: float, N: int = 1_000_000,
                   seed: int = 0, corrupt: float = 1.0, method_B: str = "cf-inversion") -> SandwichReport:
    """phi(eps) - 3 SE <= -log P(|Z - f0| < eps) <= phi(eps/2) + 3 SE.

    ``corrupt`` multiplies phi_A (negative controls).  The shifted ball is
    estimated by tilted MC; phi_B by ``method_B``.
    """
    w = series_weights(prior)
    phiA = corrupt * phi_A_waterfill(w, f0, epsilon).value
    phiA_half = corrupt * phi_A_waterfill(w, f0, epsilon / 2).value
    b1 = small_ball_series(prior, epsilon, method_B, N, seed, (1,))
    b2 = small_ball_series(prior, epsilon / 2, method_B, N, seed, (2,))
    L = small_ball_series(prior, epsilon, "tilted-mc", N, seed, (0,), center=f0)
    se_tot = math.sqrt(L.se ** 2 + b1.se ** 2 + b2.se ** 2)
    lower = phiA + b1.neg_log_prob
    upper = phiA_half + b2.neg_log_prob
    ok = lower - 3 * se_tot <= L.neg_log_prob <= upper + 3 * se_tot
    return SandwichReport(epsilon, L.neg_log_prob, se_tot, lower, upper, phiA, phiA_half,
                          b1.neg_log_prob, b2.neg_log_prob, bool(ok))


@dataclass(frozen=True)
class ShiftReport:
    rho: float
    epsilon: float
    phi_shifted: float
    phi_base: float
    bound: float
    se: float
    passed: bool


def shift_bound_check(G: FiniteGaussian, w0, rho: float, epsilon: float, N: int = 200_000,
                      seed: int = 0) -> ShiftReport:
    """phi_{w0+rho}(eps) >= phi_{w0}(eps) + rho^2 - 2(|w0(0)| + eps)|rho|, within 3 SE.

    The two small-ball terms use independent streams.
    """
    if epsilon <= 0:
        raise DomainError("epsilon must be positive")
    w0 = np.asarray(getattr(w0, "values", w0), dtype=float)
    a_shift = phi_A_box(G, w0 + rho, epsilon).value
    a_base = phi_A_box(G, w0, epsilon).value
    b_shift = small_ball_sup_mc(G, epsilon, N, seed, (1,))
    b_base = small_ball_sup_mc(G, epsilon, N, seed, (2,))
    shifted = a_shift + b_shift.neg_log_prob
    base = a_base + b_base.neg_log_prob
    bound = base + rho ** 2 - 2 * (abs(w0[0]) + epsilon) * abs(rho)
    se = math.hypot(b_shift.se, b_base.se)
    return ShiftReport(rho, epsilon, shifted, base, bound, se, bool(shifted >= bound - 3 * se))
