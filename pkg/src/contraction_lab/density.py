"""Density estimation with exponentiated Gaussian priors.

A path w on the grid becomes the density p_w = e^w / int e^w.  The posterior
for i.i.d. data is explored with a preconditioned Crank-Nicolson sampler on
the Karhunen-Loeve coefficients of the prior.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize
from scipy.special import logsumexp

from .concentration import analytic_profile, solve_epsilon_n, zeta_lower
from .errors import DomainError
from .fractional import theorem4_bound
from .gaussian import FiniteGaussian, RLTypeParams, covariance_rl_type
from .rng import MomentSums, generator
from .sequences import GridFunction, grid, trapezoid_weights

MASS_TOL = 1e-8


@dataclass(frozen=True)
class DensityOnGrid:
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 1 or v.size < 2:
            raise DomainError("a density needs at least two grid points")
        if np.any(v < 0) or not np.all(np.isfinite(v)):
            raise DomainError("density values must be finite and non-negative")
        mass = float(trapezoid_weights(v.size) @ v)
        if abs(mass - 1.0) > MASS_TOL:
            raise DomainError(f"density has mass {mass!r}, not 1")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def m(self) -> int:
        return self.values.size

    @property
    def t(self) -> np.ndarray:
        return grid(self.m)


def _log_normalizer(w: np.ndarray) -> float:
    """log sum_i q_i e^{w_i} with trapezoid weights q."""
    return float(logsumexp(w, b=trapezoid_weights(w.size)))


def p_w(w) -> DensityOnGrid:
    v = np.asarray(getattr(w, "values", w), dtype=float)
    return DensityOnGrid(np.exp(v - _log_normalizer(v)))


def _pair(f: DensityOnGrid, g: DensityOnGrid):
    if f.m != g.m:
        raise DomainError("densities live on different grids")
    return f.values, g.values, trapezoid_weights(f.m)


def hellinger(f: DensityOnGrid, g: DensityOnGrid) -> float:
    """(int (sqrt f - sqrt g)^2)^{1/2}."""
    a, b, q = _pair(f, g)
    return float(np.sqrt(max(q @ (np.sqrt(a) - np.sqrt(b)) ** 2, 0.0)))


def _log_ratio(a, b):
    pos = a > 0
    if np.any(pos & (b <= 0)):
        return None, pos
    lr = np.zeros_like(a)
    lr[pos] = np.log(a[pos]) - np.log(b[pos])
    return lr, pos


def kl(f: DensityOnGrid, g: DensityOnGrid) -> float:
    """int f log(f/g); +inf when g vanishes where f does not."""
    a, b, q = _pair(f, g)
    lr, _ = _log_ratio(a, b)
    return math.inf if lr is None else float(q @ (a * lr))


def v2(f: DensityOnGrid, g: DensityOnGrid) -> float:
    """int f (log(f/g) - K(f, g))^2."""
    a, b, q = _pair(f, g)
    lr, _ = _log_ratio(a, b)
    if lr is None:
        return math.inf
    K = float(q @ (a * lr))
    return float(q @ (a * (lr - K) ** 2))


def sup_distance(f: DensityOnGrid, g: DensityOnGrid) -> float:
    a, b, _ = _pair(f, g)
    return float(np.max(np.abs(a - b)))


@dataclass(frozen=True)
class Lemma5Report:
    sup_dist: float
    hellinger: float
    hellinger_bound: float
    passed: bool
    kl: float
    v2: float
    ratio: float
    degenerate: bool


def lemma5_check(v, w) -> Lemma5Report:
    """h(p_v, p_w) <= |v - w|_inf exp(|v - w|_inf / 2), plus the KL/V2 ratio.

    The ratio max(K, V2) / (d^2 e^{d/2} (1 + d)^2), d = |v - w|_inf, estimates
    the unspecified constant of the second bound and is only recorded.
    """
    va = np.asarray(getattr(v, "values", v), dtype=float)
    wa = np.asarray(getattr(w, "values", w), dtype=float)
    d = float(np.max(np.abs(va - wa)))
    pv, pw = p_w(va), p_w(wa)
    h = hellinger(pv, pw)
    bound = d * math.exp(d / 2)
    passed = h <= bound * (1 + 1e-12) + 1e-15
    K, V = kl(pv, pw), v2(pv, pw)
    denom = d * d * math.exp(d / 2) * (1 + d) ** 2
    degenerate = denom == 0.0
    ratio = math.nan if degenerate else max(K, V) / denom
    return Lemma5Report(d, h, bound, bool(passed), K, V, ratio, degenerate)


def sample_iid(f: DensityOnGrid, n: int, seed: int = 0, stream=(0,)) -> np.ndarray:
    """Inverse-CDF draws; the CDF is linear between grid points."""
    if n < 0:
        raise DomainError("n must be non-negative")
    t = f.t
    cell = 0.5 * (f.values[1:] + f.values[:-1]) * np.diff(t)
    cdf = np.concatenate([[0.0], np.cumsum(cell)])
    cdf /= cdf[-1]
    u = generator(seed, *stream).random(n)
    return np.interp(u, cdf, t)


# -- posterior sampling -------------------------------------------------------------

def hat_counts(data, m: int) -> np.ndarray:
    """c_j = sum_i phi_j(X_i) for the piecewise-linear hat basis on the grid.

    Then sum_i w(X_i) = c . w for the linear interpolant of w.
    """
    x = np.clip(np.asarray(data, dtype=float), 0.0, 1.0) * (m - 1)
    j = np.minimum(np.floor(x).astype(int), m - 2)
    frac = x - j
    c = np.bincount(j, weights=1.0 - frac, minlength=m)
    c += np.bincount(j + 1, weights=frac, minlength=m)
    return c


class _Likelihood:
    def __init__(self, data, basis: np.ndarray):
        self.basis = basis
        m = basis.shape[0]
        self.n = int(np.asarray(data).size)
        self.counts = hat_counts(data, m) if self.n else np.zeros(m)
        self.q = trapezoid_weights(m)

    def __call__(self, xi) -> float:
        if self.n == 0:
            return 0.0
        w = self.basis @ xi
        return float(self.counts @ w - self.n * _log_normalizer(w))

    def grad(self, xi) -> np.ndarray:
        if self.n == 0:
            return np.zeros_like(xi)
        w = self.basis @ xi
        p = self.q * np.exp(w - _log_normalizer(w))
        return self.basis.T @ (self.counts - self.n * p)


@dataclass
class PcnChain:
    states: np.ndarray
    loglik: np.ndarray
    accepted: int
    proposals: int
    step: float
    burn_in: int
    thin: int
    audit: list = field(default_factory=list)

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.proposals if self.proposals else math.nan

    def paths(self, basis: np.ndarray) -> np.ndarray:
        return self.states @ basis.T


def kl_basis(G: FiniteGaussian) -> np.ndarray:
    """m x r matrix B with w = B xi, xi ~ N(0, I_r), distributed as the prior."""
    return G.factor


def map_coefficients(data, basis: np.ndarray) -> np.ndarray:
    """Maximizer of loglik(xi) - |xi|^2 / 2."""
    lik = _Likelihood(data, basis)
    r = basis.shape[1]
    if lik.n == 0:
        return np.zeros(r)
    res = optimize.minimize(lambda x: 0.5 * x @ x - lik(x), np.zeros(r),
                            jac=lambda x: x - lik.grad(x), method="L-BFGS-B",
                            options={"maxiter": 2000, "gtol": 1e-8})
    return res.x


def pcn_posterior(data, basis: np.ndarray, steps: int, s: float | None = None, seed: int = 0,
                  stream=(0,), burn_frac: float = 0.2, thin: int = 10, target: float = 0.3,
                  init: str = "map") -> PcnChain:
    """pCN chain on KL coefficients: xi' = sqrt(1 - s^2) xi + s eta.

    With ``s`` None the step is tuned during burn-in towards acceptance
    ``target`` and frozen afterwards; a given ``s`` is used throughout.
    States after burn-in are kept every ``thin`` steps.
    """
    if steps < 1:
        raise DomainError("steps must be at least 1")
    if s is not None and not 0 < s < 1:
        raise DomainError("step size must lie in (0, 1)")
    lik = _Likelihood(data, basis)
    r = basis.shape[1]
    g = generator(seed, *stream)
    if init == "map":
        xi = map_coefficients(data, basis)
    elif init == "prior":
        xi = g.standard_normal(r)
    else:
        xi = np.zeros(r)
    ll = lik(xi)
    tune = s is None
    step = 0.2 if tune else s
    burn = int(burn_frac * steps)
    states, lls, audit = [], [], []
    accepted = proposals = window_acc = 0
    eta_all = g.standard_normal((steps, r))
    u_all = np.log(g.random(steps))
    for it in range(steps):
        prop = math.sqrt(1 - step * step) * xi + step * eta_all[it]
        ll_prop = lik(prop)
        if not math.isfinite(ll_prop):
            audit.append(f"step {it}: non-finite log-likelihood, proposal rejected")
            ok = False
        else:
            ok = u_all[it] < ll_prop - ll
        if ok:
            xi, ll = prop, ll_prop
        if it >= burn:
            proposals += 1
            accepted += ok
            if (it - burn) % thin == 0:
                states.append(xi.copy())
                lls.append(ll)
        elif tune:
            window_acc += ok
            if (it + 1) % 50 == 0:
                rate = window_acc / 50
                step = float(np.clip(step * math.exp(rate - target), 1e-4, 0.999))
                window_acc = 0
    return PcnChain(np.array(states).reshape(-1, r), np.array(lls), accepted, proposals,
                    step, burn, thin, audit)


def batch_means_se(x: np.ndarray, batches: int = 50) -> float:
    """Standard error of the mean of a correlated series by batch means."""
    x = np.asarray(x, dtype=float)
    b = x.size // batches
    if b < 1:
        return math.nan
    means = x[: b * batches].reshape(batches, b).mean(axis=1)
    return float(means.std(ddof=1) / math.sqrt(batches))


# -- experiments --------------------------------------------------------------------

@dataclass(frozen=True)
class DensityConfig:
    alpha: float = 0.5
    beta: float = 0.5
    n_list: tuple = (250, 1000, 4000)
    R: int = 20
    m: int = 65
    m_data: int = 1025
    steps: int = 20_000
    thin: int = 10
    M: float = 1.0
    C1: float = 1.0
    d: float = 1.0
    zeta_scale: float = 1.0
    sup_C: float = 1.0
    poly_degree: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.alpha <= 0 or self.beta <= 0:
            raise DomainError("alpha and beta must be positive")
        if self.R < 1 or self.steps < 10 or self.m < 3:
            raise DomainError("R, steps and m are too small")


def default_w0(t):
    return np.sin(2 * np.pi * t)


def rates_for(cfg: DensityConfig, n: int) -> tuple[float, float]:
    """(eps_n, zeta_n) from a profile C1 * eps^{-a} (log 1/eps)^[log]."""
    eps = np.geomspace(0.9, 1e-6, 400)

    def phi(e):
        return cfg.C1 * np.array([theorem4_bound(cfg.alpha, cfg.beta, x).value for x in np.atleast_1d(e)])

    prof = analytic_profile(phi, eps)
    eps_n = solve_epsilon_n(prof, n)
    zeta = cfg.zeta_scale * zeta_lower(prof, n, eps_n, c=2 * cfg.d ** 2 - 1)
    return eps_n, zeta


def _density_replicate(cfg: DensityConfig, w0, basis, i_n, n, rep):
    f0_data = p_w(w0(grid(cfg.m_data)))
    data = sample_iid(f0_data, n, cfg.seed, (i_n, rep, 0))
    chain = pcn_posterior(data, basis, cfg.steps, seed=cfg.seed, stream=(i_n, rep, 1),
                          thin=cfg.thin)
    f0 = p_w(w0(grid(cfg.m)))
    paths = chain.paths(basis)
    dens = np.exp(paths - logsumexp(paths, b=trapezoid_weights(cfg.m), axis=1)[:, None])
    q = trapezoid_weights(cfg.m)
    hell = np.sqrt(np.maximum(((np.sqrt(dens) - np.sqrt(f0.values)) ** 2) @ q, 0.0))
    sup = np.max(np.abs(dens - f0.values), axis=1)
    wsup = np.max(np.abs(paths), axis=1)
    return hell, sup, wsup, chain.acceptance_rate, len(chain.audit)


def contraction_experiment(cfg: DensityConfig, w0=default_w0, replicate_map=map) -> list[dict]:
    """Hellinger outer mass and sup-norm inner mass of the pCN posterior."""
    G = covariance_rl_type(RLTypeParams(cfg.alpha, cfg.m, cfg.poly_degree))
    basis = kl_basis(G)
    rows = []
    for i_n, n in enumerate(cfg.n_list):
        n = int(n)
        eps_n, zeta = rates_for(cfg, n)
        jobs = [(cfg, w0, basis, i_n, n, rep) for rep in range(cfg.R)]
        out_s, in_s = MomentSums(), MomentSums()
        for rep, (hell, sup, wsup, acc, bad) in enumerate(replicate_map(_density_job, jobs)):
            outer = float(np.mean(hell <= cfg.M * eps_n))
            inner = float(np.mean(sup <= zeta))
            tail = float(np.mean(wsup > cfg.sup_C * math.sqrt(n) * eps_n))
            flagged = not (0.1 <= acc <= 0.9)
            rows.append(dict(n=n, replicate=rep, K=G.rank, N=hell.size, eps_n=eps_n, zeta_n=zeta,
                             outer=outer, inner=inner, sup_tail=tail, acceptance=acc,
                             rejected_nonfinite=bad, flagged=flagged, outer_se=0.0, inner_se=0.0))
            out_s, in_s = out_s + MomentSums.of([outer]), in_s + MomentSums.of([inner])
        sel = [r for r in rows if r["n"] == n and r["replicate"] >= 0]
        rows.append(dict(n=n, replicate=-1, K=G.rank, N=sum(r["N"] for r in sel), eps_n=eps_n,
                         zeta_n=zeta, outer=out_s.mean, inner=in_s.mean,
                         sup_tail=float(np.mean([r["sup_tail"] for r in sel])),
                         acceptance=float(np.mean([r["acceptance"] for r in sel])),
                         rejected_nonfinite=sum(r["rejected_nonfinite"] for r in sel),
                         flagged=any(r["flagged"] for r in sel),
                         outer_se=out_s.sem if out_s.count > 1 else 0.0,
                         inner_se=in_s.sem if in_s.count > 1 else 0.0))
    return rows


def _density_job(args):
    return _density_replicate(*args)


def remark3_experiment(n_list=(250, 1000, 4000), R: int = 10, seed: int = 0,
                       m_list=(0.0, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0), m: int = 65,
                       steps: int = 20_000, w0=default_w0, replicate_map=map) -> list[dict]:
    """Posterior mass of {|f - f0|_inf >= m n^{-1/4}} under B + Z_0."""
    cfg = DensityConfig(alpha=0.5, beta=0.5, n_list=tuple(n_list), R=R, m=m, steps=steps,
                        poly_degree=0, seed=seed)
    G = covariance_rl_type(RLTypeParams(0.5, m, 0))
    basis = kl_basis(G)
    rows = []
    for i_n, n in enumerate(cfg.n_list):
        jobs = [(cfg, w0, basis, i_n, int(n), rep) for rep in range(R)]
        sups = []
        for rep, (_, sup, _, acc, _) in enumerate(replicate_map(_density_job, jobs)):
            sups.append(sup)
            for c in m_list:
                rows.append(dict(n=int(n), replicate=rep, K=G.rank, N=sup.size, m=c,
                                 radius=c * n ** -0.25, mass=float(np.mean(sup >= c * n ** -0.25)),
                                 acceptance=acc, mass_se=0.0))
        for c in m_list:
            per = [float(np.mean(s >= c * n ** -0.25)) for s in sups]
            st = MomentSums.of(per)
            rows.append(dict(n=int(n), replicate=-1, K=G.rank, N=sum(s.size for s in sups), m=c,
                             radius=c * n ** -0.25, mass=st.mean, acceptance=math.nan,
                             mass_se=st.sem if st.count > 1 else 0.0))
    return rows
