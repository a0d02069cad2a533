"""One runner per harness subcommand.

Each runner takes the validated parameter map, the seed, the replicate count
and a ``pmap`` (ordered map, possibly parallel) and returns a ``Table``.
Every row carries the provenance columns seed, replicate, K and N.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from . import concentration as conc
from . import density as dens
from . import whitenoise as wn
from .fractional import (check_lemma6, frac_integral, lemma6_rhs, theorem4_bound)
from .gaussian import RLTypeParams, SeriesPrior, covariance_rl_type
from .rng import generator
from .sequences import (FourierFunction, GridFunction, RateParams, grid, rate_rn,
                        worst_case_f0, worst_case_tail)

PROVENANCE = ["seed", "replicate", "K", "N"]


@dataclass
class Table:
    columns: list
    rows: list
    summary: dict = field(default_factory=dict)


def _table(cols, rows, seed, summary=None):
    for r in rows:
        r.setdefault("seed", seed)
        r.setdefault("replicate", 0)
        r.setdefault("K", 0)
        r.setdefault("N", 0)
    return Table(PROVENANCE + [c for c in cols if c not in PROVENANCE], rows, summary or {})


def loglog_slope(x, y) -> float:
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


# -- rates ------------------------------------------------------------------------

def run_rates(p, seed, replicates, pmap):
    rows = []
    for n in p["n"]:
        rows.append(dict(alpha=p["alpha"], beta=p["beta"], n=n,
                         rate=rate_rn(RateParams(p["alpha"], p["beta"], n))))
    return _table(["alpha", "beta", "n", "rate"], rows, seed)


# -- concentration / small-ball / sandwich ----------------------------------------------

def _profile_rows(prof, seed):
    out = []
    for i, r in enumerate(prof.rows()):
        r.update(K=prof.provenance.get("K", 0), N=prof.provenance.get("N", 0), seed=seed,
                 replicate=0, index=i)
        out.append(r)
    return out


def run_concentration(p, seed, replicates, pmap):
    prior = SeriesPrior(p["alpha"], p["K"])
    f0 = FourierFunction(p["f0"]) if p["f0"] else None
    prof = conc.build_profile(f0, prior, p["eps"], p["method"], p["N"], seed)
    summary = {"monotone": prof.check_monotone(), "convex": prof.check_convex(),
               "lemma3": prof.check_lemma3()}
    return _table(["index", "epsilon", "phiA", "phiB", "phi", "se"], _profile_rows(prof, seed),
                  seed, summary)


def run_small_ball(p, seed, replicates, pmap):
    prior = SeriesPrior(p["alpha"], p["K"])
    rows = []
    for i, e in enumerate(p["eps"]):
        sb = conc.small_ball_series(prior, e, p["method"], p["N"], seed, (i,))
        rows.append(dict(epsilon=e, neg_log_prob=sb.neg_log_prob, se=sb.se, tilt=sb.tilt,
                         method=sb.method, K=sb.K, N=sb.N))
    eps = np.array(p["eps"])
    vals = np.array([r["neg_log_prob"] for r in rows])
    summary = {"slope": loglog_slope(eps, vals) if eps.size > 1 else math.nan,
               "target_slope": -1.0 / p["alpha"]}
    return _table(["epsilon", "neg_log_prob", "se", "tilt", "method"], rows, seed, summary)


def run_sandwich(p, seed, replicates, pmap):
    prior = SeriesPrior(p["alpha"], p["K"])
    f0 = FourierFunction(p["f0"])
    rows = []
    for e in p["eps"]:
        rep = conc.sandwich_check(prior, f0, e, p["N"], seed, p["corrupt"])
        rows.append(dict(epsilon=e, estimate=rep.estimate, se=rep.se, lower=rep.lower,
                         upper=rep.upper, phiA=rep.phiA, phiA_half=rep.phiA_half, phiB=rep.phiB,
                         phiB_half=rep.phiB_half, passed=rep.passed, K=p["K"], N=p["N"]))
    return _table(["epsilon", "estimate", "se", "lower", "upper", "phiA", "phiA_half", "phiB",
                   "phiB_half", "passed"], rows, seed,
                  {"all_passed": all(r["passed"] for r in rows), "corrupt": p["corrupt"]})


# -- white-noise experiments -----------------------------------------------------------

RING_COLS = ["n", "rate", "outer_radius", "inner_radius", "outer", "inner", "ring",
             "outer_se", "inner_se", "ring_se"]


def ring_f0(p) -> FourierFunction:
    if p["f0_kind"] == "power":
        k = np.arange(1, p["K_max"] + 1, dtype=float)
        return FourierFunction(k ** (-p["f0_power"]))
    return worst_case_f0(p["beta"], p["K_max"], p["L"])


def run_ring(p, seed, replicates, pmap):
    cfg = wn.RingConfig(p["alpha"], p["beta"], ring_f0(p), tuple(p["n_list"]), p["M"],
                        p["m_ring"], replicates, p["K"] or None, seed, p["log_power"], p["method"])
    rows = wn.ring_experiment(cfg, pmap)
    agg = wn.aggregate_rows(rows)
    return _table(RING_COLS, rows, seed, {"outer": [r["outer"] for r in agg],
                                          "inner": [r["inner"] for r in agg]})


def run_remark2(p, seed, replicates, pmap):
    rows = wn.remark2_experiment(p["alpha"], p["beta"], p["n_list"], p["M"], replicates, p["L"],
                                 seed, pmap)
    agg = wn.aggregate_rows(rows)
    return _table(RING_COLS + ["k_n", "sobolev"], rows, seed,
                  {"inner": [r["inner"] for r in agg]})


def run_lemma1(p, seed, replicates, pmap):
    """Prior mass ratio at zeta = phi^{-1}((2 + c) n eps_n^2) from an exact profile."""
    prior = SeriesPrior(p["alpha"], p["K"])
    k = np.arange(1, p["K_max"] + 1, dtype=float)
    f0 = FourierFunction(k ** (-p["f0_power"]))
    eps = np.geomspace(p["eps_max"], p["eps_min"], p["eps_points"])
    prof = conc.build_profile(f0, prior, eps, "cf-inversion", 0, seed)
    rows = []
    for i_n, n in enumerate(p["n_list"]):
        eps_n = conc.solve_epsilon_n(prof, n)
        zeta = conc.zeta_lower(prof, n, eps_n, p["c"])
        rep = wn.lemma1_ratio(prior, f0, zeta, eps_n, n, seed=seed)
        # what the ratio controls: posterior mass of the zeta-ball
        masses = []
        for r in range(replicates):
            obs = wn.observe(f0, n, prior.K, seed, (i_n, r))
            masses.append(wn.ball_mass(wn.posterior(prior, obs), f0, zeta).probability)
        rows.append(dict(n=n, eps_n=eps_n, zeta=zeta, log_ratio=rep.log_ratio,
                         log_threshold=rep.log_threshold, condition_met=rep.condition_met,
                         bound_only=rep.bound_only, posterior_mass=float(np.mean(masses)),
                         K=prior.K, replicate=-1))
    return _table(["n", "eps_n", "zeta", "log_ratio", "log_threshold", "condition_met",
                   "bound_only", "posterior_mass"], rows, seed,
                  {"lemma3": prof.check_lemma3()})


def run_worst_case(p, seed, replicates, pmap):
    """phi_A(eps_n / log^2 n) / (n eps_n^2) for the worst-case truth, eps_n = r_n."""
    rows = []
    for n in p["n_list"]:
        eps_n = rate_rn(RateParams(p["alpha"], p["beta"], n))
        zeta = eps_n / math.log(n) ** p["log_power"]
        f0 = worst_case_f0(p["beta"], p["K_max"])
        prior = SeriesPrior(p["alpha"], p["K_max"])
        tail = worst_case_tail(p["beta"], p["K_max"])
        wf = conc.phi_A_waterfill(conc.series_weights(prior), f0, zeta, extra_tail=tail)
        rows.append(dict(n=n, eps_n=eps_n, zeta=zeta, phiA=wf.value, ratio=wf.value / (n * eps_n ** 2),
                         tail=wf.tail, K=p["K_max"], replicate=-1))
    return _table(["n", "eps_n", "zeta", "phiA", "ratio", "tail"], rows, seed)


# -- RL-type and density experiments --------------------------------------------------------

def run_shift_bound(p, seed, replicates, pmap):
    G = covariance_rl_type(RLTypeParams(p["alpha"], p["m"]))
    w0 = np.zeros(p["m"])
    rows = []
    for rho in p["rho"]:
        rep = conc.shift_bound_check(G, w0, rho, p["epsilon"], p["N"], seed)
        rows.append(dict(rho=rho, epsilon=rep.epsilon, phi_shifted=rep.phi_shifted,
                         phi_base=rep.phi_base, bound=rep.bound, se=rep.se, passed=rep.passed,
                         K=G.dim, N=p["N"]))
    return _table(["rho", "epsilon", "phi_shifted", "phi_base", "bound", "se", "passed"], rows,
                  seed, {"all_passed": all(r["passed"] for r in rows)})


def random_rough_pair(m: int, seed: int, index: int):
    """A random-walk path and a perturbation of random amplitude and roughness."""
    g = generator(seed, index)
    scale = g.uniform(0.1, 3.0)
    v = np.cumsum(g.standard_normal(m)) * scale / math.sqrt(m)
    rough = g.standard_normal(m) * g.uniform(0.0, 2.0)
    smooth = np.cumsum(g.standard_normal(m)) * g.uniform(0.0, 2.0) / math.sqrt(m)
    return v, v + rough + smooth + g.uniform(-1, 1)


def _lemma5_job(args):
    m, seed, i = args
    v, w = random_rough_pair(m, seed, i)
    return dens.lemma5_check(v, w)


def run_lemma5(p, seed, replicates, pmap):
    reps = list(pmap(_lemma5_job, [(p["m"], seed, i) for i in range(p["pairs"])]))
    rows = [dict(replicate=i, sup_dist=r.sup_dist, hellinger=r.hellinger,
                 hellinger_bound=r.hellinger_bound, passed=r.passed, kl=r.kl, v2=r.v2,
                 ratio=r.ratio, K=p["m"]) for i, r in enumerate(reps)]
    ratios = np.array([r.ratio for r in reps if not r.degenerate])
    summary = {"violations": sum(not r.passed for r in reps),
               "ratio_max": float(ratios.max()) if ratios.size else math.nan,
               "ratio_median": float(np.median(ratios)) if ratios.size else math.nan,
               "ratio_mean": float(ratios.mean()) if ratios.size else math.nan}
    return _table(["sup_dist", "hellinger", "hellinger_bound", "passed", "kl", "v2", "ratio"],
                  rows, seed, summary)


def run_frac_check(p, seed, replicates, pmap):
    m = p["m"]
    t_grid = grid(m)
    rows = []
    for alpha in (0.3, 0.5, 1.2):
        for power in (0, 1, 2):
            f = GridFunction(t_grid ** power)
            for t in (0.25, 1.0):
                got = frac_integral(f, alpha, t)
                want = special.beta(alpha, power + 1) * t ** (alpha + power)
                rows.append(dict(check="monomial", a=alpha, b=0.0, p=power, t=t, value=got,
                                 expected=want, rel_err=abs(got / want - 1)))
    for a in (0.5, 1.0):
        for b in (0.5, 1.0):
            for power in (0, 1, 2):
                f = GridFunction(t_grid ** power)
                inner = GridFunction(frac_integral(f, b, t_grid))
                got = frac_integral(inner, a, 1.0)
                want = special.beta(a, b) * frac_integral(f, a + b, 1.0)
                rows.append(dict(check="composition", a=a, b=b, p=power, t=1.0, value=got, expected=want,
                                 rel_err=abs(got / want - 1)))
    for alpha, beta in ((0.5, 0.5), (1.0, 0.5), (1.0, 0.7)):
        tb = theorem4_bound(alpha, beta, 0.1)
        rows.append(dict(check="theorem4", a=alpha, b=beta, p=0, t=0.1, value=tb.exponent,
                         expected=float(tb.log_factor), rel_err=0.0))
    g = lambda u: np.where(u > 0, 1.0, -1.0) * (np.abs(u) <= 1)
    rhs = lemma6_rhs(g, 0.75, (-1.0, 1.0))
    rows.append(dict(check="lemma6_rhs", a=0.75, b=0.0, p=0, t=0.0, value=rhs, expected=8 / 7,
                     rel_err=abs(rhs * 7 / 8 - 1)))
    # Hoelder-1/4 truth, alpha = 1/2: s = 3/4
    f = GridFunction(np.abs(t_grid - 0.5) ** 0.25)
    for sigma in (0.2, 0.1, 0.05):
        lr = check_lemma6(f, 0.5, lambda u, sg=sigma: g(u / sg) / sg, (-sigma, sigma), 0.75)
        rows.append(dict(check="lemma6_ratio", a=0.5, b=sigma, p=0, t=0.0, value=lr.ratio,
                         expected=math.nan, rel_err=math.nan))
    ident = [r["rel_err"] for r in rows if r["check"] in ("monomial", "composition")]
    return _table(["check", "a", "b", "p", "t", "value", "expected", "rel_err"],
                  [dict(r, K=m) for r in rows], seed, {"max_identity_rel_err": max(ident)})


DENSITY_COLS = ["n", "eps_n", "zeta_n", "outer", "inner", "sup_tail", "acceptance",
                "rejected_nonfinite", "flagged", "outer_se", "inner_se"]


def run_density(p, seed, replicates, pmap):
    cfg = dens.DensityConfig(alpha=p["alpha"], beta=p["beta"], n_list=tuple(p["n_list"]),
                             R=replicates, m=p["m"], steps=p["steps"], thin=p["thin"], M=p["M"],
                             C1=p["C1"], d=p["d"], zeta_scale=p["zeta_scale"], seed=seed)
    rows = dens.contraction_experiment(cfg, replicate_map=pmap)
    agg = [r for r in rows if r["replicate"] == -1]
    return _table(DENSITY_COLS, rows, seed, {"outer": [r["outer"] for r in agg],
                                             "inner": [r["inner"] for r in agg]})


def run_remark3(p, seed, replicates, pmap):
    rows = dens.remark3_experiment(p["n_list"], replicates, seed, p["m_list"], p["m"], p["steps"],
                                   replicate_map=pmap)
    return _table(["n", "m", "radius", "mass", "acceptance", "mass_se"], rows, seed)


RUNNERS = {
    "rates": run_rates,
    "concentration": run_concentration,
    "small-ball": run_small_ball,
    "sandwich": run_sandwich,
    "ring": run_ring,
    "remark2": run_remark2,
    "shift-bound": run_shift_bound,
    "lemma5-audit": run_lemma5,
    "frac-check": run_frac_check,
    "density": run_density,
    "remark3": run_remark3,
    "lemma1-ratio": run_lemma1,
    "worst-case": run_worst_case,
}

__all__ = ["RUNNERS", "Table"]
