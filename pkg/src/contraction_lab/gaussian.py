"""Gaussian priors: the trigonometric series prior, Riemann-Liouville processes
and finite-dimensional Gaussian laws on a grid with their RKHS norms."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .errors import DomainError, NumericError, OutsideRKHSError
from .rng import generator
from .sequences import FourierFunction, GridFunction, grid

RANK_TOL = 1e-12
PROJ_TOL = 1e-6
MAX_COVARIANCE_GRID = 2048


@dataclass(frozen=True)
class SeriesPrior:
    """sum_k sigma_k Z_k e_k with sigma_k = k^{-1/2-alpha}, truncated at K."""

    alpha: float
    K: int

    def __post_init__(self):
        if self.alpha <= 0:
            raise DomainError("alpha must be positive")
        if self.K < 1:
            raise DomainError("K must be at least 1")

    @property
    def sigma(self) -> np.ndarray:
        return np.arange(1, self.K + 1, dtype=float) ** (-0.5 - self.alpha)

    @property
    def variances(self) -> np.ndarray:
        return np.arange(1, self.K + 1, dtype=float) ** (-1.0 - 2 * self.alpha)

    @property
    def rkhs_weights(self) -> np.ndarray:
        """w_k = 1/sigma_k^2 = k^{1+2 alpha}."""
        return np.arange(1, self.K + 1, dtype=float) ** (1.0 + 2 * self.alpha)


def sample_series(prior: SeriesPrior, seed: int, stream: int = 0) -> FourierFunction:
    z = generator(seed, stream).standard_normal(prior.K)
    return FourierFunction(prior.sigma * z)


def sample_series_batch(prior: SeriesPrior, size: int, seed: int, stream: int = 0) -> np.ndarray:
    """``size`` prior draws as rows of an array."""
    z = generator(seed, stream).standard_normal((size, prior.K))
    return z * prior.sigma


def rkhs_norm_series(prior: SeriesPrior, h: FourierFunction) -> float:
    """(sum_k k^{1+2 alpha} h_k^2)^{1/2}."""
    c = h.coeffs
    if c.size > prior.K and np.any(c[prior.K:] != 0):
        raise DomainError("h has coefficients beyond the prior truncation K")
    c = c[: prior.K]
    return float(np.sqrt(np.sum(prior.rkhs_weights[: c.size] * c ** 2)))


# -- Riemann-Liouville processes ------------------------------------------------

@dataclass(frozen=True)
class RLTypeParams:
    """R^alpha plus the independent polynomial sum_{k=0}^{d} Z_k t^k.

    ``poly_degree`` defaults to floor(alpha) + 1.  Passing 0 gives the
    "released at zero" process R + Z_0.
    """

    alpha: float
    m: int
    poly_degree: int | None = None

    def __post_init__(self):
        if self.alpha <= 0:
            raise DomainError("alpha must be positive")
        if self.m < 2:
            raise DomainError("grid size must be at least 2")
        if self.poly_degree is None:
            object.__setattr__(self, "poly_degree", math.floor(self.alpha) + 1)
        elif self.poly_degree < 0:
            raise DomainError("poly_degree must be non-negative")


def rl_kernel_matrix(alpha: float, m: int) -> np.ndarray:
    """K[i, j] = (t_i - s_{j+1/2})^{alpha-1/2} for j < i, zero otherwise.

    Midpoint evaluation keeps the kernel finite when alpha < 1/2.
    """
    t = grid(m)
    mid = 0.5 * (t[:-1] + t[1:])
    diff = t[:, None] - mid[None, :]
    out = np.zeros_like(diff)
    mask = diff > 0
    out[mask] = diff[mask] ** (alpha - 0.5)
    return out


def rl_sample_batch(alpha: float, m: int, size: int, seed: int, stream: int = 0) -> np.ndarray:
    if alpha <= 0:
        raise DomainError("alpha must be positive")
    g = generator(seed, stream)
    dB = g.standard_normal((size, m - 1)) * math.sqrt(1.0 / (m - 1))
    return dB @ rl_kernel_matrix(alpha, m).T


def rl_sample(alpha: float, m: int, seed: int, stream: int = 0) -> GridFunction:
    """One Riemann-Liouville path int_0^t (t-s)^{alpha-1/2} dB(s) on the grid."""
    return GridFunction(rl_sample_batch(alpha, m, 1, seed, stream)[0])


def rl_type_sample_batch(p: RLTypeParams, size: int, seed: int, stream: int = 0,
                         return_poly: bool = False):
    g = generator(seed, stream)
    dB = g.standard_normal((size, p.m - 1)) * math.sqrt(1.0 / (p.m - 1))
    z = g.standard_normal((size, p.poly_degree + 1))
    t = grid(p.m)
    powers = t[None, :] ** np.arange(p.poly_degree + 1)[:, None]
    paths = dB @ rl_kernel_matrix(p.alpha, p.m).T + z @ powers
    return (paths, z) if return_poly else paths


def rl_type_sample(p: RLTypeParams, seed: int, stream: int = 0) -> GridFunction:
    return GridFunction(rl_type_sample_batch(p, 1, seed, stream)[0])


def rl_covariance(alpha: float, s: float, t: float) -> float:
    """int_0^{min(s,t)} (s-u)^{alpha-1/2} (t-u)^{alpha-1/2} du.

    The algebraic singularity at u = min(s, t) goes into the quadrature
    weight (QAWS), so alpha < 1/2 needs no special casing.
    """
    lo, hi = (s, t) if s <= t else (t, s)
    if lo <= 0.0:
        return 0.0
    a = alpha - 0.5
    if hi == lo:
        fn, wvar = (lambda u: 1.0), (0.0, 2 * a)
    else:
        fn, wvar = (lambda u: (hi - u) ** a), (0.0, a)
    res = integrate.quad(fn, 0.0, lo, weight="alg", wvar=wvar,
                         epsabs=1e-13, epsrel=1e-11, limit=200, full_output=1)
    if len(res) > 3:  # a warning message is only appended on failure
        raise NumericError("RL covariance quadrature did not converge",
                           s=s, t=t, alpha=alpha, abserr=float(res[1]), message=str(res[3]))
    return float(res[0])


def covariance_rl_type(p: RLTypeParams, rank_tol: float = RANK_TOL) -> "FiniteGaussian":
    """Grid covariance of the RL-type process, eigendecomposed."""
    if p.m > MAX_COVARIANCE_GRID:
        raise DomainError(f"grid size {p.m} exceeds the covariance guard {MAX_COVARIANCE_GRID}")
    t = grid(p.m)
    C = np.empty((p.m, p.m))
    for i in range(p.m):
        for j in range(i + 1):
            C[i, j] = C[j, i] = rl_covariance(p.alpha, t[j], t[i])
    powers = t[:, None] ** np.arange(p.poly_degree + 1)[None, :]
    C += powers @ powers.T
    return FiniteGaussian(C, rank_tol=rank_tol)


# -- finite-dimensional Gaussian laws -------------------------------------------

@dataclass(frozen=True)
class FiniteGaussian:
    """Centered Gaussian law N(0, covariance) with a retained eigendecomposition.

    Eigenvalues are sorted in decreasing order; those at or below
    ``rank_tol * lambda_1`` are dropped from the retained rank.
    """

    covariance: np.ndarray
    rank_tol: float = RANK_TOL
    eigenvalues: np.ndarray = field(init=False, repr=False)
    eigenvectors: np.ndarray = field(init=False, repr=False)
    rank: int = field(init=False)

    def __post_init__(self):
        C = np.array(self.covariance, dtype=float)
        if C.ndim != 2 or C.shape[0] != C.shape[1] or C.shape[0] < 1:
            raise DomainError("covariance must be a square matrix")
        if not np.allclose(C, C.T, rtol=1e-12, atol=1e-14 * np.max(np.abs(C))):
            raise DomainError("covariance must be symmetric")
        C = 0.5 * (C + C.T)
        lam, U = np.linalg.eigh(C)
        lam, U = lam[::-1], U[:, ::-1]
        top = max(lam[0], 0.0)
        if lam[-1] < -1e-10 * top:
            raise DomainError(f"covariance is not positive semidefinite (min eigenvalue {lam[-1]:.3g})")
        lam = np.clip(lam, 0.0, None)
        rank = int(np.sum(lam > self.rank_tol * top)) if top > 0 else 0
        recon = (U * lam) @ U.T
        scale = max(np.linalg.norm(C), np.finfo(float).tiny)
        if np.linalg.norm(recon - C) > 1e-8 * scale:
            raise NumericError("eigendecomposition does not reproduce the covariance")
        for name, val in (("covariance", C), ("eigenvalues", lam), ("eigenvectors", U)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)
        object.__setattr__(self, "rank", rank)

    @property
    def dim(self) -> int:
        return self.covariance.shape[0]

    @property
    def factor(self) -> np.ndarray:
        """B = U_r diag(sqrt(lambda_r)); x = B @ xi with xi standard normal."""
        r = self.rank
        return self.eigenvectors[:, :r] * np.sqrt(self.eigenvalues[:r])

    def sample(self, size: int, seed: int, stream: int = 0) -> np.ndarray:
        xi = generator(seed, stream).standard_normal((size, self.rank))
        return xi @ self.factor.T

    def precision_apply(self, h: np.ndarray, floor: float | None = None) -> np.ndarray:
        """Sigma^{-1} h with eigenvalues floored at ``floor * lambda_1`` (default rank_tol)."""
        floor = self.rank_tol if floor is None else floor
        lam = np.maximum(self.eigenvalues, floor * self.eigenvalues[0])
        U = self.eigenvectors
        return U @ ((U.T @ h) / lam)


def rkhs_norm_finite(G: FiniteGaussian, h, proj_tol: float = PROJ_TOL) -> float:
    """(sum_{i<=r} (u_i^T h)^2 / lambda_i)^{1/2} for h in the retained span."""
    h = np.asarray(h.values if isinstance(h, GridFunction) else h, dtype=float)
    if h.shape != (G.dim,):
        raise DomainError("h has the wrong dimension")
    r = G.rank
    coef = G.eigenvectors[:, :r].T @ h
    hn = np.linalg.norm(h)
    resid = np.linalg.norm(h - G.eigenvectors[:, :r] @ coef)
    if hn > 0 and resid > proj_tol * hn:
        raise OutsideRKHSError(
            f"outside RKHS (numerically): residual {resid:.3g} exceeds {proj_tol:g} * |h|")
    return float(np.sqrt(np.sum(coef ** 2 / G.eigenvalues[:r])))
