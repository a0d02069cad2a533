"""Trigonometric coefficient sequences, grid functions and rate formulas.

Functions on [0, 1] live either as coefficients on the trigonometric basis
(``FourierFunction``) or as values on the uniform grid t_i = i/(m-1)
(``GridFunction``).  All sequences are finite; ``K_max`` is the truncation.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .errors import DomainError


def _frozen(values) -> np.ndarray:
    arr = np.array(values, dtype=float, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class FourierFunction:
    """f = sum_k coeffs[k-1] * e_k, k = 1..K_max."""

    coeffs: np.ndarray

    def __post_init__(self):
        c = _frozen(np.atleast_1d(self.coeffs))
        if c.ndim != 1 or c.size < 1:
            raise DomainError("coefficient sequence must be one-dimensional and non-empty")
        if not np.all(np.isfinite(c)):
            raise DomainError("coefficients must be finite")
        object.__setattr__(self, "coeffs", c)

    @property
    def K_max(self) -> int:
        return self.coeffs.size

    @classmethod
    def zeros(cls, K: int) -> "FourierFunction":
        return cls(np.zeros(K))

    def padded(self, K: int) -> np.ndarray:
        """Coefficients 1..K, zero-padded or cut (see ``tail_sq``)."""
        out = np.zeros(K)
        k = min(K, self.K_max)
        out[:k] = self.coeffs[:k]
        return out

    def tail_sq(self, K: int) -> float:
        """sum_{k>K} f_k^2 over the stored coefficients."""
        return float(np.sum(self.coeffs[K:] ** 2))

    def __add__(self, other: "FourierFunction") -> "FourierFunction":
        K = max(self.K_max, other.K_max)
        return FourierFunction(self.padded(K) + other.padded(K))

    def __sub__(self, other: "FourierFunction") -> "FourierFunction":
        K = max(self.K_max, other.K_max)
        return FourierFunction(self.padded(K) - other.padded(K))

    def scaled(self, a: float) -> "FourierFunction":
        return FourierFunction(a * self.coeffs)


@dataclass(frozen=True)
class GridFunction:
    """Values on the uniform grid t_i = i/(m-1), endpoints included."""

    values: np.ndarray
    t: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        v = _frozen(np.atleast_1d(self.values))
        if v.ndim != 1 or v.size < 2:
            raise DomainError("a grid function needs at least two points")
        if not np.all(np.isfinite(v)):
            raise DomainError("grid values must be finite")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "t", _frozen(grid(v.size)))

    @property
    def m(self) -> int:
        return self.values.size

    @classmethod
    def from_callable(cls, fn, m: int) -> "GridFunction":
        return cls(np.asarray(fn(grid(m)), dtype=float))

    def __call__(self, s):
        """Piecewise-linear interpolant."""
        return np.interp(s, self.t, self.values)

    def __add__(self, other):
        if isinstance(other, GridFunction):
            return GridFunction(self.values + other.values)
        return GridFunction(self.values + float(other))

    def __sub__(self, other):
        if isinstance(other, GridFunction):
            return GridFunction(self.values - other.values)
        return GridFunction(self.values - float(other))


@dataclass(frozen=True)
class RateParams:
    alpha: float
    beta: float
    n: int

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise DomainError("alpha and beta must be positive")
        if int(self.n) != self.n or self.n < 1:
            raise DomainError("n must be a positive integer")


def grid(m: int) -> np.ndarray:
    if m < 2:
        raise DomainError("grid size must be at least 2")
    return np.linspace(0.0, 1.0, m)


def trapezoid_weights(m: int) -> np.ndarray:
    w = np.full(m, 1.0 / (m - 1))
    w[0] = w[-1] = 0.5 / (m - 1)
    return w


def basis_eval(k, t):
    """Trigonometric basis: e_1 = 1, e_{2j} = cos(2 pi j t), e_{2j+1} = sin(2 pi j t)."""
    k_arr = np.asarray(k)
    t_arr = np.asarray(t, dtype=float)
    if np.any(k_arr < 1) or np.any(k_arr != np.floor(k_arr)):
        raise DomainError("basis index must be a positive integer")
    if np.any(t_arr < 0) or np.any(t_arr > 1):
        raise DomainError("t must lie in [0, 1]")
    j = k_arr // 2
    arg = 2 * np.pi * j * t_arr
    out = np.where(k_arr == 1, 1.0, np.where(k_arr % 2 == 0, np.cos(arg), np.sin(arg)))
    return float(out) if out.ndim == 0 else out


def basis_matrix(K: int, t) -> np.ndarray:
    """Matrix B[i, k-1] = e_k(t_i)."""
    t = np.asarray(t, dtype=float)
    return basis_eval(np.arange(1, K + 1)[None, :], t[:, None])


def synthesize(f: FourierFunction, m: int) -> GridFunction:
    t = grid(m)
    return GridFunction(basis_matrix(f.K_max, t) @ f.coeffs)


def sobolev_norm(f: FourierFunction, beta: float) -> float:
    """(sum_k k^{2 beta} f_k^2)^{1/2}; f is in the Sobolev ball of radius L iff this is <= L."""
    if beta <= 0:
        raise DomainError("beta must be positive")
    k = np.arange(1, f.K_max + 1, dtype=float)
    return float(np.sqrt(np.sum(k ** (2 * beta) * f.coeffs ** 2)))


def l2_norm(f: FourierFunction) -> float:
    return float(np.linalg.norm(f.coeffs))


def sup_norm(g: GridFunction) -> float:
    return float(np.max(np.abs(g.values)))


def grid_l2_norm(g: GridFunction) -> float:
    """L2 norm of a grid function under the trapezoid rule."""
    return float(np.sqrt(trapezoid_weights(g.m) @ g.values ** 2))


def rate_rn(p: RateParams) -> float:
    """n^{-(alpha ^ beta)/(2 alpha + 1)}."""
    return float(p.n ** (-min(p.alpha, p.beta) / (2 * p.alpha + 1)))


def _worst_case_sq(beta, k):
    # squared coefficient; log log k > 0 needs k >= 3
    return 1.0 / (k ** (1 + 2 * beta) * (1 + np.log(k)) * np.log(np.log(k)) ** 2)


def worst_case_f0(beta: float, K_max: int, L: float | None = None) -> FourierFunction:
    """Fourier coefficients [k^{1/2+beta} (1+log k)^{1/2} log log k]^{-1} for k >= 3.

    Coefficients 1 and 2 are set to zero (log log k is not positive there).
    With ``L`` given, the sequence is scaled down, if needed, so that its
    beta-Sobolev norm *including* the analytic tail beyond ``K_max`` is <= L.
    """
    if beta <= 0:
        raise DomainError("beta must be positive")
    if K_max < 3:
        raise DomainError("K_max must be at least 3")
    k = np.arange(1, K_max + 1, dtype=float)
    c = np.zeros(K_max)
    c[2:] = np.sqrt(_worst_case_sq(beta, k[2:]))
    if L is not None:
        if L <= 0:
            raise DomainError("L must be positive")
        full = np.sqrt(np.sum(k ** (2 * beta) * c ** 2) + worst_case_sobolev_tail(beta, K_max))
        if full > L:
            c *= L / full
    return FourierFunction(c)


def worst_case_tail(beta: float, K: int, scale: float = 1.0) -> float:
    """Integral estimate of sum_{k>K} f_{0,k}^2 for ``worst_case_f0`` (times scale^2).

    The summand is decreasing, so the integral from K to infinity bounds the
    sum from above.
    """
    if K < 3:
        raise DomainError("K must be at least 3")
    # k = e^x
    val, _ = integrate.quad(lambda x: np.exp(-2 * beta * x) / ((1 + x) * np.log(x) ** 2),
                            np.log(K), np.inf, limit=200)
    return float(scale ** 2 * val)


def worst_case_sobolev_tail(beta: float, K: int) -> float:
    """Integral bound on sum_{k>K} k^{2 beta} f_{0,k}^2 (a Bertrand series tail).

    Independent of beta: the summand is 1/(k (1 + log k) (log log k)^2).
    """
    # k = exp(exp(y))
    y0 = np.log(np.log(max(K, 3)))
    val, _ = integrate.quad(lambda y: 1.0 / ((1 + np.exp(-y)) * y ** 2), y0, np.inf, limit=200)
    return float(val)
