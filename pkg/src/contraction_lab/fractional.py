"""Fractional integrals, mollifiers and the bound evaluators used for
Riemann-Liouville-type priors.

``frac_integral`` is the *unnormalized* Riemann-Liouville integral

    I^alpha f(t) = int_0^t (t - s)^{alpha - 1} f(s) ds,

with no 1/Gamma(alpha) factor, so I^a I^b = B(a, b) I^{a+b}.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import polynomial as P
from scipy import integrate, special

from .errors import DomainError, PreconditionError
from .sequences import GridFunction, grid, trapezoid_weights

MOMENT_TOL = 1e-8


# -- fractional integral ----------------------------------------------------------

def _frac_weights(t_eval: np.ndarray, nodes: np.ndarray, alpha: float) -> np.ndarray:
    """Matrix W with (W @ f)[i] = int_0^{t_i} (t_i - s)^{alpha-1} f_lin(s) ds.

    f_lin is the piecewise-linear interpolant of nodal values f.  The kernel
    is integrated exactly against each hat function, which removes the
    singularity at s = t from the numerics.
    """
    t = np.asarray(t_eval, dtype=float)[:, None]
    s0, s1 = nodes[:-1][None, :], nodes[1:][None, :]
    h = s1 - s0
    a0 = np.clip(t - s0, 0.0, None)   # upper limit of u = t - s on the cell
    a1 = np.clip(t - s1, 0.0, None)   # lower limit
    # int_{a1}^{a0} u^{alpha-1} du and int_{a1}^{a0} u^alpha du
    m0 = (a0 ** alpha - a1 ** alpha) / alpha
    m1 = (a0 ** (alpha + 1) - a1 ** (alpha + 1)) / (alpha + 1)
    # s = t - u; hat weights (s1 - s)/h and (s - s0)/h, clipped cells handled
    # by a0 = a1 = 0 contributing nothing
    left = ((s1 - t) * m0 + m1) / h
    right = ((t - s0) * m0 - m1) / h
    W = np.zeros((t.shape[0], nodes.size))
    W[:, :-1] += left
    W[:, 1:] += right
    return W


def frac_integral(f: GridFunction, alpha: float, t):
    """I^alpha f(t) for the piecewise-linear interpolant of ``f``; zero for t < 0."""
    if alpha <= 0:
        raise DomainError("alpha must be positive")
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(t_arr > 1.0):
        raise DomainError("t must not exceed 1")
    out = np.zeros_like(t_arr)
    pos = t_arr > 0
    if np.any(pos):
        out[pos] = _frac_weights(t_arr[pos], f.t, alpha) @ f.values
    return float(out[0]) if np.ndim(t) == 0 else out


def frac_integral_grid(f: GridFunction, alpha: float) -> GridFunction:
    """I^alpha f evaluated at every grid point of ``f``."""
    return GridFunction(frac_integral(f, alpha, f.t))


# -- mollifiers -------------------------------------------------------------------

@dataclass(frozen=True)
class Mollifier:
    """Compactly supported kernel phi(u) = p(u) (1 - u^2)^smooth on [-1, 1].

    The polynomial p (degree ``order``) is fitted so that int phi = 1 and
    int u^j phi = 0 for 1 <= j <= order.  ``radius`` stretches the support to
    [-radius, radius] while keeping unit mass.
    """

    order: int = 2
    radius: float = 1.0
    smooth: int = 3
    coeffs: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not 0 <= self.order <= 6:
            raise DomainError("order must be between 0 and 6")
        if self.radius <= 0:
            raise DomainError("radius must be positive")
        q, r = self.order, self.smooth
        # moments of (1-u^2)^r on [-1, 1]: M_j = B((j+1)/2, r+1) for even j
        def base_moment(j):
            return 0.0 if j % 2 else special.beta((j + 1) / 2, r + 1)
        A = np.array([[base_moment(i + j) for j in range(q + 1)] for i in range(q + 1)])
        rhs = np.zeros(q + 1)
        rhs[0] = 1.0
        p = np.linalg.solve(A, rhs)
        poly = P.polymul(p, P.polypow([1.0, 0.0, -1.0], r))
        poly.setflags(write=False)
        object.__setattr__(self, "coeffs", poly)

    def __call__(self, u):
        x = np.asarray(u, dtype=float) / self.radius
        val = P.polyval(x, self.coeffs) / self.radius
        return np.where(np.abs(x) <= 1.0, val, 0.0)

    @property
    def support(self) -> tuple[float, float]:
        return (-self.radius, self.radius)

    def scaled(self, sigma: float):
        """phi_sigma(u) = sigma^{-1} phi(u / sigma) as a callable."""
        return lambda u: self(np.asarray(u) / sigma) / sigma

    def moments(self, upto: int | None = None) -> np.ndarray:
        """int u^j phi(u) du, j = 0..upto, by adaptive quadrature."""
        upto = self.order if upto is None else upto
        return np.array([
            integrate.quad(lambda u, j=j: u ** j * self(u), -self.radius, self.radius,
                           epsabs=1e-13, epsrel=1e-12)[0]
            for j in range(upto + 1)])

    def check(self) -> None:
        mom = self.moments()
        if abs(mom[0] - 1.0) > MOMENT_TOL or np.any(np.abs(mom[1:]) > MOMENT_TOL):
            raise PreconditionError(f"mollifier moments off: {mom}")


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(8)


def _composite_gauss(a: float, b: float, panels: int, breaks=()):
    """Nodes and weights of composite 8-point Gauss-Legendre on [a, b]."""
    edges = np.unique(np.concatenate([np.linspace(a, b, panels + 1),
                                      [x for x in breaks if a < x < b]]))
    lo, hi = edges[:-1, None], edges[1:, None]
    half = 0.5 * (hi - lo)
    nodes = (lo + hi) / 2 + half * _GL_NODES[None, :]
    weights = half * _GL_WEIGHTS[None, :]
    return nodes.ravel(), weights.ravel()


def reflect(f: GridFunction, x) -> np.ndarray:
    """Evaluate f at x after even reflection about 0 and 1 (period-2 extension)."""
    y = np.mod(np.asarray(x, dtype=float), 2.0)
    y = np.where(y > 1.0, 2.0 - y, y)
    return f(y)


def convolve(f: GridFunction, g, support: tuple[float, float], panels: int | None = None,
             breaks=(), t=None) -> GridFunction | np.ndarray:
    """(f * g)(t) = int f(t - u) g(u) du over ``support``, f reflected at 0 and 1.

    Returns a GridFunction on f's grid unless evaluation points ``t`` are given.
    """
    a, b = support
    if panels is None:
        # resolve both the kernel and the grid of f
        panels = max(64, int(math.ceil(4 * (b - a) * (f.m - 1))))
    u, w = _composite_gauss(a, b, panels, breaks)
    gw = np.asarray(g(u), dtype=float) * w
    tt = f.t if t is None else np.atleast_1d(np.asarray(t, dtype=float))
    out = np.empty(tt.size)
    # chunk the (t, u) product to bound memory
    step = max(1, 4_000_000 // u.size)
    for i in range(0, tt.size, step):
        out[i:i + step] = reflect(f, tt[i:i + step, None] - u[None, :]) @ gw
    return GridFunction(out) if t is None else out


def mollify(f: GridFunction, phi: Mollifier, sigma: float) -> GridFunction:
    """f * phi_sigma on f's grid, with f reflected at the boundary."""
    if sigma <= 0:
        raise DomainError("sigma must be positive")
    R = phi.radius * sigma
    return convolve(f, phi.scaled(sigma), (-R, R))


# -- convolution bounds --------------------------------------------------------------

def _moment(g, support, j, breaks=()):
    pts = [x for x in (0.0, *breaks) if support[0] < x < support[1]]
    return integrate.quad(lambda u: u ** j * g(u), support[0], support[1],
                          points=pts or None, limit=200, epsabs=1e-12)[0]


def _check_zero_moments(g, support, upto, tol, breaks=()):
    for j in range(upto + 1):
        mom = _moment(g, support, j, breaks)
        if abs(mom) > tol:
            raise PreconditionError(f"int u^{j} g(u) du = {mom:.3g} is not zero")


def lemma6_rhs(g, s: float, support: tuple[float, float], tol: float = 1e-8,
               breaks=()) -> float:
    """int |u|^s |g(u)| du, after checking int g = 0 (and int u g = 0 if s > 1)."""
    if not (0 < s < 2) or s == 1:
        raise DomainError("s must lie in (0, 2) and differ from 1")
    _check_zero_moments(g, support, 1 if s > 1 else 0, tol, breaks)
    pts = [x for x in (0.0, *breaks) if support[0] < x < support[1]]
    return float(integrate.quad(lambda u: abs(u) ** s * abs(g(u)), support[0], support[1],
                                points=pts or None, limit=200, epsabs=1e-13)[0])


def lemma7_rhs(g, support: tuple[float, float], tol: float = 1e-8, breaks=()) -> float:
    """int u^2 {1 + log^2(1 + 1/|u|)} g(u)^2 du, after checking int g = 0."""
    _check_zero_moments(g, support, 0, tol, breaks)

    def integrand(u):
        if u == 0.0:
            return 0.0
        return u * u * (1.0 + math.log1p(1.0 / abs(u)) ** 2) * g(u) ** 2

    pts = [x for x in (0.0, *breaks) if support[0] < x < support[1]]
    return float(integrate.quad(integrand, support[0], support[1], points=pts or None,
                                limit=400, epsabs=1e-14)[0])


@dataclass(frozen=True)
class LemmaRatio:
    lhs: float
    rhs: float
    ratio: float
    degenerate: bool


def _ratio(lhs, rhs):
    if rhs == 0.0:
        return LemmaRatio(lhs, rhs, float("nan"), True)
    return LemmaRatio(lhs, rhs, lhs / rhs, False)


def check_lemma6(f: GridFunction, alpha: float, g, support, s: float, breaks=()) -> LemmaRatio:
    """sup-norm of I^alpha (f * g) against ``lemma6_rhs(g, s)``."""
    rhs = lemma6_rhs(g, s, support, breaks=breaks)
    conv = convolve(f, g, support, breaks=breaks)
    lhs = float(np.max(np.abs(frac_integral_grid(conv, alpha).values)))
    return _ratio(lhs, rhs)


def check_lemma7(f: GridFunction, delta: float, g, support, breaks=()) -> LemmaRatio:
    """||I^{1-delta}(f * g)||_2^2 against ``lemma7_rhs(g)``."""
    if not 0 < delta < 1:
        raise DomainError("delta must lie in (0, 1)")
    rhs = lemma7_rhs(g, support, breaks=breaks)
    conv = convolve(f, g, support, breaks=breaks)
    I = frac_integral_grid(conv, 1.0 - delta).values
    lhs = float(trapezoid_weights(f.m) @ I ** 2)
    return _ratio(lhs, rhs)


def dilate(g, sigma: float):
    """g_sigma(u) = sigma^{-1} g(u / sigma)."""
    return lambda u: g(np.asarray(u) / sigma) / sigma


# -- concentration-function upper bound for RL-type priors --------------------------

@dataclass(frozen=True)
class Theorem4Bound:
    exponent: float
    log_factor: bool
    value: float


def _is_natural(x: float, tol: float = 1e-9) -> bool:
    """x in {0, 1, 2, ...} up to ``tol``."""
    return x > -tol and abs(x - round(x)) < tol


def theorem4_bound(alpha: float, beta: float, epsilon: float) -> Theorem4Bound:
    """Order of the concentration function of the RL-type prior at a C^beta truth.

    alpha <= beta: eps^{-1/alpha}.  Otherwise eps^{-(2 alpha - 2 beta + 1)/beta},
    times log(1/eps) when frac(alpha) != 1/2 and alpha - beta - 1/2 is a
    non-negative integer.
    """
    if alpha <= 0 or beta <= 0:
        raise DomainError("alpha and beta must be positive")
    if not 0 < epsilon < 1:
        raise DomainError("epsilon must lie in (0, 1)")
    if alpha <= beta:
        exponent, log_factor = 1.0 / alpha, False
    else:
        exponent = (2 * alpha - 2 * beta + 1) / beta
        frac_alpha = alpha - math.floor(alpha)
        log_factor = abs(frac_alpha - 0.5) > 1e-12 and _is_natural(alpha - beta - 0.5)
    value = epsilon ** (-exponent) * (math.log(1.0 / epsilon) if log_factor else 1.0)
    return Theorem4Bound(exponent, log_factor, value)


__all__ = [
    "frac_integral", "frac_integral_grid", "Mollifier", "mollify", "convolve", "reflect",
    "lemma6_rhs", "lemma7_rhs", "check_lemma6", "check_lemma7", "dilate", "LemmaRatio",
    "theorem4_bound", "Theorem4Bound", "grid",
]
