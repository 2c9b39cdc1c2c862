"""Maximum likelihood for LL(sigma, pi): likelihood, derivatives, Fisher
information and Wald intervals.

Information entries for a sample of size m (v = -log x, B = pi + sigma (1-pi) v):

    I11 = m [1/sigma^2 + sigma (1-pi)^2 g2]
    I12 = m sigma g1
    I22 = m sigma [g0 - 2 sigma g1 + sigma^2 g2]

with g_k = int_0^inf v^k exp(-sigma v) / B dv. See docs/math.md for the
derivation and the Monte Carlo check that pins these constants.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq, minimize
from scipy.stats import norm

from .distribution import Params, as_sample
from .special import exp_integral_scaled

__all__ = [
    "InfoMatrix",
    "FitResultML",
    "log_likelihood",
    "score",
    "observed_info",
    "g_integral",
    "fisher_info",
    "fit",
    "covariance_at",
]

BOUNDARY_TOL = 1e-8
BOUNDARY_CLIP = 1e-4


@dataclass(frozen=True)
class InfoMatrix:
    """Symmetric 2x2 information matrix, parameter order (sigma, pi)."""

    i11: float
    i12: float
    i22: float

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.i11, self.i12], [self.i12, self.i22]])

    @property
    def det(self) -> float:
        return self.i11 * self.i22 - self.i12 ** 2

    def inverse(self) -> np.ndarray:
        g = self.det
        if not g > 0:
            raise np.linalg.LinAlgError(f"information matrix is not positive definite (det={g})")
        return np.array([[self.i22, -self.i12], [-self.i12, self.i11]]) / g


@dataclass
class FitResultML:
    estimate: Params
    covariance: np.ndarray
    ci_sigma: tuple[float, float]
    ci_pi: tuple[float, float]
    ci_pi_raw: tuple[float, float]
    loglik: float
    converged: bool
    iterations: int
    boundary: bool = False
    level: float = 0.95
    m: int = 0
    message: str = field(default="", repr=False)

    @property
    def var_sigma(self) -> float:
        return float(self.covariance[0, 0])

    @property
    def var_pi(self) -> float:
        return float(self.covariance[1, 1])

    def to_dict(self) -> dict:
        return {
            "method": "ml",
            "m": self.m,
            "sigma": self.estimate.sigma,
            "pi": self.estimate.pi,
            "covariance": self.covariance.tolist(),
            "level": self.level,
            "ci_sigma": list(self.ci_sigma),
            "ci_pi": list(self.ci_pi),
            "ci_pi_raw": list(self.ci_pi_raw),
            "loglik": self.loglik,
            "converged": self.converged,
            "iterations": self.iterations,
            "boundary": self.boundary,
        }


def _logs(s) -> np.ndarray:
    return np.log(as_sample(s))


def log_likelihood(p: Params, s) -> float:
    """m log sigma + (sigma-1) sum log x + sum log[pi + sigma (pi-1) log x]."""
    lx = _logs(s)
    return _loglik_from_logs(p.sigma, p.pi, lx)


def _loglik_from_logs(sigma: float, pi: float, lx: np.ndarray) -> float:
    bracket = pi + sigma * (pi - 1.0) * lx
    if np.any(bracket <= 0.0):
        return -math.inf
    return lx.size * math.log(sigma) + (sigma - 1.0) * lx.sum() + np.log(bracket).sum()


def score(p: Params, s) -> np.ndarray:
    lx = _logs(s)
    sigma, pi = p.sigma, p.pi
    bracket = pi + sigma * (pi - 1.0) * lx
    d_sigma = lx.size / sigma + lx.sum() + np.sum((pi - 1.0) * lx / bracket)
    d_pi = np.sum((1.0 + sigma * lx) / bracket)
    return np.array([d_sigma, d_pi])


def observed_info(p: Params, s) -> InfoMatrix:
    """Negative Hessian of the log-likelihood."""
    lx = _logs(s)
    sigma, pi = p.sigma, p.pi
    bracket = pi + sigma * (pi - 1.0) * lx
    h12 = np.sum(lx / bracket ** 2)
    h11 = -(lx.size / sigma ** 2 + np.sum(((pi - 1.0) * lx / bracket) ** 2))
    h22 = -np.sum(((1.0 + sigma * lx) / bracket) ** 2)
    return InfoMatrix(-h11, -h12, -h22)


def _check_interior(p: Params) -> None:
    if not 0.0 < p.pi < 1.0:
        raise ValueError(f"requires 0 < pi < 1, got pi={p.pi!r}")


def g_integral(p: Params, k: int) -> float:
    """int_0^inf v^k exp(-sigma v) / (pi + sigma (1-pi) v) dv for k in {0, 1, 2}.

    Closed form exp(c) E_{k+1}(c) k! / ((1-pi) sigma^(k+1)), c = pi/(1-pi).
    """
    _check_interior(p)
    if k not in (0, 1, 2):
        raise ValueError(f"k must be 0, 1 or 2, got {k!r}")
    c = p.pi / (1.0 - p.pi)
    return exp_integral_scaled(k + 1, c) * math.factorial(k) / ((1.0 - p.pi) * p.sigma ** (k + 1))


def fisher_info(p: Params, m: int) -> InfoMatrix:
    """Expected information for an iid sample of size m."""
    _check_interior(p)
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m!r}")
    sigma, pi = p.sigma, p.pi
    g0, g1, g2 = (g_integral(p, k) for k in range(3))
    i11 = 1.0 / sigma ** 2 + sigma * (1.0 - pi) ** 2 * g2
    i12 = sigma * g1
    i22 = sigma * (g0 - 2.0 * sigma * g1 + sigma ** 2 * g2)
    return InfoMatrix(m * i11, m * i12, m * i22)


def covariance_at(p: Params, m: int) -> np.ndarray:
    """Asymptotic covariance of (sigma_hat, pi_hat); pi is clipped off the boundary."""
    pi = min(max(p.pi, BOUNDARY_CLIP), 1.0 - BOUNDARY_CLIP)
    return fisher_info(Params(p.sigma, pi), m).inverse()


def _start_sigma(mean_x: float, pi0: float = 0.5) -> float:
    # invert E[X] = sigma (sigma + pi0) / (sigma + 1)^2, which increases from 0 to 1
    def h(s):
        return s * (s + pi0) / (s + 1.0) ** 2 - mean_x

    lo, hi = 1e-8, 1e8
    if h(lo) >= 0 or h(hi) <= 0:
        return 1.0
    return brentq(h, lo, hi)


def _expit(t: float) -> float:
    if t >= 0:
        return 1.0 / (1.0 + math.exp(-t))
    e = math.exp(t)
    return e / (1.0 + e)


def fit(s, level: float = 0.95, max_iter: int = 2000) -> FitResultML:
    """Maximise the log-likelihood over sigma > 0, 0 <= pi <= 1.

    Nelder-Mead runs on (log sigma, logit pi). Both edges pi = 0 and pi = 1
    have closed-form profile maxima (sigma = -2m/sum log x and -m/sum log x),
    so they are compared explicitly against the interior optimum.
    """
    x = as_sample(s, min_size=2)
    if np.all(x == x[0]):
        raise ValueError("degenerate sample: all values are equal")
    if not 0.0 < level < 1.0:
        raise ValueError(f"level must lie in (0, 1), got {level!r}")
    # sort so every sum runs in a fixed order; fit is permutation invariant
    x = np.sort(x)
    lx = np.log(x)
    m = lx.size
    total = lx.sum()

    def negll(theta):
        sigma = math.exp(theta[0])
        pi = _expit(theta[1])
        val = _loglik_from_logs(sigma, pi, lx)
        return -val if math.isfinite(val) else 1e300

    sigma0 = _start_sigma(float(np.mean(x)))
    theta0 = np.array([math.log(sigma0), 0.0])
    f0 = negll(theta0)
    res = minimize(
        negll,
        theta0,
        method="Nelder-Mead",
        options={
            "xatol": 1e-8,
            "fatol": 1e-10 * max(1.0, abs(f0)),
            "maxiter": max_iter,
            "maxfev": 2 * max_iter,
            "initial_simplex": theta0 + np.array([[0.0, 0.0], [0.25, 0.0], [0.0, 1.0]]),
        },
    )
    sig_int = math.exp(res.x[0])
    pi_int = _expit(res.x[1])
    ll_int = -res.fun

    candidates = [
        (ll_int, sig_int, pi_int, bool(res.success)),
        (_loglik_from_logs(-2.0 * m / total, 0.0, lx), -2.0 * m / total, 0.0, True),
        (_loglik_from_logs(-m / total, 1.0, lx), -m / total, 1.0, True),
    ]
    ll, sigma_hat, pi_hat, converged = max(candidates, key=lambda c: c[0])
    boundary = pi_hat < BOUNDARY_TOL or pi_hat > 1.0 - BOUNDARY_TOL
    if boundary:
        pi_hat = 0.0 if pi_hat < 0.5 else 1.0
        ll = _loglik_from_logs(sigma_hat, pi_hat, lx)
    est = Params(sigma_hat, pi_hat)

    cov = covariance_at(est, m)
    z = norm.ppf(0.5 + level / 2.0)
    se_s = math.sqrt(cov[0, 0])
    se_p = math.sqrt(cov[1, 1])
    ci_sigma = (sigma_hat - z * se_s, sigma_hat + z * se_s)
    ci_pi_raw = (pi_hat - z * se_p, pi_hat + z * se_p)
    ci_pi = (max(ci_pi_raw[0], 0.0), min(ci_pi_raw[1], 1.0))
    return FitResultML(
        estimate=est,
        covariance=cov,
        ci_sigma=ci_sigma,
        ci_pi=ci_pi,
        ci_pi_raw=ci_pi_raw,
        loglik=float(ll),
        converged=converged,
        iterations=int(res.nit),
        boundary=boundary,
        level=level,
        m=m,
        message=str(res.message),
    )
