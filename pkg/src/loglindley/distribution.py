"""The re-parametrized log-Lindley law LL(sigma, pi) on the unit interval.

    f(x) = sigma * [pi + sigma (pi - 1) log x] * x**(sigma - 1),   0 < x < 1
    F(x) = [1 + sigma (pi - 1) log x] * x**sigma

sigma > 0 is a shape parameter and 0 <= pi <= 1 mixes a power law (pi = 1)
with a log-weighted power law (pi = 0).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .special import lambert_w_m1

__all__ = [
    "Params",
    "as_sample",
    "pdf",
    "log_pdf",
    "cdf",
    "quantile",
    "sample",
    "moment",
]

_INV_E = math.exp(-1.0)


@dataclass(frozen=True)
class Params:
    """Parameter pair (sigma, pi) of LL(sigma, pi)."""

    sigma: float
    pi: float

    def __post_init__(self):
        s, p = float(self.sigma), float(self.pi)
        if not (math.isfinite(s) and s > 0):
            raise ValueError(f"sigma must be finite and > 0, got {self.sigma!r}")
        if not (math.isfinite(p) and 0.0 <= p <= 1.0):
            raise ValueError(f"pi must lie in [0, 1], got {self.pi!r}")
        object.__setattr__(self, "sigma", s)
        object.__setattr__(self, "pi", p)

    def as_tuple(self) -> tuple[float, float]:
        return (self.sigma, self.pi)


def as_sample(values, min_size: int = 1) -> np.ndarray:
    """Validate observations and return them as a read-only float array.

    Every value must lie strictly inside (0, 1).
    """
    x = np.array(values, dtype=float).ravel()
    if x.size < min_size:
        raise ValueError(f"sample needs at least {min_size} value(s), got {x.size}")
    bad = ~((x > 0.0) & (x < 1.0))
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise ValueError(f"sample value at index {i} is outside (0, 1): {x[i]!r}")
    x.setflags(write=False)
    return x


def _open_unit(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if np.any(~((x > 0.0) & (x < 1.0))):
        raise ValueError("x must lie in the open interval (0, 1)")
    return x


def log_pdf(p: Params, x):
    """Log density; works with (sigma - 1) log x instead of forming x**(sigma-1)."""
    x = _open_unit(x)
    lx = np.log(x)
    bracket = p.pi + p.sigma * (p.pi - 1.0) * lx
    with np.errstate(divide="ignore"):
        out = math.log(p.sigma) + np.log(bracket) + (p.sigma - 1.0) * lx
    return out[()] if out.ndim == 0 else out


def pdf(p: Params, x):
    x = _open_unit(x)
    lx = np.log(x)
    bracket = p.pi + p.sigma * (p.pi - 1.0) * lx
    out = p.sigma * bracket * np.exp((p.sigma - 1.0) * lx)
    return out[()] if out.ndim == 0 else out


def cdf(p: Params, x):
    x = np.asarray(x, dtype=float)
    if np.any(~((x > 0.0) & (x <= 1.0))):
        raise ValueError("x must lie in (0, 1]")
    lx = np.log(x)
    out = (1.0 + p.sigma * (p.pi - 1.0) * lx) * np.exp(p.sigma * lx)
    return out[()] if out.ndim == 0 else out


def _quantile_root(p: Params, u: float) -> float:
    # solve in t = -log x so the bracket never touches x = 0
    def h(t):
        return (1.0 + p.sigma * (1.0 - p.pi) * t) * math.exp(-p.sigma * t) - u

    hi = 1.0
    while h(hi) > 0.0:
        hi *= 2.0
    t = brentq(h, 0.0, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
    return math.exp(-t)


def _quantile_scalar(p: Params, u: float) -> float:
    if not 0.0 < u < 1.0:
        raise ValueError(f"u must lie in (0, 1), got {u!r}")
    if p.pi == 1.0:
        return u ** (1.0 / p.sigma)
    q = p.pi - 1.0
    arg = (u / q) * math.exp(1.0 / q)
    if arg < -_INV_E:
        if arg >= -_INV_E - 1e-12:
            arg = -_INV_E
        else:
            return _quantile_root(p, u)
    if not arg < 0.0:
        # exp(1/(pi-1)) underflowed for pi close to 1
        return _quantile_root(p, u)
    s = q * lambert_w_m1(arg)
    x = math.exp((s - 1.0) / (p.sigma * q))
    if not 0.0 < x < 1.0:
        return _quantile_root(p, u)
    return x


def quantile(p: Params, u):
    """Inverse cdf.

    For pi < 1 the closed form goes through the lower Lambert branch:
    x = exp((s - 1) / (sigma (pi - 1))) with s = (pi - 1) W_{-1}(u e^{1/(pi-1)} / (pi - 1)).
    pi == 1 is the power law x = u**(1/sigma).
    """
    u_arr = np.asarray(u, dtype=float)
    if u_arr.ndim == 0:
        return _quantile_scalar(p, float(u_arr))
    return np.array([_quantile_scalar(p, float(v)) for v in u_arr.ravel()]).reshape(u_arr.shape)


def sample(p: Params, m: int, rng: np.random.Generator) -> np.ndarray:
    """Draw m observations by inverse-transform sampling."""
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m!r}")
    u = rng.random(m)
    # Generator.random() can return exactly 0.0
    u = np.where(u == 0.0, np.nextafter(0.0, 1.0), u)
    return as_sample(quantile(p, u))


def moment(p: Params, k: int) -> float:
    """Raw moment E[X**k] = sigma (sigma + k pi) / (sigma + k)**2."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k!r}")
    return p.sigma * (p.sigma + k * p.pi) / (p.sigma + k) ** 2
