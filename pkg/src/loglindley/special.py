"""Scalar special functions used by the log-Lindley routines.

Only what the distribution and its Fisher information need: the lower real
branch of Lambert W, the generalized exponential integral E_n for small n,
and log-gamma / log-beta.
"""
from __future__ import annotations

import math

from scipy import special as _sp

__all__ = [
    "lambert_w_m1",
    "exp_integral",
    "exp_integral_scaled",
    "log_gamma",
    "log_beta",
]

_INV_E = math.exp(-1.0)
_EULER_GAMMA = 0.57721566490153286061
_EPS = 1e-16
_MAX_ITER = 500


def lambert_w_m1(x: float) -> float:
    """Lower real branch W_{-1}(x) for -1/e <= x < 0.

    Returns the w <= -1 with w*exp(w) == x. Halley iteration, seeded by the
    branch-point series near -1/e and by the log-log asymptotic expansion
    elsewhere.
    """
    x = float(x)
    if not (-_INV_E <= x < 0.0):
        # tolerate a last-ulp overshoot of the branch point
        if x < -_INV_E and x > -_INV_E * (1.0 + 4 * _EPS):
            x = -_INV_E
        else:
            raise ValueError(f"lambert_w_m1 domain is [-1/e, 0), got {x!r}")
    if x == -_INV_E:
        return -1.0

    if x < -0.25:
        p = -math.sqrt(2.0 * (math.e * x + 1.0))
        w = -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p ** 3
    else:
        l1 = math.log(-x)
        l2 = math.log(-l1)
        w = l1 - l2 + l2 / l1

    for _ in range(100):
        ew = math.exp(w)
        f = w * ew - x
        wp1 = w + 1.0
        if wp1 == 0.0:
            break
        denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1)
        dw = f / denom
        w_new = w - dw
        if w_new > -1.0:
            # Halley overshot into the principal branch; bisect back
            w_new = 0.5 * (w - 1.0)
        if abs(w_new - w) <= 4 * _EPS * (1.0 + abs(w_new)):
            w = w_new
            break
        w = w_new
    return w


def _e1_series(z: float) -> float:
    # E1(z) = -gamma - ln z - sum_{k>=1} (-z)^k / (k k!)
    total = 0.0
    term = 1.0
    for k in range(1, _MAX_ITER):
        term *= -z / k
        inc = term / k
        total += inc
        if abs(inc) < _EPS * abs(total):
            break
    return -_EULER_GAMMA - math.log(z) - total


def _en_scaled_cf(n: int, z: float) -> float:
    # modified Lentz evaluation of exp(z) * E_n(z); converges fast for z >= 1
    tiny = 1e-300
    b = z + n
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_ITER):
        an = -i * (n - 1 + i)
        b += 2.0
        d = 1.0 / (an * d + b)
        c = b + an / c
        delta = c * d
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return h
    raise ArithmeticError(f"continued fraction for E_{n}({z}) did not converge")


def _check_en_args(m: int, z: float) -> None:
    if m not in (0, 1, 2, 3):
        raise ValueError(f"exp_integral order must be in 0..3, got {m!r}")
    if not z > 0.0:
        raise ValueError(f"exp_integral requires z > 0, got {z!r}")


def exp_integral_scaled(m: int, z: float) -> float:
    """Return exp(z) * E_m(z), safe for large z where E_m underflows."""
    z = float(z)
    _check_en_args(m, z)
    if m == 0:
        return 1.0 / z
    if z >= 1.0:
        return _en_scaled_cf(m, z)
    ez = math.exp(z)
    # upward recurrence m E_{m+1} = e^{-z} - z E_m is stable for z < 1
    en = _e1_series(z)
    for k in range(1, m):
        en = (math.exp(-z) - z * en) / k
    return ez * en


def exp_integral(m: int, z: float) -> float:
    """Generalized exponential integral E_m(z) = int_1^inf exp(-t z) / t^m dt."""
    z = float(z)
    _check_en_args(m, z)
    if m == 0:
        return math.exp(-z) / z
    if z >= 1.0:
        return _en_scaled_cf(m, z) * math.exp(-z)
    en = _e1_series(z)
    for k in range(1, m):
        en = (math.exp(-z) - z * en) / k
    return en


def log_gamma(z: float) -> float:
    if not z > 0:
        raise ValueError(f"log_gamma requires z > 0, got {z!r}")
    return float(_sp.gammaln(z))


def log_beta(a: float, b: float) -> float:
    if not (a > 0 and b > 0):
        raise ValueError(f"log_beta requires a, b > 0, got {a!r}, {b!r}")
    return float(_sp.betaln(a, b))
