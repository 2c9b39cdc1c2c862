"""Stress-strength reliability R = P(Y < X) for independent log-Lindley
strength X ~ LL(s1, p1) and stress Y ~ LL(s2, p2).

    R = s1 / (s1+s2)^3 * [s1 (s1 + 3 s2) + 2 p1 s2^2 - 2 p2 s1 s2 + p1 p2 (s1 s2 - s2^2)]

and the discrepancy between two groups is D = R(B, A) - R(A, B) = 1 - 2 R(A, B).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from . import bayes, mle
from .distribution import Params, as_sample

__all__ = [
    "TwoSampleParams",
    "ReliabilityReport",
    "FitFailure",
    "reliability",
    "reliability_values",
    "reliability_gradient",
    "delta_variance",
    "reliability_ml",
    "reliability_bayes",
    "discrepancy",
]


@dataclass(frozen=True)
class TwoSampleParams:
    strength: Params
    stress: Params

    @classmethod
    def from_values(cls, s1: float, p1: float, s2: float, p2: float) -> "TwoSampleParams":
        return cls(Params(s1, p1), Params(s2, p2))

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.strength.sigma, self.strength.pi, self.stress.sigma, self.stress.pi)


class FitFailure(RuntimeError):
    """Raised when the ML fit of one group does not converge."""

    def __init__(self, group: str, message: str):
        super().__init__(f"group {group}: {message}")
        self.group = group


@dataclass
class ReliabilityReport:
    method: str  # "ML" or "Bayes"
    r_hat: float
    interval_raw: tuple[float, float]
    m: int
    n: int
    level: float = 0.95
    variance: float | None = None
    seed: int | None = None
    fits: tuple = field(default=(), repr=False)
    draws: np.ndarray | None = field(default=None, repr=False)

    @property
    def interval(self) -> tuple[float, float]:
        lo, hi = self.interval_raw
        return (min(max(lo, 0.0), 1.0), min(max(hi, 0.0), 1.0))

    @property
    def d_hat(self) -> float:
        return 1.0 - 2.0 * self.r_hat

    @property
    def d_interval(self) -> tuple[float, float]:
        lo, hi = self.interval_raw
        return (1.0 - 2.0 * hi, 1.0 - 2.0 * lo)

    @property
    def d_variance(self) -> float | None:
        return None if self.variance is None else 4.0 * self.variance

    @property
    def ratio(self) -> float:
        return min(self.m, self.n) / max(self.m, self.n)

    def to_dict(self) -> dict:
        out = {
            "method": self.method,
            "r_hat": self.r_hat,
            "level": self.level,
            "interval_raw": list(self.interval_raw),
            "interval_clamped": list(self.interval),
            "d_hat": self.d_hat,
            "d_interval": list(self.d_interval),
            "m": self.m,
            "n": self.n,
            "ratio": self.ratio,
            "seed": self.seed,
        }
        if self.variance is not None:
            out["variance"] = self.variance
            out["d_variance"] = self.d_variance
        return out


def reliability_values(s1, p1, s2, p2):
    """Closed-form R, vectorised over numpy arrays."""
    s1, p1, s2, p2 = (np.asarray(a, dtype=float) for a in (s1, p1, s2, p2))
    bracket = s1 * (s1 + 3.0 * s2) + 2.0 * p1 * s2 ** 2 - 2.0 * p2 * s1 * s2 + p1 * p2 * (s1 * s2 - s2 ** 2)
    return s1 * bracket / (s1 + s2) ** 3


def reliability(tp: TwoSampleParams) -> float:
    return float(reliability_values(*tp.as_tuple()))


def reliability_gradient(tp: TwoSampleParams) -> np.ndarray:
    """dR/d(s1, p1, s2, p2), differentiated directly from the closed form."""
    s1, p1, s2, p2 = tp.as_tuple()
    t = s1 + s2
    # R = P / t^3 with P = s1 * bracket
    bracket = s1 * (s1 + 3 * s2) + 2 * p1 * s2 ** 2 - 2 * p2 * s1 * s2 + p1 * p2 * (s1 * s2 - s2 ** 2)
    big_p = s1 * bracket
    dbr_ds1 = 2 * s1 + 3 * s2 - 2 * p2 * s2 + p1 * p2 * s2
    dbr_ds2 = 3 * s1 + 4 * p1 * s2 - 2 * p2 * s1 + p1 * p2 * (s1 - 2 * s2)
    dbr_dp1 = 2 * s2 ** 2 + p2 * (s1 * s2 - s2 ** 2)
    dbr_dp2 = -2 * s1 * s2 + p1 * (s1 * s2 - s2 ** 2)
    dp_ds1 = bracket + s1 * dbr_ds1
    dp_ds2 = s1 * dbr_ds2
    t3, t4 = t ** 3, t ** 4
    return np.array(
        [
            dp_ds1 / t3 - 3 * big_p / t4,
            s1 * dbr_dp1 / t3,
            dp_ds2 / t3 - 3 * big_p / t4,
            s1 * dbr_dp2 / t3,
        ]
    )


def delta_variance(tp: TwoSampleParams, cov_x: np.ndarray, cov_y: np.ndarray) -> float:
    """g' Sigma g with Sigma block-diagonal in the two groups."""
    g = reliability_gradient(tp)
    sigma = np.zeros((4, 4))
    sigma[:2, :2] = cov_x
    sigma[2:, 2:] = cov_y
    return float(g @ sigma @ g)


def reliability_ml(x, y, level: float = 0.95) -> ReliabilityReport:
    """Plug-in ML estimate of R with a delta-method Wald interval."""
    x = as_sample(x, min_size=2)
    y = as_sample(y, min_size=2)
    fits = []
    for label, s in (("x", x), ("y", y)):
        f = mle.fit(s, level=level)
        if not f.converged:
            raise FitFailure(label, f"maximum likelihood fit did not converge ({f.message})")
        fits.append(f)
    tp = TwoSampleParams(fits[0].estimate, fits[1].estimate)
    r_hat = reliability(tp)
    var = delta_variance(tp, fits[0].covariance, fits[1].covariance)
    z = norm.ppf(0.5 + level / 2.0)
    half = z * math.sqrt(var)
    return ReliabilityReport(
        method="ML",
        r_hat=r_hat,
        interval_raw=(r_hat - half, r_hat + half),
        m=x.size,
        n=y.size,
        level=level,
        variance=var,
        fits=tuple(fits),
    )


def reliability_bayes(
    x,
    y,
    priors: tuple[bayes.PriorSpec, bayes.PriorSpec],
    n_draws: int = 10000,
    rng: np.random.Generator | None = None,
    level: float = 0.95,
    keep_draws: bool = True,
) -> ReliabilityReport:
    """Posterior mean and equal-tailed interval of R from exact posterior draws."""
    if n_draws < 1000:
        raise ValueError(f"n_draws must be >= 1000, got {n_draws!r}")
    if rng is None:
        rng = np.random.default_rng()
    x = as_sample(x)
    y = as_sample(y)
    mix_x = bayes.posterior(x, priors[0])
    mix_y = bayes.posterior(y, priors[1])
    dx = bayes.sample_posterior(mix_x, n_draws, rng)
    dy = bayes.sample_posterior(mix_y, n_draws, rng)
    r = reliability_values(dx[:, 0], dx[:, 1], dy[:, 0], dy[:, 1])
    tail = 0.5 * (1.0 - level)
    lo, hi = np.quantile(r, [tail, 1.0 - tail])
    return ReliabilityReport(
        method="Bayes",
        r_hat=float(np.mean(r)),
        interval_raw=(float(lo), float(hi)),
        m=x.size,
        n=y.size,
        level=level,
        fits=(mix_x, mix_y),
        draws=r if keep_draws else None,
    )


def discrepancy(report) -> float:
    """D(A, B) = R(B, A) - R(A, B) = 1 - 2 R(A, B); accepts a report or a number."""
    if isinstance(report, ReliabilityReport):
        return report.d_hat
    return 1.0 - 2.0 * float(report)
