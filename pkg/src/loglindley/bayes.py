"""Exact Bayesian inference for LL(sigma, pi) under Gamma x Beta priors.

Expanding the product in the likelihood gives

    L(sigma, pi | x) = exp(-(sigma-1) V1) sum_i pi^(m-i) (1-pi)^i sigma^(m+i) V_i

where V_i is the i-th elementary symmetric polynomial of y_j = -log x_j. With
a Gamma(shape delta, rate tau) prior on sigma and Beta(alpha, beta) on pi the
joint posterior is a finite mixture over i = 0..m of independent

    sigma ~ Gamma(m + delta + i, rate tau + V1),   pi ~ Beta(alpha + m - i, beta + i)

so posterior means, quantiles and draws are all exact.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.special import betainc, betaincinv, gammainc, gammaincinv, gammaln, logsumexp

from .distribution import Params, as_sample

__all__ = [
    "PriorSpec",
    "SymmetricStats",
    "PosteriorMixture",
    "FitResultBayes",
    "MetropolisResult",
    "symmetric_stats",
    "likelihood_via_expansion",
    "log_likelihood_via_expansion",
    "posterior",
    "bayes_estimates",
    "credible_interval",
    "sample_posterior",
    "fit_bayes",
    "metropolis_check",
    "split_rhat",
    "effective_sample_size",
    "write_draws_csv",
]


@dataclass(frozen=True)
class PriorSpec:
    """Gamma(shape=delta, rate=tau) on sigma and Beta(alpha, beta) on pi."""

    tau: float
    delta: float
    alpha: float
    beta: float

    def __post_init__(self):
        if not (math.isfinite(self.tau) and self.tau >= 0):
            raise ValueError(f"tau must be >= 0, got {self.tau!r}")
        for name in ("delta", "alpha", "beta"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be > 0, got {v!r}")

    def log_density(self, sigma, pi):
        """Unnormalised log prior density."""
        sigma = np.asarray(sigma, dtype=float)
        pi = np.asarray(pi, dtype=float)
        return (
            (self.delta - 1.0) * np.log(sigma)
            - self.tau * sigma
            + (self.alpha - 1.0) * np.log(pi)
            + (self.beta - 1.0) * np.log1p(-pi)
        )


@dataclass(frozen=True)
class SymmetricStats:
    """V_0..V_m for a sample; log_v is always available, v may hold inf."""

    log_v: np.ndarray
    computed_in_log_space: bool = False

    @property
    def m(self) -> int:
        return self.log_v.size - 1

    @property
    def v(self) -> np.ndarray:
        with np.errstate(over="ignore"):
            return np.exp(self.log_v)

    @property
    def v1(self) -> float:
        return float(np.exp(self.log_v[1]))


@dataclass(frozen=True)
class PosteriorMixture:
    log_weights: np.ndarray
    gamma_shape: np.ndarray
    gamma_rate: float
    beta_a: np.ndarray
    beta_b: np.ndarray

    @property
    def m(self) -> int:
        return self.log_weights.size - 1

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)

    def _active(self, cutoff: float = 1e-17):
        # components whose weight cannot move any cdf beyond 1e-15
        w = self.weights
        keep = w > cutoff * w.max()
        return w[keep] / w[keep].sum(), keep

    def sigma_cdf(self, s: float) -> float:
        if s <= 0:
            return 0.0
        w, keep = self._active()
        return float(np.dot(w, gammainc(self.gamma_shape[keep], self.gamma_rate * s)))

    def pi_cdf(self, p: float) -> float:
        if p <= 0:
            return 0.0
        if p >= 1:
            return 1.0
        w, keep = self._active()
        return float(np.dot(w, betainc(self.beta_a[keep], self.beta_b[keep], p)))

    def sigma_pdf(self, s):
        s = np.asarray(s, dtype=float)[..., None]
        a = self.gamma_shape
        r = self.gamma_rate
        logc = a * math.log(r) - gammaln(a) + (a - 1) * np.log(s) - r * s
        return np.exp(logsumexp(self.log_weights + logc, axis=-1))

    def pi_pdf(self, p):
        p = np.asarray(p, dtype=float)[..., None]
        a, b = self.beta_a, self.beta_b
        logc = gammaln(a + b) - gammaln(a) - gammaln(b) + (a - 1) * np.log(p) + (b - 1) * np.log1p(-p)
        return np.exp(logsumexp(self.log_weights + logc, axis=-1))

    def summary(self) -> dict:
        return {
            "m": self.m,
            "gamma_rate": self.gamma_rate,
            "weights": self.weights.tolist(),
            "gamma_shape": self.gamma_shape.tolist(),
            "beta_a": self.beta_a.tolist(),
            "beta_b": self.beta_b.tolist(),
        }


@dataclass
class FitResultBayes:
    estimate: Params
    cri_sigma: tuple[float, float]
    cri_pi: tuple[float, float]
    mixture: PosteriorMixture
    prior: PriorSpec
    level: float = 0.95
    posterior_draws: np.ndarray | None = field(default=None, repr=False)
    diagnostics: dict | None = None

    def to_dict(self) -> dict:
        out = {
            "method": "bayes",
            "m": self.mixture.m,
            "sigma": self.estimate.sigma,
            "pi": self.estimate.pi,
            "level": self.level,
            "cri_sigma": list(self.cri_sigma),
            "cri_pi": list(self.cri_pi),
            "prior": {
                "tau": self.prior.tau,
                "delta": self.prior.delta,
                "alpha": self.prior.alpha,
                "beta": self.prior.beta,
            },
            "mixture": self.mixture.summary(),
        }
        if self.diagnostics is not None:
            out["diagnostics"] = self.diagnostics
        return out


def symmetric_stats(s) -> SymmetricStats:
    """Elementary symmetric polynomials of -log x by the O(m^2) recurrence.

    Coefficients of prod_j (1 + y_j t) are accumulated one factor at a time.
    All y_j > 0, so every update is a sum of positive terms; if the linear
    pass overflows or underflows it is redone with logaddexp.
    """
    y = -np.log(as_sample(s))
    m = y.size
    e = np.zeros(m + 1)
    e[0] = 1.0
    with np.errstate(over="ignore", invalid="ignore"):
        for j, yj in enumerate(y, start=1):
            e[1 : j + 1] = e[1 : j + 1] + yj * e[0:j]
    if np.all(np.isfinite(e)) and np.all(e > 1e-290):
        return SymmetricStats(np.log(e), computed_in_log_space=False)

    le = np.full(m + 1, -np.inf)
    le[0] = 0.0
    ly = np.log(y)
    for j, lyj in enumerate(ly, start=1):
        le[1 : j + 1] = np.logaddexp(le[1 : j + 1], lyj + le[0:j])
    return SymmetricStats(le, computed_in_log_space=True)


def log_likelihood_via_expansion(p: Params, stats: SymmetricStats) -> float:
    m = stats.m
    i = np.arange(m + 1)
    with np.errstate(divide="ignore"):
        lpi = math.log(p.pi) if p.pi > 0 else -math.inf
        l1pi = math.log1p(-p.pi) if p.pi < 1 else -math.inf
    # 0 * log 0 := 0 so the pi = 0 / pi = 1 edge terms survive
    with np.errstate(invalid="ignore"):
        t_pi = np.where(m - i == 0, 0.0, (m - i) * lpi)
        t_1pi = np.where(i == 0, 0.0, i * l1pi)
    terms = t_pi + t_1pi + (m + i) * math.log(p.sigma) + stats.log_v
    return float(-(p.sigma - 1.0) * stats.v1 + logsumexp(terms))


def likelihood_via_expansion(p: Params, stats: SymmetricStats) -> float:
    return math.exp(log_likelihood_via_expansion(p, stats))


def posterior(s, prior: PriorSpec) -> PosteriorMixture:
    """Mixture weights and component parameters of the joint posterior."""
    stats = s if isinstance(s, SymmetricStats) else symmetric_stats(s)
    m = stats.m
    i = np.arange(m + 1, dtype=float)
    rate = prior.tau + stats.v1
    shape = m + prior.delta + i
    a = prior.alpha + m - i
    b = prior.beta + i
    log_w = (
        stats.log_v
        + gammaln(a)
        + gammaln(b)
        - gammaln(prior.alpha + prior.beta + m)
        + gammaln(shape)
        - shape * math.log(rate)
    )
    norm = logsumexp(log_w)
    if not math.isfinite(norm):
        raise FloatingPointError("posterior weights could not be normalised")
    return PosteriorMixture(log_w - norm, shape, float(rate), a, b)


def bayes_estimates(mix: PosteriorMixture) -> Params:
    """Posterior means (Bayes estimators under squared-error loss)."""
    w = mix.weights
    sigma = float(np.dot(w, mix.gamma_shape)) / mix.gamma_rate
    pi = float(np.dot(w, mix.beta_a / (mix.beta_a + mix.beta_b)))
    return Params(sigma, min(max(pi, 0.0), 1.0))


def _mixture_quantile(cdf, comp_ppf, q: float) -> float:
    lo, hi = float(np.min(comp_ppf)), float(np.max(comp_ppf))
    if hi - lo <= 1e-15 * max(1.0, abs(hi)):
        return 0.5 * (lo + hi)
    return brentq(lambda t: cdf(t) - q, lo, hi, xtol=1e-14, rtol=1e-13, maxiter=200)


def credible_interval(mix: PosteriorMixture, which: str, level: float = 0.95) -> tuple[float, float]:
    """Equal-tailed interval from the exact mixture cdf.

    The mixture quantile lies between the smallest and largest component
    quantile, which gives a valid bracket for the root search.
    """
    if not 0.0 < level < 1.0:
        raise ValueError(f"level must lie in (0, 1), got {level!r}")
    tail = 0.5 * (1.0 - level)
    _, keep = mix._active()
    out = []
    for q in (tail, 1.0 - tail):
        if which == "sigma":
            ppf = gammaincinv(mix.gamma_shape[keep], q) / mix.gamma_rate
            out.append(_mixture_quantile(mix.sigma_cdf, ppf, q))
        elif which == "pi":
            ppf = betaincinv(mix.beta_a[keep], mix.beta_b[keep], q)
            out.append(_mixture_quantile(mix.pi_cdf, ppf, q))
        else:
            raise ValueError(f"which must be 'sigma' or 'pi', got {which!r}")
    return out[0], out[1]


def sample_posterior(mix: PosteriorMixture, n_draws: int, rng: np.random.Generator) -> np.ndarray:
    """Exact ancestral draws; returns an (n_draws, 2) array of (sigma, pi)."""
    if n_draws < 1:
        raise ValueError(f"n_draws must be >= 1, got {n_draws!r}")
    w = mix.weights
    idx = rng.choice(w.size, size=n_draws, p=w / w.sum())
    sigma = rng.gamma(mix.gamma_shape[idx], 1.0 / mix.gamma_rate)
    pi = rng.beta(mix.beta_a[idx], mix.beta_b[idx])
    return np.column_stack([sigma, pi])


def fit_bayes(
    s,
    prior: PriorSpec,
    level: float = 0.95,
    n_draws: int = 0,
    rng: np.random.Generator | None = None,
) -> FitResultBayes:
    mix = posterior(s, prior)
    draws = None
    if n_draws:
        if rng is None:
            raise ValueError("rng is required when n_draws > 0")
        draws = sample_posterior(mix, n_draws, rng)
    return FitResultBayes(
        estimate=bayes_estimates(mix),
        cri_sigma=credible_interval(mix, "sigma", level),
        cri_pi=credible_interval(mix, "pi", level),
        mixture=mix,
        prior=prior,
        level=level,
        posterior_draws=draws,
    )


# ---------------------------------------------------------------------------
# Random-walk Metropolis, kept only as an independent check of the exact path
# ---------------------------------------------------------------------------


def split_rhat(chains: np.ndarray) -> float:
    """Split-chain potential scale reduction; chains has shape (n_chains, n)."""
    chains = np.asarray(chains, dtype=float)
    n = chains.shape[1] // 2
    halves = np.concatenate([chains[:, :n], chains[:, n : 2 * n]], axis=0)
    means = halves.mean(axis=1)
    w = halves.var(axis=1, ddof=1).mean()
    b = n * means.var(ddof=1)
    var_plus = (n - 1) / n * w + b / n
    return float(math.sqrt(var_plus / w))


def effective_sample_size(chains: np.ndarray) -> float:
    """Multi-chain ESS with Geyer's initial monotone sequence truncation."""
    chains = np.asarray(chains, dtype=float)
    n_chains, n = chains.shape
    centred = chains - chains.mean(axis=1, keepdims=True)
    nfft = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(centred, nfft, axis=1)
    acov = np.fft.irfft(f * np.conj(f), nfft, axis=1)[:, :n] / n
    chain_var = acov[:, 0] * n / (n - 1.0)
    w = chain_var.mean()
    b_over_n = chains.mean(axis=1).var(ddof=1) if n_chains > 1 else 0.0
    var_plus = (n - 1.0) / n * w + b_over_n
    rho = 1.0 - (w - acov.mean(axis=0)) / var_plus
    rho[0] = 1.0
    # pair sums, truncated at the first negative and forced monotone
    total = 0.0
    prev = math.inf
    t = 0
    while t + 1 < n:
        pair = rho[t] + rho[t + 1]
        if pair < 0:
            break
        pair = min(pair, prev)
        total += pair
        prev = pair
        t += 2
    tau = -1.0 + 2.0 * total
    return float(n_chains * n / max(tau, 1.0 / math.log10(n_chains * n)))


@dataclass
class MetropolisResult:
    draws: np.ndarray  # (chains, iters, 2) kept draws of (sigma, pi)
    acceptance: np.ndarray
    rhat: dict
    ess: dict

    def to_dict(self) -> dict:
        return {
            "chains": int(self.draws.shape[0]),
            "iters": int(self.draws.shape[1]),
            "acceptance": self.acceptance.tolist(),
            "rhat": self.rhat,
            "ess": self.ess,
        }


def _log_target(theta: np.ndarray, lx: np.ndarray, prior: PriorSpec) -> np.ndarray:
    # theta = (log sigma, logit pi) per chain; includes the change-of-variables Jacobian
    sigma = np.exp(theta[:, 0])
    log_pi = -np.logaddexp(0.0, -theta[:, 1])
    log_1mpi = -np.logaddexp(0.0, theta[:, 1])
    pi = np.exp(log_pi)
    bracket = pi[:, None] - sigma[:, None] * np.exp(log_1mpi)[:, None] * lx[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        ll = lx.size * np.log(sigma) + (sigma - 1.0) * lx.sum() + np.log(bracket).sum(axis=1)
    lp = (
        (prior.delta - 1.0) * np.log(sigma)
        - prior.tau * sigma
        + (prior.alpha - 1.0) * log_pi
        + (prior.beta - 1.0) * log_1mpi
    )
    jac = theta[:, 0] + log_pi + log_1mpi
    out = ll + lp + jac
    return np.where(np.isfinite(out), out, -np.inf)


def metropolis_check(
    s,
    prior: PriorSpec,
    chains: int = 4,
    iters: int = 2500,
    rng: np.random.Generator | None = None,
    warmup: int | None = None,
) -> MetropolisResult:
    """Random-walk Metropolis on (log sigma, logit pi), chains advanced in lockstep.

    Warm-up adapts a shared proposal covariance and scale toward ~30%
    acceptance; only post-warm-up draws are kept. Starting points are
    dispersed around the ML estimate so the exact sampler plays no part here.
    """
    from .mle import fit

    if chains < 2:
        raise ValueError("metropolis_check needs at least 2 chains for R-hat")
    if iters < 4:
        raise ValueError("iters must be >= 4")
    if rng is None:
        rng = np.random.default_rng()
    warmup = iters if warmup is None else warmup
    x = as_sample(s, min_size=2)
    lx = np.log(x)

    est = fit(x).estimate
    pi0 = min(max(est.pi, 0.05), 0.95)
    centre = np.array([math.log(est.sigma), math.log(pi0 / (1.0 - pi0))])
    theta = centre + rng.normal(scale=0.5, size=(chains, 2))
    logp = _log_target(theta, lx, prior)

    cov = np.diag([0.5 / lx.size, 4.0 / lx.size])
    scale = 2.38 / math.sqrt(2.0)
    chol = np.linalg.cholesky(cov)
    kept = np.empty((chains, iters, 2))
    accepted = np.zeros(chains)
    window_acc = 0.0
    warm_hist = []

    for t in range(warmup + iters):
        prop = theta + scale * rng.standard_normal((chains, 2)) @ chol.T
        logp_prop = _log_target(prop, lx, prior)
        log_u = np.log(rng.random(chains))
        accept = log_u < logp_prop - logp
        theta = np.where(accept[:, None], prop, theta)
        logp = np.where(accept, logp_prop, logp)
        if t < warmup:
            window_acc += accept.mean()
            warm_hist.append(theta.copy())
            if (t + 1) % 50 == 0:
                rate = window_acc / 50.0
                scale *= math.exp(rate - 0.3)
                window_acc = 0.0
                if t + 1 >= warmup // 2 and len(warm_hist) > 200:
                    recent = np.concatenate(warm_hist[len(warm_hist) // 2 :])
                    emp = np.cov(recent.T) + 1e-10 * np.eye(2)
                    try:
                        chol = np.linalg.cholesky(emp)
                        scale = min(scale, 2.38 / math.sqrt(2.0))
                    except np.linalg.LinAlgError:
                        pass
        else:
            i = t - warmup
            accepted += accept
            kept[:, i, 0] = np.exp(theta[:, 0])
            kept[:, i, 1] = 1.0 / (1.0 + np.exp(-theta[:, 1]))

    rhat = {"sigma": split_rhat(kept[:, :, 0]), "pi": split_rhat(kept[:, :, 1])}
    ess = {"sigma": effective_sample_size(kept[:, :, 0]), "pi": effective_sample_size(kept[:, :, 1])}
    worst = max(rhat.values())
    if worst > 1.01:
        warnings.warn(f"Metropolis chains may not have converged: max R-hat = {worst:.4f}", RuntimeWarning, stacklevel=2)
    return MetropolisResult(kept, accepted / iters, rhat, ess)


def write_draws_csv(path, draws: np.ndarray) -> None:
    """Write draws as CSV with columns chain, iter, sigma, pi.

    draws is (chains, iters, 2) or a flat (n, 2) array (written as chain 0).
    """
    draws = np.asarray(draws, dtype=float)
    if draws.ndim == 2:
        draws = draws[None, :, :]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["chain", "iter", "sigma", "pi"])
        for c in range(draws.shape[0]):
            for i in range(draws.shape[1]):
                w.writerow([c, i, repr(float(draws[c, i, 0])), repr(float(draws[c, i, 1]))])
