"""Monte Carlo harness for bias / MSE / interval studies of the estimators.

Every replicate draws from its own generator keyed by (seed, config index,
sample sizes, replicate index), so serial and parallel runs produce identical
tables and a run over a subset of sizes reproduces those rows of the full run.
"""
from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import bayes, mle
from .bayes import PriorSpec
from .distribution import Params, sample
from .reliability import TwoSampleParams, delta_variance, reliability, reliability_values

__all__ = [
    "SIGMA_PRESETS",
    "PI_PRESETS",
    "default_prior",
    "SimConfig",
    "EstimandSummary",
    "SimRow",
    "SimulationError",
    "replicate_rng",
    "run_ml_study",
    "run_bayes_study",
    "run_reliability_study",
    "run_study",
    "write_table_csv",
]

# hyper-parameters whose prior mean equals the generating value
SIGMA_PRESETS = {1.0: (1.0, 1.0), 2.5: (2.0, 5.0), 3.5: (2.0, 7.0)}
PI_PRESETS = {0.2: (1.0, 4.0), 0.5: (1.0, 1.0), 0.7: (3.5, 1.5)}

MAX_FAILURE_FRACTION = 0.2


class SimulationError(RuntimeError):
    pass


def default_prior(p: Params) -> PriorSpec:
    try:
        tau, delta = SIGMA_PRESETS[p.sigma]
        alpha, beta = PI_PRESETS[p.pi]
    except KeyError:
        raise ValueError(f"no preset hyper-parameters for sigma={p.sigma}, pi={p.pi}") from None
    return PriorSpec(tau=tau, delta=delta, alpha=alpha, beta=beta)


@dataclass
class SimConfig:
    truth: Params | TwoSampleParams
    sizes: list
    replicates: int = 1000
    priors: PriorSpec | tuple[PriorSpec, PriorSpec] | None = None
    n_posterior_draws: int = 10000
    seed: int = 20200101
    level: float = 0.95
    config_index: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        sizes = []
        for s in self.sizes:
            pair = (int(s), None) if np.ndim(s) == 0 else (int(s[0]), int(s[1]))
            if pair[0] < 2 or (pair[1] is not None and pair[1] < 2):
                raise ValueError(f"all sample sizes must be >= 2, got {s!r}")
            sizes.append(pair)
        self.sizes = sizes
        if not 0.0 < self.level < 1.0:
            raise ValueError("level must lie in (0, 1)")


@dataclass
class EstimandSummary:
    truth: float
    bias: float
    mse: float
    interval_lo: float
    interval_hi: float
    coverage: float
    bias_se: float
    mse_se: float


@dataclass
class SimRow:
    m: int
    n: int | None
    method: str
    estimands: dict = field(default_factory=dict)
    n_failures: int = 0
    n_replicates: int = 0

    def flat(self) -> dict:
        out = {"m": self.m}
        if self.n is not None:
            out["n"] = self.n
        for name, s in self.estimands.items():
            out[f"bias_{name}"] = s.bias
            out[f"mse_{name}"] = s.mse
            out[f"lo_{name}"] = s.interval_lo
            out[f"hi_{name}"] = s.interval_hi
            out[f"coverage_{name}"] = s.coverage
        out["n_failures"] = self.n_failures
        return out


def replicate_rng(seed: int, key, replicate: int) -> np.random.Generator:
    """Independent PCG64 stream for one replicate; key is an int or a tuple of ints."""
    key = tuple(key) if isinstance(key, (tuple, list)) else (key,)
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(*key, replicate))
    return np.random.Generator(np.random.PCG64(ss))


def _stream_key(cfg: SimConfig, m: int, n: int | None) -> tuple[int, int, int]:
    return (cfg.config_index, m, 0 if n is None else n)


def _summarise(truth: float, est: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> EstimandSummary:
    err = est - truth
    sq = err ** 2
    k = err.size
    return EstimandSummary(
        truth=truth,
        bias=float(np.mean(err)),
        mse=float(np.mean(sq)),
        interval_lo=float(np.mean(lo)),
        interval_hi=float(np.mean(hi)),
        coverage=float(np.mean((lo <= truth) & (truth <= hi))),
        bias_se=float(np.std(err, ddof=1) / math.sqrt(k)) if k > 1 else math.nan,
        mse_se=float(np.std(sq, ddof=1) / math.sqrt(k)) if k > 1 else math.nan,
    )


# --- single replicates (module-level so they pickle for process pools) ---


def _ml_replicate(args):
    truth, m, seed, cfg_idx, rep, level = args
    rng = replicate_rng(seed, cfg_idx, rep)
    f = mle.fit(sample(truth, m, rng), level=level)
    if not f.converged:
        return None
    e = f.estimate
    return (e.sigma, f.ci_sigma[0], f.ci_sigma[1], e.pi, f.ci_pi_raw[0], f.ci_pi_raw[1])


def _bayes_replicate(args):
    truth, m, seed, cfg_idx, rep, level, prior = args
    rng = replicate_rng(seed, cfg_idx, rep)
    f = bayes.fit_bayes(sample(truth, m, rng), prior, level=level)
    e = f.estimate
    return (e.sigma, f.cri_sigma[0], f.cri_sigma[1], e.pi, f.cri_pi[0], f.cri_pi[1])


def _reliability_replicate(args):
    truth, m, n, seed, cfg_idx, rep, level, priors, n_draws = args
    rng = replicate_rng(seed, cfg_idx, rep)
    x = sample(truth.strength, m, rng)
    y = sample(truth.stress, n, rng)

    fx = mle.fit(x, level=level)
    fy = mle.fit(y, level=level)
    if fx.converged and fy.converged:
        tp = TwoSampleParams(fx.estimate, fy.estimate)
        r_ml = reliability(tp)
        var = delta_variance(tp, fx.covariance, fy.covariance)
        z = _z(level)
        half = z * math.sqrt(var)
        ml = (r_ml, r_ml - half, r_ml + half)
    else:
        ml = None

    mix_x = bayes.posterior(x, priors[0])
    mix_y = bayes.posterior(y, priors[1])
    dx = bayes.sample_posterior(mix_x, n_draws, rng)
    dy = bayes.sample_posterior(mix_y, n_draws, rng)
    r = reliability_values(dx[:, 0], dx[:, 1], dy[:, 0], dy[:, 1])
    tail = 0.5 * (1.0 - level)
    lo, hi = np.quantile(r, [tail, 1.0 - tail])
    return ml, (float(np.mean(r)), float(lo), float(hi))


def _z(level: float) -> float:
    from scipy.stats import norm

    return float(norm.ppf(0.5 + level / 2.0))


def _map(func, jobs, workers: int):
    if workers <= 1:
        return [func(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(func, jobs, chunksize=max(1, len(jobs) // (8 * workers))))


def _check_failures(n_fail: int, total: int, label: str) -> None:
    if n_fail > MAX_FAILURE_FRACTION * total:
        raise SimulationError(f"{label}: {n_fail} of {total} replicates failed to converge")


def _point_rows(cfg: SimConfig, func, extra, method: str) -> list[SimRow]:
    truth = cfg.truth
    rows = []
    for m, _ in cfg.sizes:
        cfg_idx = _stream_key(cfg, m, None)
        jobs = [(truth, m, cfg.seed, cfg_idx, rep, cfg.level, *extra) for rep in range(cfg.replicates)]
        results = _map(func, jobs, cfg.workers)
        ok = np.array([r for r in results if r is not None], dtype=float).reshape(-1, 6)
        n_fail = cfg.replicates - ok.shape[0]
        _check_failures(n_fail, cfg.replicates, f"m={m}")
        rows.append(
            SimRow(
                m=m,
                n=None,
                method=method,
                estimands={
                    "sigma": _summarise(truth.sigma, ok[:, 0], ok[:, 1], ok[:, 2]),
                    "pi": _summarise(truth.pi, ok[:, 3], ok[:, 4], ok[:, 5]),
                },
                n_failures=n_fail,
                n_replicates=cfg.replicates,
            )
        )
    return rows


def run_ml_study(cfg: SimConfig) -> list[SimRow]:
    """Bias, MSE and mean Wald interval of the ML estimators per sample size.

    Interval endpoints for pi are the raw (unclamped) limits.
    """
    if not isinstance(cfg.truth, Params):
        raise TypeError("run_ml_study needs a single Params truth")
    return _point_rows(cfg, _ml_replicate, (), "ML")


def run_bayes_study(cfg: SimConfig) -> list[SimRow]:
    """Same layout as run_ml_study for posterior means and exact credible intervals."""
    if not isinstance(cfg.truth, Params):
        raise TypeError("run_bayes_study needs a single Params truth")
    prior = cfg.priors if cfg.priors is not None else default_prior(cfg.truth)
    if not isinstance(prior, PriorSpec):
        raise TypeError("run_bayes_study needs a single PriorSpec")
    return _point_rows(cfg, _bayes_replicate, (prior,), "Bayes")


def run_reliability_study(cfg: SimConfig) -> list[SimRow]:
    """ML and Bayes estimators of R on each (m, n) pair.

    ML replicates with a non-converged fit are dropped from the ML summary
    only; the Bayes summary always uses every replicate.
    """
    truth = cfg.truth
    if not isinstance(truth, TwoSampleParams):
        raise TypeError("run_reliability_study needs TwoSampleParams truth")
    priors = cfg.priors
    if priors is None:
        priors = (default_prior(truth.strength), default_prior(truth.stress))
    r_true = reliability(truth)
    rows = []
    for m, n in cfg.sizes:
        if n is None:
            raise ValueError("reliability studies need (m, n) pairs")
        cfg_idx = _stream_key(cfg, m, n)
        jobs = [
            (truth, m, n, cfg.seed, cfg_idx, rep, cfg.level, priors, cfg.n_posterior_draws)
            for rep in range(cfg.replicates)
        ]
        results = _map(_reliability_replicate, jobs, cfg.workers)
        ml = np.array([r[0] for r in results if r[0] is not None], dtype=float).reshape(-1, 3)
        by = np.array([r[1] for r in results], dtype=float).reshape(-1, 3)
        n_fail = cfg.replicates - ml.shape[0]
        _check_failures(n_fail, cfg.replicates, f"(m, n)=({m}, {n})")
        rows.append(
            SimRow(
                m=m,
                n=n,
                method="ML+Bayes",
                estimands={
                    "R_M": _summarise(r_true, ml[:, 0], ml[:, 1], ml[:, 2]),
                    "R_B": _summarise(r_true, by[:, 0], by[:, 1], by[:, 2]),
                },
                n_failures=n_fail,
                n_replicates=cfg.replicates,
            )
        )
    return rows


def run_study(kind: str, cfg: SimConfig) -> list[SimRow]:
    runners = {"ml": run_ml_study, "bayes": run_bayes_study, "reliability": run_reliability_study}
    try:
        return runners[kind](cfg)
    except KeyError:
        raise ValueError(f"unknown study kind {kind!r}; expected one of {sorted(runners)}") from None


def write_table_csv(path, rows: list[SimRow], digits: int | None = None) -> None:
    """One line per sample size, columns grouped per estimand."""
    if not rows:
        raise ValueError("no rows to write")
    flat = [r.flat() for r in rows]
    header = list(flat[0])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for rec in flat:
            vals = []
            for key in header:
                v = rec[key]
                if isinstance(v, float) and digits is not None:
                    vals.append(f"{v:.{digits}f}")
                else:
                    vals.append(repr(v) if isinstance(v, float) else v)
            w.writerow(vals)
