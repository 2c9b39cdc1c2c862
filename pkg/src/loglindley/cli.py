"""Command-line front end: ``loglindley {fit,reliability,analyze,simulate,trace,generate}``.

Exit codes: 0 ok, 2 input error, 3 convergence failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import platform
import sys
import time
import warnings
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__, bayes, mle, simulation
from .bayes import PriorSpec
from .distribution import Params, sample
from .reliability import FitFailure, TwoSampleParams, reliability_bayes, reliability_ml

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - exercised on 3.10
    import tomli as tomllib

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_CONVERGENCE = 3


class InputError(Exception):
    pass


class ConvergenceFailure(Exception):
    pass


# --------------------------------------------------------------------------
# CSV ingestion
# --------------------------------------------------------------------------


def _parse_value(raw: str, lineno: int, scale: float) -> float:
    try:
        v = float(raw)
    except ValueError:
        raise InputError(f"line {lineno}: cannot parse value {raw!r}") from None
    v = v / scale
    if not (math.isfinite(v) and 0.0 < v < 1.0):
        raise InputError(f"line {lineno}: value {v!r} (after scaling) is outside (0, 1)")
    return v


def read_values(path, scale: float = 1.0, value_column: str = "value",
                group_column: str | None = None, group: str | None = None) -> np.ndarray:
    """Read a one-group CSV, or one group of a two-group CSV."""
    groups = read_groups(path, scale, value_column, group_column) if group_column else None
    if groups is not None:
        if group is None:
            raise InputError("--group is required when reading a two-group file")
        if group not in groups:
            raise InputError(f"group {group!r} not found; available: {sorted(groups)}")
        return np.array(groups[group])
    rows = _read_rows(path)
    header, body = rows[0][1], rows[1:]
    if value_column not in header:
        raise InputError(f"line 1: header must contain a {value_column!r} column, got {header}")
    idx = header.index(value_column)
    values = [_parse_value(_cell(r, idx, n), n, scale) for n, r in body]
    if not values:
        raise InputError("no data rows")
    return np.array(values)


def read_groups(path, scale: float = 1.0, value_column: str = "value",
                group_column: str = "group") -> dict[str, list[float]]:
    rows = _read_rows(path)
    header, body = rows[0][1], rows[1:]
    for col in (group_column, value_column):
        if col not in header:
            raise InputError(f"line 1: header must contain a {col!r} column, got {header}")
    gi, vi = header.index(group_column), header.index(value_column)
    groups: dict[str, list[float]] = {}
    for n, r in body:
        label = _cell(r, gi, n).strip()
        groups.setdefault(label, []).append(_parse_value(_cell(r, vi, n), n, scale))
    if not groups:
        raise InputError("no data rows")
    return groups


def _cell(row: list[str], idx: int, lineno: int) -> str:
    if idx >= len(row):
        raise InputError(f"line {lineno}: expected at least {idx + 1} columns, got {len(row)}")
    return row[idx]


def _read_rows(path) -> list[tuple[int, list[str]]]:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = [(i, [c.strip() for c in r]) for i, r in enumerate(csv.reader(fh), start=1) if r and any(c.strip() for c in r)]
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from None
    except (UnicodeDecodeError, csv.Error) as exc:
        raise InputError(f"{path}: {exc}") from None
    if not rows:
        raise InputError(f"{path}: file is empty")
    return rows


# --------------------------------------------------------------------------
# helpers
# --------------------------------------------------------------------------


def _prior_from_args(args, suffix: str = "") -> PriorSpec:
    names = ("tau", "delta", "alpha", "beta")
    vals = {n: getattr(args, f"prior_{n}{suffix.replace('-', '_')}") for n in names}
    missing = [f"--prior-{n}{suffix}" for n, v in vals.items() if v is None]
    if missing:
        raise InputError(f"Bayes method needs {', '.join(missing)}")
    try:
        return PriorSpec(**vals)
    except ValueError as exc:
        raise InputError(str(exc)) from None


def _write_json(obj, out) -> None:
    text = json.dumps(obj, indent=2, sort_keys=False)
    if out:
        Path(out).write_text(text + "\n")
    else:
        print(text)


def _add_prior_flags(p: argparse.ArgumentParser, suffixes=("",)) -> None:
    for suf in suffixes:
        for n in ("tau", "delta", "alpha", "beta"):
            p.add_argument(f"--prior-{n}{suf}", type=float, default=None)


def _fmt(v: float) -> str:
    return f"{v:.4f}"


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------


def cmd_fit(args) -> int:
    x = read_values(args.input, args.scale, args.value_column, args.group_column, args.group)
    if x.size < 2:
        raise InputError("fitting needs at least 2 observations")
    if args.method == "ml":
        try:
            res = mle.fit(x, level=args.level)
        except ValueError as exc:
            raise InputError(str(exc)) from None
        if not res.converged:
            raise ConvergenceFailure(f"optimizer did not converge: {res.message}")
        report = res.to_dict()
        lines = [
            f"sigma  {_fmt(res.estimate.sigma)}  var {_fmt(res.var_sigma)}  CI ({_fmt(res.ci_sigma[0])}, {_fmt(res.ci_sigma[1])})",
            f"pi     {_fmt(res.estimate.pi)}  var {_fmt(res.var_pi)}  CI ({_fmt(res.ci_pi[0])}, {_fmt(res.ci_pi[1])})",
        ]
    else:
        prior = _prior_from_args(args)
        rng = np.random.default_rng(args.seed)
        res = bayes.fit_bayes(x, prior, level=args.level, n_draws=args.draws, rng=rng)
        report = res.to_dict()
        lines = [
            f"sigma  {_fmt(res.estimate.sigma)}  CrI ({_fmt(res.cri_sigma[0])}, {_fmt(res.cri_sigma[1])})",
            f"pi     {_fmt(res.estimate.pi)}  CrI ({_fmt(res.cri_pi[0])}, {_fmt(res.cri_pi[1])})",
        ]
    report["seed"] = args.seed
    report["scale"] = args.scale
    _write_json(report, args.out)
    if args.out:
        print("\n".join(lines))
    return EXIT_OK


def cmd_reliability(args) -> int:
    groups = read_groups(args.input, args.scale, args.value_column, args.group_column)
    if len(groups) != 2:
        raise InputError(f"expected exactly two groups, found {len(groups)}: {sorted(groups)}")
    labels = sorted(groups)
    if args.strength_group is not None:
        if args.strength_group not in groups:
            raise InputError(f"strength group {args.strength_group!r} not in {labels}")
        a = args.strength_group
        b = next(lab for lab in labels if lab != a)
    else:
        a, b = labels
    x, y = np.array(groups[a]), np.array(groups[b])
    for lab, arr in ((a, x), (b, y)):
        if arr.size < 2:
            raise InputError(f"group {lab!r} needs at least 2 observations")

    if args.method == "ml":
        try:
            rep = reliability_ml(x, y, level=args.level)
        except FitFailure as exc:
            raise ConvergenceFailure(str(exc).replace("group x", f"group {a}").replace("group y", f"group {b}")) from None
        params = {}
        for lab, f in zip((a, b), rep.fits):
            params[lab] = f.to_dict()
    else:
        priors = (_prior_from_args(args, "-x"), _prior_from_args(args, "-y"))
        rng = np.random.default_rng(args.seed)
        rep = reliability_bayes(x, y, priors, n_draws=args.draws, rng=rng, level=args.level)
        params = {}
        for lab, mix, prior in zip((a, b), rep.fits, priors):
            est = bayes.bayes_estimates(mix)
            params[lab] = {
                "sigma": est.sigma,
                "pi": est.pi,
                "cri_sigma": list(bayes.credible_interval(mix, "sigma", args.level)),
                "cri_pi": list(bayes.credible_interval(mix, "pi", args.level)),
                "prior": {"tau": prior.tau, "delta": prior.delta, "alpha": prior.alpha, "beta": prior.beta},
            }
    rep.seed = args.seed
    out = rep.to_dict()
    out["strength_group"] = a
    out["stress_group"] = b
    out["scale"] = args.scale
    out["groups"] = params
    _write_json(out, args.out)
    if args.out:
        lo, hi = rep.interval_raw
        dlo, dhi = rep.d_interval
        print(f"R(A,B)  {_fmt(rep.r_hat)}  ({_fmt(lo)}, {_fmt(hi)})")
        print(f"D(A,B)  {_fmt(rep.d_hat)}  ({_fmt(dlo)}, {_fmt(dhi)})")
    return EXIT_OK


_STUDY_KEYS = {"study", "seed", "replicates", "level", "n_posterior_draws", "sizes", "truth", "prior", "priors", "workers", "name", "config_index"}


def load_config(spec: str) -> dict:
    """Load a TOML/JSON study config from a path or a bundled name."""
    path = Path(spec)
    if not path.exists():
        name = spec if spec.endswith((".toml", ".json")) else spec + ".toml"
        bundled = resources.files("loglindley") / "configs" / name
        if not bundled.is_file():
            raise InputError(f"config {spec!r} not found (neither a file nor a bundled config)")
        text, suffix = bundled.read_text(), Path(name).suffix
    else:
        text, suffix = path.read_text(), path.suffix
    try:
        cfg = json.loads(text) if suffix == ".json" else tomllib.loads(text)
    except (ValueError, tomllib.TOMLDecodeError) as exc:
        raise InputError(f"config parse error: {exc}") from None
    return cfg


def _params_from(d, where: str) -> Params:
    try:
        return Params(float(d["sigma"]), float(d["pi"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"config: {where} needs numeric sigma and pi ({exc})") from None


def _prior_from(d, where: str) -> PriorSpec:
    try:
        return PriorSpec(*(float(d[k]) for k in ("tau", "delta", "alpha", "beta")))
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"config: {where} needs tau, delta, alpha, beta ({exc})") from None


def build_sim_config(cfg: dict, workers: int | None = None) -> tuple[str, simulation.SimConfig]:
    unknown = set(cfg) - _STUDY_KEYS
    if unknown:
        raise InputError(f"config: unknown keys {sorted(unknown)}")
    kind = cfg.get("study")
    if kind not in ("ml", "bayes", "reliability"):
        raise InputError(f"config: study must be 'ml', 'bayes' or 'reliability', got {kind!r}")
    truth_d = cfg.get("truth")
    if not isinstance(truth_d, dict):
        raise InputError("config: missing [truth] table")
    if kind == "reliability":
        if "strength" not in truth_d or "stress" not in truth_d:
            raise InputError("config: reliability truth needs [truth.strength] and [truth.stress]")
        truth = TwoSampleParams(_params_from(truth_d["strength"], "truth.strength"), _params_from(truth_d["stress"], "truth.stress"))
    else:
        truth = _params_from(truth_d, "truth")
    priors = None
    if "prior" in cfg:
        priors = _prior_from(cfg["prior"], "prior")
    if "priors" in cfg:
        p = cfg["priors"]
        if not isinstance(p, dict) or "x" not in p or "y" not in p:
            raise InputError("config: [priors] needs x and y tables")
        priors = (_prior_from(p["x"], "priors.x"), _prior_from(p["y"], "priors.y"))
    sizes = cfg.get("sizes")
    if not isinstance(sizes, list) or not sizes:
        raise InputError("config: sizes must be a non-empty list")
    try:
        sc = simulation.SimConfig(
            truth=truth,
            sizes=sizes,
            replicates=int(cfg.get("replicates", 1000)),
            priors=priors,
            n_posterior_draws=int(cfg.get("n_posterior_draws", 10000)),
            seed=int(cfg.get("seed", 20200101)),
            level=float(cfg.get("level", 0.95)),
            config_index=int(cfg.get("config_index", 0)),
            workers=int(workers if workers is not None else cfg.get("workers", 1)),
        )
    except (TypeError, ValueError, IndexError) as exc:
        raise InputError(f"config: {exc}") from None
    return kind, sc


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    kind, sc = build_sim_config(cfg, args.workers)
    if args.replicates is not None:
        sc.replicates = args.replicates
    if args.seed is not None:
        sc.seed = args.seed
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    name = cfg.get("name") or Path(args.config).stem
    t0 = time.perf_counter()
    try:
        rows = simulation.run_study(kind, sc)
    except simulation.SimulationError as exc:
        raise ConvergenceFailure(str(exc)) from None
    wall = time.perf_counter() - t0
    csv_path = out_dir / f"{name}.csv"
    simulation.write_table_csv(csv_path, rows)
    simulation.write_table_csv(out_dir / f"{name}_rounded.csv", rows, digits=4)
    manifest = {
        "name": name,
        "study": kind,
        "config": cfg,
        "seed": sc.seed,
        "replicates": sc.replicates,
        "versions": {
            "loglindley": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": __import__("scipy").__version__,
        },
        "wall_time_s": wall,
        "outputs": [csv_path.name, f"{name}_rounded.csv"],
    }
    (out_dir / f"{name}_manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    with open(out_dir / f"{name}_rounded.csv") as fh:
        sys.stdout.write(fh.read())
    return EXIT_OK


def cmd_trace(args) -> int:
    if args.chains < 2:
        raise InputError("trace diagnostics need at least 2 chains")
    x = read_values(args.input, args.scale, args.value_column, args.group_column, args.group)
    if x.size < 2:
        raise InputError("trace needs at least 2 observations")
    prior = _prior_from_args(args)
    rng = np.random.default_rng(args.seed)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        res = bayes.metropolis_check(x, prior, chains=args.chains, iters=args.iters, rng=rng)
    out = Path(args.out)
    bayes.write_draws_csv(out, res.draws)
    exact = bayes.sample_posterior(bayes.posterior(x, prior), args.chains * args.iters, rng)
    exact_path = out.with_name(out.stem + "_exact" + out.suffix)
    bayes.write_draws_csv(exact_path, exact)
    rh = res.rhat
    print(f"Rhat sigma={rh['sigma']:.4f} pi={rh['pi']:.4f}  ESS sigma={res.ess['sigma']:.0f} pi={res.ess['pi']:.0f}")
    if max(rh.values()) > 1.01:
        print(f"warning: max Rhat {max(rh.values()):.4f} exceeds 1.01", file=sys.stderr)
    return EXIT_OK


def cmd_generate(args) -> int:
    """Write synthetic data drawn from LL(sigma, pi) (one or two groups)."""
    rng = np.random.default_rng(args.seed)
    try:
        p = Params(args.sigma, args.pi)
        q = Params(args.sigma_y, args.pi_y) if args.sigma_y is not None else None
    except ValueError as exc:
        raise InputError(str(exc)) from None
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        if q is None:
            w.writerow(["value"])
            for v in sample(p, args.m, rng):
                w.writerow([repr(float(v))])
        else:
            w.writerow(["group", "value"])
            for v in sample(p, args.m, rng):
                w.writerow(["A", repr(float(v))])
            for v in sample(q, args.n or args.m, rng):
                w.writerow(["B", repr(float(v))])
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="loglindley", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, *, method=True):
        p.add_argument("input")
        p.add_argument("--scale", type=float, default=1.0, help="divide every value by this before validation")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--level", type=float, default=0.95)
        p.add_argument("--out", default=None)
        p.add_argument("--value-column", default="value")
        if method:
            p.add_argument("--method", choices=("ml", "bayes"), default="ml")
            p.add_argument("--draws", type=int, default=10000)

    p = sub.add_parser("fit", help="fit LL(sigma, pi) to one sample")
    common(p)
    p.add_argument("--group-column", default=None, help="read one group out of a two-group file")
    p.add_argument("--group", default=None)
    _add_prior_flags(p)
    p.set_defaults(func=cmd_fit, draws=0)

    p = sub.add_parser("reliability", aliases=["analyze"], help="R = P(Y < X) and D(A, B) for a two-group file")
    common(p)
    p.add_argument("--group-column", default="group")
    p.add_argument("--strength-group", default=None, help="label of the group playing X (A)")
    _add_prior_flags(p, ("-x", "-y"))
    p.set_defaults(func=cmd_reliability)

    p = sub.add_parser("simulate", help="run a Monte Carlo study from a TOML/JSON config")
    p.add_argument("config", help="config path or bundled name (e.g. table1_block1)")
    p.add_argument("--out-dir", default="sim_out")
    p.add_argument("--replicates", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("trace", help="export Metropolis traces and R-hat")
    common(p, method=False)
    p.add_argument("--group-column", default=None)
    p.add_argument("--group", default=None)
    p.add_argument("--chains", type=int, default=4)
    p.add_argument("--iters", type=int, default=2500)
    _add_prior_flags(p)
    p.set_defaults(func=cmd_trace)

    p = sub.add_parser("generate", help="write a synthetic LL sample as CSV")
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--pi", type=float, required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--sigma-y", type=float, default=None)
    p.add_argument("--pi-y", type=float, default=None)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ConvergenceFailure as exc:
        print(f"convergence failure: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
