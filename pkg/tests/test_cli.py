import hashlib
import json
import re
import subprocess
import sys
import time

import numpy as np
import pytest

from loglindley import cli, mle
from loglindley.distribution import Params, sample

PRIOR = ["--prior-tau", "1", "--prior-delta", "1", "--prior-alpha", "1", "--prior-beta", "4"]
PRIOR_XY = [
    "--prior-tau-x", "1", "--prior-delta-x", "1", "--prior-alpha-x", "1", "--prior-beta-x", "4",
    "--prior-tau-y", "2", "--prior-delta-y", "5", "--prior-alpha-y", "1", "--prior-beta-y", "4",
]


def _one_group(path, x, scale=1.0):
    path.write_text("value\n" + "".join(f"{float(v) * scale!r}\n" for v in x))
    return str(path)


def _two_group(path, groups):
    lines = ["group,value"]
    for label, vals in groups.items():
        lines += [f"{label},{float(v)!r}" for v in vals]
    path.write_text("\n".join(lines) + "\n")
    return str(path)


def _sha(path):
    return hashlib.sha256(open(path, "rb").read()).hexdigest()


@pytest.fixture
def data150(tmp_path):
    x = sample(Params(1.0, 0.2), 150, np.random.default_rng(2020))
    return _one_group(tmp_path / "x.csv", x), x


@pytest.fixture
def two_groups(tmp_path):
    rng = np.random.default_rng(73)
    g = {"A": sample(Params(1.0, 0.2), 25, rng), "B": sample(Params(1.2, 0.3), 48, rng)}
    return _two_group(tmp_path / "g.csv", g), g


class TestFit:
    def test_ml(self, data150, tmp_path, capsys):
        path, _ = data150
        out = tmp_path / "r.json"
        assert cli.main(["fit", path, "--out", str(out)]) == 0
        rep = json.loads(out.read_text())
        # within one tabulated CI width at m = 150: (0.8468, 1.1600)
        assert abs(rep["sigma"] - 1.0) <= 1.1600 - 0.8468
        assert rep["method"] == "ml" and len(rep["covariance"]) == 2
        assert "sigma" in capsys.readouterr().out

    def test_scale(self, tmp_path, data150):
        path, x = data150
        scaled = _one_group(tmp_path / "s.csv", x, scale=100.0)
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        assert cli.main(["fit", path, "--out", str(a)]) == 0
        assert cli.main(["fit", scaled, "--scale", "100", "--out", str(b)]) == 0
        ja, jb = json.loads(a.read_text()), json.loads(b.read_text())
        # v * 100 / 100 is not exact, so agreement is at the optimizer's 1e-8 resolution
        assert ja["sigma"] == pytest.approx(jb["sigma"], rel=1e-7)
        # without the divisor the values are outside (0, 1)
        assert cli.main(["fit", scaled]) == 2

    def test_empty_file(self, tmp_path, capsys):
        p = tmp_path / "e.csv"
        p.write_text("")
        assert cli.main(["fit", str(p)]) == 2
        assert "empty" in capsys.readouterr().err

    @pytest.mark.parametrize(
        "body, msg",
        [
            ("value\n0.2\n0.5\n1.5\n", "line 4"),
            ("value\n0.2\nabc\n", "line 3"),
            ("value\n0.2\n-0.1\n", "line 3"),
            ("x\n0.2\n", "line 1"),
            ("value\n", "no data"),
        ],
    )
    def test_bad_input(self, tmp_path, capsys, body, msg):
        p = tmp_path / "bad.csv"
        p.write_text(body)
        assert cli.main(["fit", str(p)]) == 2
        assert msg in capsys.readouterr().err

    def test_missing_file(self, tmp_path):
        assert cli.main(["fit", str(tmp_path / "nope.csv")]) == 2

    def test_convergence_failure(self, data150, monkeypatch):
        real = mle.fit

        def stalled(s, level=0.95):
            r = real(s, level=level)
            r.converged = False
            return r

        monkeypatch.setattr(mle, "fit", stalled)
        assert cli.main(["fit", data150[0]]) == 3

    def test_bayes_needs_prior(self, data150, capsys):
        assert cli.main(["fit", data150[0], "--method", "bayes"]) == 2
        assert "--prior-tau" in capsys.readouterr().err

    def test_bayes(self, data150, tmp_path):
        out = tmp_path / "b.json"
        assert cli.main(["fit", data150[0], "--method", "bayes", *PRIOR, "--out", str(out)]) == 0
        rep = json.loads(out.read_text())
        assert rep["method"] == "bayes"
        assert rep["cri_sigma"][0] < rep["sigma"] < rep["cri_sigma"][1]
        assert abs(sum(rep["mixture"]["weights"]) - 1) < 1e-12

    def test_group_selection(self, two_groups, tmp_path):
        path, g = two_groups
        out = tmp_path / "a.json"
        assert cli.main(["fit", path, "--group-column", "group", "--group", "A", "--out", str(out)]) == 0
        assert json.loads(out.read_text())["m"] == 25
        assert cli.main(["fit", path, "--group-column", "group", "--group", "Z"]) == 2


class TestReliability:
    def test_ml_report(self, two_groups, tmp_path):
        path, g = two_groups
        out = tmp_path / "r.json"
        assert cli.main(["reliability", path, "--strength-group", "A", "--out", str(out)]) == 0
        rep = json.loads(out.read_text())
        assert rep["strength_group"] == "A" and rep["m"] == 25 and rep["n"] == 48
        # round trip: D recomputed from R reproduces the stored value exactly
        assert rep["d_hat"] == 1.0 - 2.0 * rep["r_hat"]
        lo, hi = rep["interval_raw"]
        assert rep["d_interval"] == [1.0 - 2.0 * hi, 1.0 - 2.0 * lo]
        assert {"A", "B"} == set(rep["groups"])

    def test_strength_group_swaps(self, two_groups, tmp_path):
        path, _ = two_groups
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        cli.main(["reliability", path, "--strength-group", "A", "--out", str(a)])
        cli.main(["reliability", path, "--strength-group", "B", "--out", str(b)])
        ra, rb = json.loads(a.read_text()), json.loads(b.read_text())
        assert ra["r_hat"] + rb["r_hat"] == pytest.approx(1.0, abs=1e-12)
        assert ra["d_hat"] == pytest.approx(-rb["d_hat"], abs=1e-12)

    def test_bayes_deterministic(self, two_groups, tmp_path):
        path, _ = two_groups
        outs = [tmp_path / "1.json", tmp_path / "2.json"]
        for o in outs:
            assert cli.main(["analyze", path, "--method", "bayes", *PRIOR_XY, "--seed", "4", "--out", str(o)]) == 0
        assert _sha(outs[0]) == _sha(outs[1])
        rep = json.loads(outs[0].read_text())
        assert rep["method"] == "Bayes"
        assert rep["d_hat"] == 1.0 - 2.0 * rep["r_hat"]

    def test_identical_groups(self, tmp_path):
        x = sample(Params(1.0, 0.2), 40, np.random.default_rng(1))
        path = _two_group(tmp_path / "same.csv", {"A": x, "B": x})
        out = tmp_path / "ml.json"
        assert cli.main(["reliability", path, "--out", str(out)]) == 0
        assert abs(json.loads(out.read_text())["d_hat"]) <= 1e-12
        out = tmp_path / "b.json"
        same_prior = PRIOR_XY[:8] + ["--prior-tau-y", "1", "--prior-delta-y", "1", "--prior-alpha-y", "1", "--prior-beta-y", "4"]
        assert cli.main(["reliability", path, "--method", "bayes", *same_prior, "--draws", "20000", "--out", str(out)]) == 0
        # sd of D over 20000 draws is below 0.3, so 4 MC-sd is under 0.01
        assert abs(json.loads(out.read_text())["d_hat"]) <= 0.01

    def test_group_count(self, tmp_path):
        path = _two_group(tmp_path / "three.csv", {"A": [0.1, 0.2], "B": [0.3, 0.4], "C": [0.5, 0.6]})
        assert cli.main(["reliability", path]) == 2
        path = _two_group(tmp_path / "one.csv", {"A": [0.1, 0.2]})
        assert cli.main(["reliability", path]) == 2

    def test_missing_priors(self, two_groups):
        assert cli.main(["reliability", two_groups[0], "--method", "bayes", *PRIOR_XY[:8]]) == 2


class TestSimulate:
    def test_smoke_bundled(self, tmp_path):
        t0 = time.perf_counter()
        assert cli.main(["simulate", "smoke", "--out-dir", str(tmp_path / "a")]) == 0
        assert time.perf_counter() - t0 < 30
        assert cli.main(["simulate", "smoke", "--out-dir", str(tmp_path / "b")]) == 0
        assert _sha(tmp_path / "a" / "smoke.csv") == _sha(tmp_path / "b" / "smoke.csv")
        man = json.loads((tmp_path / "a" / "smoke_manifest.json").read_text())
        assert {"config", "seed", "versions", "wall_time_s"} <= set(man)
        rounded = (tmp_path / "a" / "smoke_rounded.csv").read_text().splitlines()
        assert re.fullmatch(r"25,-?\d+\.\d{4},.*", rounded[1])

    def test_bundled_configs_parse(self):
        from importlib import resources

        names = [p.name for p in (resources.files("loglindley") / "configs").iterdir() if p.name.endswith(".toml")]
        assert "table1_block1.toml" in names
        for n in names:
            kind, cfg = cli.build_sim_config(cli.load_config(n))
            assert cfg.replicates >= 1

    def test_json_config(self, tmp_path):
        cfg = {"study": "reliability", "seed": 3, "replicates": 3, "n_posterior_draws": 1000,
               "sizes": [[5, 5]], "truth": {"strength": {"sigma": 1, "pi": 0.2}, "stress": {"sigma": 2.5, "pi": 0.2}}}
        p = tmp_path / "c.json"
        p.write_text(json.dumps(cfg))
        assert cli.main(["simulate", str(p), "--out-dir", str(tmp_path / "o")]) == 0
        assert (tmp_path / "o" / "c.csv").exists()

    @pytest.mark.parametrize(
        "text",
        [
            'study = "ml"\nsizes = [5]\n',
            'study = "mcmc"\nsizes = [5]\n[truth]\nsigma = 1\npi = 0.2\n',
            'study = "ml"\nsizes = []\n[truth]\nsigma = 1\npi = 0.2\n',
            'study = "ml"\nsizes = [1]\n[truth]\nsigma = 1\npi = 0.2\n',
            'study = "ml"\nsizes = [5]\nbogus = 1\n[truth]\nsigma = 1\npi = 0.2\n',
            'study = "ml"\nsizes = [5]\n[truth]\nsigma = -1\npi = 0.2\n',
            'study = "ml" sizes',
        ],
    )
    def test_schema_errors(self, tmp_path, text):
        p = tmp_path / "bad.toml"
        p.write_text(text)
        assert cli.main(["simulate", str(p), "--out-dir", str(tmp_path)]) == 2

    def test_unknown_config(self, tmp_path):
        assert cli.main(["simulate", "no_such_config", "--out-dir", str(tmp_path)]) == 2


class TestTrace:
    def test_rhat_and_files(self, tmp_path, capsys):
        x = sample(Params(1.0, 0.2), 73, np.random.default_rng(73))
        path = _one_group(tmp_path / "x.csv", x)
        out = tmp_path / "trace.csv"
        assert cli.main(["trace", path, *PRIOR, "--chains", "4", "--iters", "2500", "--seed", "1", "--out", str(out)]) == 0
        line = capsys.readouterr().out
        rh = [float(v) for v in re.findall(r"(?:sigma|pi)=([\d.]+)", line)[:2]]
        assert max(rh) <= 1.01
        assert len(out.read_text().splitlines()) == 4 * 2500 + 1
        assert (tmp_path / "trace_exact.csv").exists()
        h = _sha(out)
        assert cli.main(["trace", path, *PRIOR, "--seed", "1", "--out", str(out)]) == 0
        assert _sha(out) == h

    def test_single_chain(self, data150, tmp_path):
        assert cli.main(["trace", data150[0], *PRIOR, "--chains", "1", "--out", str(tmp_path / "t.csv")]) == 2

    def test_warns_on_poor_mixing(self, data150, tmp_path, capsys):
        assert cli.main(["trace", data150[0], *PRIOR, "--iters", "20", "--out", str(tmp_path / "t.csv")]) == 0
        assert "exceeds 1.01" in capsys.readouterr().err


class TestGenerateAndEntryPoint:
    def test_generate(self, tmp_path):
        out = tmp_path / "g.csv"
        assert cli.main(["generate", "--sigma", "2.5", "--pi", "0.2", "--m", "10", "--sigma-y", "1", "--pi-y", "0.5", "--n", "7", "--out", str(out)]) == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "group,value" and len(lines) == 18
        assert cli.main(["generate", "--sigma", "-1", "--pi", "0.2", "--m", "10", "--out", str(out)]) == 2

    def test_module_entry(self, tmp_path):
        r = subprocess.run([sys.executable, "-m", "loglindley.cli", "--version"], capture_output=True, text=True)
        assert r.returncode == 0 and r.stdout.strip()
