"""Acceptance criteria 1-13, one test each, with their stated tolerances and time budgets."""

import json
import math
import os
import random
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest
from scipy import stats

from medipool.config import MethodConfig
from medipool.data import GroupSummary, StudySummary, read_dataset
from medipool.describe import describe_studies, render_text
from medipool.kernel import RngStream
from medipool.mean_methods import (batch_mean_sd, bootstrap_se, estimate_mean, estimate_sd,
                                   replicate_summaries, study_effect_mean)
from medipool.median_methods import (cd_pool, cd_within_study, pool_order_stat, qe_median_se,
                                     study_effect_median)
from medipool.pooling import (EffectEstimate, PoolModel, pool_iv, q_statistic,
                              tau2_ci_qprofile, tau2_reml)

from conftest import DATA
from test_pooling import reml_loglik_oracle, synthetic


class Budget:
    def __init__(self, seconds):
        self.seconds = seconds

    def __enter__(self):
        self.t0 = time.perf_counter()

    def __exit__(self, *exc):
        elapsed = time.perf_counter() - self.t0
        assert elapsed < self.seconds, f"took {elapsed:.1f}s (budget {self.seconds}s)"


def test_criterion_01_fixture_parity():
    with Budget(1):
        d = read_dataset(DATA / "age_excerpt.csv")
        g = describe_studies(d).groups[0]
    assert (g.n_studies, g.n_median, g.n_s2, g.n_mean_sd_n) == (5, 2, 2, 3)
    assert sorted(g.bowley_values) == pytest.approx([-0.2941, 0.3846], abs=1e-4)
    assert g.bowley["max"] == pytest.approx(0.3846, abs=1e-4)


def test_criterion_02_naive_two_group_effect():
    with Budget(1):
        d = read_dataset(DATA / "age_excerpt.csv")
        e = study_effect_mean(d.studies[0], MethodConfig(mean_method="wan", se_method="naive"))
    assert e.y == pytest.approx(11.40, abs=1e-5)
    assert e.se == pytest.approx(1.87573, abs=1e-5)


def test_criterion_03_closed_form_fixtures():
    g = GroupSummary(q1=65, med=76, q3=82, n=31)
    with Budget(1):
        wan_m, wan_s, luo_m = estimate_mean(g, "wan"), estimate_sd(g, "wan"), estimate_mean(g, "luo")
    assert wan_m == pytest.approx(74.3333, abs=1e-3)
    assert wan_s == pytest.approx(13.212, abs=1e-3)
    assert luo_m == pytest.approx(74.2185, abs=1e-4)


CONSISTENCY = [("wan", "normal"), ("luo", "normal"), ("shi_normal", "normal"),
               ("shi_lognormal", "lognormal"), ("qe", "normal"), ("qe", "lognormal"),
               ("bc", "normal"), ("bc", "lognormal"), ("mln", "normal"), ("mln", "lognormal")]
SD_FOR = {"luo": "wan"}


def test_criterion_04_estimator_consistency():
    n = 10_000
    dists = {"normal": stats.norm(50, 10), "lognormal": stats.lognorm(1.0)}
    failures = []
    with Budget(30):
        for method, fam in CONSISTENCY:
            dist = dists[fam]
            q = dist.ppf([0.25, 0.5, 0.75])
            g = GroupSummary(q1=q[0], med=q[1], q3=q[2], n=n)
            m = estimate_mean(g, method)
            s = estimate_sd(g, SD_FOR.get(method, method))
            if abs(m / dist.mean() - 1) > 0.01 or abs(s / dist.std() - 1) > 0.02:
                failures.append((method, fam, m, dist.mean(), s, dist.std()))
    assert not failures


def test_criterion_05_bootstrap_calibration():
    n, reps, nboot = 100, 1000, 200
    with Budget(300):
        x = np.random.default_rng(20240601).normal(50, 10, size=(reps, n))
        Q = replicate_summaries(x, "S2")
        means = batch_mean_sd("mln", Q, "S2", n)[0]
        ses = [bootstrap_se(GroupSummary(q1=a, med=b, q3=c, n=n), "mln", nboot, RngStream(5, i))
               for i, (a, b, c) in enumerate(Q)]
    ratio = np.mean(ses) / np.std(means, ddof=1)
    print(f"bootstrap SE / empirical SD = {ratio:.4f}")
    assert 0.8 <= ratio <= 1.25


def test_criterion_06_reml_oracle():
    grid = np.round(np.arange(0, 20.0005, 0.001), 3)
    with Budget(60):
        for seed in range(50):
            e = synthetic(seed)
            ll = reml_loglik_oracle([x.y for x in e], [x.se ** 2 for x in e], grid)
            assert abs(tau2_reml(e)[0] - grid[np.argmax(ll)]) <= 0.001, seed


def test_criterion_07_qprofile_contract():
    with Budget(10):
        rng = random.Random(7)
        for _ in range(100):
            k = rng.randint(2, 30)
            e = [EffectEstimate(str(i), rng.gauss(0, rng.uniform(0.1, 5)), rng.uniform(0.2, 3))
                 for i in range(k)]
            lb, ub, flagged = tau2_ci_qprofile(e, 0.95)
            y, v = [x.y for x in e], [x.se ** 2 for x in e]
            if lb > 0:
                assert abs(q_statistic(y, v, lb) - stats.chi2.ppf(0.975, k - 1)) <= 1e-4
            if ub > 0:
                assert abs(q_statistic(y, v, ub) - stats.chi2.ppf(0.025, k - 1)) <= 1e-4
        same = [EffectEstimate(str(i), 2.0, 1.0 + i) for i in range(6)]
        assert tau2_ci_qprofile(same) == (0.0, 0.0, True)


def test_criterion_08_order_statistic_coverage():
    with Budget(60):
        K, reps = 15, 10_000
        rng = np.random.default_rng(99)
        y = rng.normal(3.0, 2.0, size=(reps, K))
        ref = pool_order_stat([EffectEstimate(str(i), 0.0) for i in range(K)])
        hits = 0
        for row in y:
            res = pool_order_stat([EffectEstimate(str(i), float(v)) for i, v in enumerate(row)])
            hits += res.ci_lb <= 3.0 <= res.ci_ub
        coverage = hits / reps
        five = pool_order_stat([EffectEstimate(str(i), float(v)) for i, v in enumerate([4, 1, 5, 2, 3])])
    print(f"K=15 coverage {coverage:.4f} vs achieved {ref.achieved_coverage:.4f}")
    assert coverage >= ref.achieved_coverage - 0.02
    assert (five.ci_lb, five.ci_ub) == (1, 5) and five.achieved_coverage == 0.9375


def test_criterion_09_qe_median_se():
    with Budget(5):
        q = stats.norm.ppf([0.25, 0.5, 0.75])
        se = qe_median_se(GroupSummary(q1=q[0], med=q[1], q3=q[2], n=100))
    assert se == pytest.approx(0.12533, rel=0.05)


def test_criterion_10_cd_fixtures():
    with Budget(1):
        _, se3 = cd_within_study(GroupSummary(med=10, med_var=4))
        _, se2 = cd_within_study(GroupSummary(med_ci_lb=10, med_ci_ub=20, alpha_1=0.025,
                                              alpha_2=0.025))
        jack = cd_pool([EffectEstimate(str(i), 4.0, 1.5) for i in range(6)])
    assert se3 == 2
    assert se2 == pytest.approx(2.5511, abs=1e-3)
    assert jack.se == 0


def _cli(args, threads):
    env = {"MEDIPOOL_THREADS": str(threads), "PATH": os.environ.get("PATH", "/usr/bin:/bin")}
    r = subprocess.run([sys.executable, "-m", "medipool", *map(str, args)], capture_output=True,
                       env=env)
    assert r.returncode == 0, r.stderr
    return r.stdout


def test_criterion_11_determinism(tmp_path):
    f = DATA / "age_excerpt.csv"
    commands = [
        ["describe", f, "--format", "json"],
        ["metamean", f, "--mean-method", "mln", "--nboot", "300", "--seed", "9"],
        ["metamean", f, "--mean-method", "qe", "--nboot", "300", "--seed", "9", "--format", "json"],
        ["metamedian", f, "--median-method", "qe", "--format", "json"],
    ]
    with Budget(60):
        for cmd in commands:
            assert _cli(cmd, 1) == _cli(cmd, 4) == _cli(cmd, 1)
        svgs = []
        for threads in (1, 4):
            out = tmp_path / f"forest{threads}.svg"
            _cli(["forest", f, "--out", out, "--mean-method", "bc", "--nboot", "200", "--seed",
                  "9"], threads)
            svgs.append(out.read_bytes())
        assert svgs[0] == svgs[1]


def _random_group(rng, n=None):
    med = rng.uniform(-50, 50)
    a, b = rng.uniform(0.5, 20), rng.uniform(0.5, 20)
    return GroupSummary(q1=med - a, med=med, q3=med + b, n=n or rng.randint(5, 400))


def test_criterion_12_equivariance_battery():
    rng = random.Random(12)
    closed = ["wan", "luo", "shi_normal", "yang"]
    cases = 0
    with Budget(60):
        # Location shift and positive scale of mean estimates (location-scale methods).
        for _ in range(300):
            g, c, s, m = _random_group(rng), rng.uniform(-100, 100), rng.uniform(0.1, 10), \
                rng.choice(closed)
            base = estimate_mean(g, m)
            assert estimate_mean(g.shifted(c), m) == pytest.approx(base + c, abs=1e-6)
            assert estimate_mean(g.scaled(s), m) == pytest.approx(base * s, abs=1e-6, rel=1e-9)
            cases += 2
        # Group-swap antisymmetry of study effects.
        for _ in range(250):
            s = StudySummary("x", _random_group(rng), _random_group(rng))
            m = rng.choice(closed)
            cfg = MethodConfig(mean_method=m, se_method="plugin" if m == "yang" else "naive")
            a, b = study_effect_mean(s, cfg), study_effect_mean(s.swapped(), cfg)
            assert b.y == pytest.approx(-a.y, abs=1e-6) and b.se == pytest.approx(a.se, abs=1e-6)
            mcfg = MethodConfig(median_method=rng.choice(["mm", "qe"]))
            a, b = study_effect_median(s, mcfg), study_effect_median(s.swapped(), mcfg)
            assert b.y == pytest.approx(-a.y, abs=1e-6)
            if a.se is not None:
                assert b.se == pytest.approx(a.se, abs=1e-6)
            cases += 2
        # Permutation invariance of pooled results.
        for _ in range(250):
            k = rng.randint(2, 12)
            eff = [EffectEstimate(str(i), rng.gauss(0, 4), rng.uniform(0.3, 3), rng.randint(5, 50))
                   for i in range(k)]
            perm = eff[:]
            rng.shuffle(perm)
            for pool in (lambda e: pool_iv(e), lambda e: pool_iv(e, PoolModel("common")),
                         lambda e: pool_order_stat(e, weighted=True),
                         lambda e: cd_pool(e)):
                a, b = pool(eff), pool(perm)
                for f in ("estimate", "se", "ci_lb", "ci_ub", "tau2", "q", "i2"):
                    x, y = getattr(a, f), getattr(b, f)
                    assert (x is None and y is None) or y == pytest.approx(x, abs=1e-6)
                cases += 1
    assert cases >= 1000


DAT_AGE_ENV = "MEDIPOOL_DAT_AGE"


@pytest.mark.skipif(not os.environ.get(DAT_AGE_ENV),
                    reason=f"full dataset unavailable offline; set {DAT_AGE_ENV} to a CSV copy")
def test_criterion_13_full_data_reproduction():
    d = read_dataset(os.environ[DAT_AGE_ENV])
    from medipool.analysis import run_metamean, run_metamedian
    with Budget(600):
        qe = run_metamedian(d, MethodConfig(median_method="qe")).result
        mln = run_metamean(d, MethodConfig(mean_method="mln", se_method="bootstrap",
                                           nboot=100)).result
        mm = run_metamedian(d, MethodConfig(median_method="mm")).result
        text = render_text(describe_studies(d), ("Nonsurvivors", "Survivors"))
    rel = lambda a, b: abs(a / b - 1) <= 0.02  # noqa: E731
    assert rel(qe.estimate, 13.2238) and rel(qe.ci_lb, 11.4361) and rel(qe.ci_ub, 15.0115)
    assert rel(qe.tau2, 33.5585) and rel(qe.q, 373.6841) and rel(qe.i2, 86.95)
    assert rel(mln.estimate, 12.8410)
    assert mm.estimate == 13.00
    for line in ("-0.4000   -0.6000", "-0.0818   -0.1304", "0.0000   -0.0526",
                 "-0.0087   -0.0250", "0.0909    0.1458", "0.3846    0.4167"):
        assert line in text
