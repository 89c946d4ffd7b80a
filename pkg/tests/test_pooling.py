import math
import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from medipool.pooling import (EffectEstimate, PoolingError, PoolModel, heterogeneity_stats,
                              pool_iv, q_statistic, tau2_ci_qprofile, tau2_dl, tau2_reml)

E = EffectEstimate
COMMON = PoolModel("common")


def eff(ys, ses):
    return [E(str(i), float(y), float(s)) for i, (y, s) in enumerate(zip(ys, ses))]


def reml_loglik_oracle(y, v, t):
    """Restricted log-likelihood, written independently with numpy."""
    y, v = np.asarray(y), np.asarray(v)
    w = 1.0 / (v[None, :] + t[:, None])
    mu = (w * y).sum(1) / w.sum(1)
    return -0.5 * (np.log(v[None, :] + t[:, None]).sum(1) + np.log(w.sum(1))
                   + (w * (y[None, :] - mu[:, None]) ** 2).sum(1))


def synthetic(seed, k=10, tau2=4.0):
    rng = np.random.default_rng(seed)
    return eff(rng.normal(0, math.sqrt(1 + tau2), k), [1.0] * k)


def test_pool_iv_examples():
    r = pool_iv(eff([10, 20], [1, 1]), COMMON)
    assert r.estimate == 15 and r.se == pytest.approx(1 / math.sqrt(2))
    r = pool_iv(eff([0, 6], [1, 2]), COMMON)
    assert r.estimate == pytest.approx(1.2) and r.se == pytest.approx(0.89443, abs=1e-5)
    assert r.tau2 is None and r.tau2_ci is None
    r = pool_iv(eff([5, 5, 5], [1, 1, 1]))
    assert r.tau2 == 0 and r.estimate == 5 and r.se == pytest.approx(1 / math.sqrt(3))
    assert sum(r.weights) == pytest.approx(1 / r.se ** 2)
    assert r.ci_lb <= r.estimate <= r.ci_ub
    z = stats.norm.ppf(0.975)
    assert r.ci_ub == pytest.approx(5 + z / math.sqrt(3))


def test_pool_iv_errors():
    with pytest.raises(PoolingError):
        pool_iv(eff([1], [1]))
    with pytest.raises(PoolingError):
        pool_iv([E("a", 1.0, None), E("b", 2.0, 1.0)])
    with pytest.raises(PoolingError):
        pool_iv(eff([1, 2], [0, 1]))


def test_pvalue_two_sided():
    r = pool_iv(eff([1, 3], [1, 1]), COMMON)
    assert r.pval == pytest.approx(2 * stats.norm.sf(r.zval), rel=1e-12)


def test_dl_and_heterogeneity_examples():
    e = eff([0, 4], [1, 1])
    assert tau2_dl(e) == pytest.approx(7)
    q, df, p, i2, h2 = heterogeneity_stats(e, 0.0)
    assert (q, df) == (8, 1)
    assert p == pytest.approx(stats.chi2.sf(8, 1))
    assert tau2_dl(eff([2, 2, 2], [1, 2, 3])) == 0
    q, df, p, i2, h2 = heterogeneity_stats(eff([2, 2, 2], [1, 2, 3]), 0.0)
    assert (q, i2, h2) == (0, 0, 1)


@pytest.mark.parametrize("seed", range(50))
def test_reml_matches_grid_oracle(seed):
    e = synthetic(seed)
    grid = np.round(np.arange(0, 20.0005, 0.001), 3)
    ll = reml_loglik_oracle([x.y for x in e], [x.se ** 2 for x in e], grid)
    t_grid = grid[np.argmax(ll)]
    t, se, ok = tau2_reml(e)
    assert ok
    assert abs(t - t_grid) <= 0.001


def test_reml_identical_effects_and_shift():
    assert tau2_reml(eff([3, 3, 3], [1, 2, 1]))[0] == 0
    e = synthetic(3)
    t = tau2_reml(e)[0]
    shifted = [E(x.study_id, x.y + 17.5, x.se) for x in e]
    assert tau2_reml(shifted)[0] == pytest.approx(t, rel=1e-9, abs=1e-12)


def test_reml_se_is_fisher_information():
    e = synthetic(1)
    t, se, _ = tau2_reml(e)
    v = np.array([x.se ** 2 for x in e])
    w = 1 / (v + t)
    X = np.ones((len(v), 1))
    W = np.diag(w)
    P = W - W @ X @ np.linalg.inv(X.T @ W @ X) @ X.T @ W
    assert se == pytest.approx(math.sqrt(2 / np.trace(P @ P)), rel=1e-10)


@pytest.mark.parametrize("seed", range(20))
def test_qprofile_contract(seed):
    rng = random.Random(seed)
    k = rng.randint(3, 25)
    e = eff([rng.gauss(0, 2) for _ in range(k)], [rng.uniform(0.3, 2) for _ in range(k)])
    lb, ub, flagged = tau2_ci_qprofile(e, 0.95)
    y, v = [x.y for x in e], [x.se ** 2 for x in e]
    hi, lo = stats.chi2.ppf(0.975, k - 1), stats.chi2.ppf(0.025, k - 1)
    if lb > 0:
        assert abs(q_statistic(y, v, lb) - hi) <= 1e-4
    else:
        assert q_statistic(y, v, 0) <= hi
    if ub > 0:
        assert abs(q_statistic(y, v, ub) - lo) <= 1e-4
    assert flagged == (ub == 0)
    assert lb <= ub


def test_qprofile_identical_flagged():
    lb, ub, flagged = tau2_ci_qprofile(eff([1, 1, 1, 1], [1, 1, 2, 2]))
    assert (lb, ub, flagged) == (0, 0, True)


def test_i2_ci_transforms_tau2_ci():
    e = synthetic(7)
    r = pool_iv(e)
    s2 = 1.0    # all sigma_k = 1
    assert r.i2_ci == pytest.approx((100 * r.tau2_ci[0] / (r.tau2_ci[0] + s2),
                                     100 * r.tau2_ci[1] / (r.tau2_ci[1] + s2)))
    assert r.i2 == pytest.approx(100 * r.tau2 / (r.tau2 + s2))
    assert r.h2 == pytest.approx((r.tau2 + s2) / s2)


def test_random_se_at_least_common():
    for seed in range(10):
        e = synthetic(seed)
        assert pool_iv(e).se >= pool_iv(e, COMMON).se - 1e-15


_fields = ("estimate", "se", "ci_lb", "ci_ub", "tau2", "tau2_se", "i2", "h2", "q", "q_pval")


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.floats(-50, 50), st.floats(0.1, 10)), min_size=2, max_size=15),
       st.randoms(), st.floats(-100, 100), st.floats(0.1, 10), st.sampled_from(["DL", "REML"]))
def test_invariances(data, rnd, c, scale, method):
    e = eff(*zip(*data))
    m = PoolModel("random", method)
    base = pool_iv(e, m)
    perm = list(e)
    rnd.shuffle(perm)
    r = pool_iv(perm, m)
    for f in _fields:
        assert getattr(r, f) == pytest.approx(getattr(base, f), rel=1e-9, abs=1e-9)
    shifted = pool_iv([E(x.study_id, x.y + c, x.se) for x in e], m)
    assert shifted.estimate == pytest.approx(base.estimate + c, abs=1e-6)
    for f in ("se", "tau2", "q", "i2", "h2"):
        assert getattr(shifted, f) == pytest.approx(getattr(base, f), rel=1e-6, abs=1e-6)
    scaled = pool_iv([E(x.study_id, x.y * scale, x.se * scale) for x in e], m)
    assert scaled.estimate == pytest.approx(base.estimate * scale, rel=1e-6, abs=1e-6)
    assert scaled.se == pytest.approx(base.se * scale, rel=1e-6)
    assert scaled.tau2 == pytest.approx(base.tau2 * scale ** 2, rel=1e-5, abs=1e-6)
    assert 0 <= base.i2 < 100 and base.h2 >= 1


def test_common_equal_se_is_mean():
    ys = [1.5, 2.25, -3.0, 8.0]
    assert pool_iv(eff(ys, [2] * 4), COMMON).estimate == pytest.approx(sum(ys) / 4)


def test_pool_model_validation():
    for args in (("fixed",), ("random", "PM"), ("random", "REML", 1.0)):
        with pytest.raises(ValueError):
            PoolModel(*args)
