"""Median-based meta-analysis: order-statistic pooling, QE_median and the CD method."""

from __future__ import annotations

import math
from typing import Sequence

from .data import (C1_C2, C3, MEAN_SD, MEDIAN_ONLY, UNUSABLE, GroupSummary, StudySummary,
                   classify_group)
from .kernel import binom_cdf, binom_logcdf, norm_quantile_log, t_quantile, t_two_sided_p
from .mean_methods import EstimationError, qe_fit, quantile_scenario
from .pooling import EffectEstimate, PooledResult, PoolingError, PoolModel, pool_iv, tau2_dl, \
    tau2_reml

fsum = math.fsum

C4, C5 = "C4", "C5"
CD_SCENARIOS = (C1_C2, C3, C4, C5)


def group_median(g: GroupSummary) -> float:
    """Reported median, or the mean under the symmetry assumption."""
    if g.med is not None:
        return g.med
    if g.mean is not None:
        return g.mean
    raise EstimationError("group reports neither a median nor a mean")


# -- QE_median ----------------------------------------------------------------

def qe_median_se(g: GroupSummary) -> float:
    sc = classify_group(g)
    if sc == MEAN_SD:
        # Normal model: the median's asymptotic SE is sqrt(pi/2) times that of the mean.
        return math.sqrt(math.pi / 2.0) * g.sd / math.sqrt(g.n)
    if quantile_scenario(g) is None:
        raise EstimationError(f"QE_median needs S1/S2/S3 or mean/sd/n inputs, got {sc}")
    f = qe_fit(g).pdf(g.med)
    if not f > 0 or not math.isfinite(f):
        raise EstimationError("fitted density is zero at the reported median")
    return 1.0 / (2.0 * f * math.sqrt(g.n))


# -- CD within-study ----------------------------------------------------------

def cd_scenario(g: GroupSummary):
    """CD summary set a group supports, or None."""
    if g.has("med", "med_var"):
        return C3
    if g.has("med_ci_lb", "med_ci_ub", "alpha_1", "alpha_2"):
        return C1_C2
    if g.has("q1", "med", "q3", "n"):
        return C5
    if g.has("mean", "sd", "n"):
        return C4
    return None


def _interval_se(lower, upper, log_a1, log_a2) -> float:
    if upper < lower:
        raise EstimationError("interval upper bound lies below its lower bound")
    if math.exp(log_a1) + math.exp(log_a2) >= 1.0:
        raise EstimationError("alpha_1 + alpha_2 must be below 1")
    # z_{1-a} = -z_a, computed from log a so tiny tail masses stay finite.
    denom = -norm_quantile_log(log_a1) - norm_quantile_log(log_a2)
    return (upper - lower) / denom


def quartile_ranks(n: int) -> tuple[int, int]:
    return math.ceil(n / 4.0), math.ceil(3.0 * n / 4.0)


def cd_within_study(g: GroupSummary) -> tuple[float, float]:
    """Point and standard error of the median from a CD summary set."""
    sc = cd_scenario(g)
    if sc == C3:
        if not g.med_var > 0:
            raise EstimationError("median variance must be positive")
        return g.med, math.sqrt(g.med_var)
    if sc == C1_C2:
        point = g.med if g.med is not None else (g.med_ci_lb + g.med_ci_ub) / 2.0
        se = _interval_se(g.med_ci_lb, g.med_ci_ub, math.log(g.alpha_1), math.log(g.alpha_2))
        return point, se
    if sc == C5:
        n = int(g.n)
        r, s = quartile_ranks(n)
        log_a1 = binom_logcdf(r - 1, n, 0.5) if r >= 1 else -math.inf
        # P(Bin >= s) equals P(Bin <= n - s) at p = 1/2.
        log_a2 = binom_logcdf(n - s, n, 0.5) if n - s >= 0 else -math.inf
        if not (math.isfinite(log_a1) and math.isfinite(log_a2)):
            raise EstimationError("quartile ranks give no usable interval for the median")
        return g.med, _interval_se(g.q1, g.q3, log_a1, log_a2)
    if sc == C4:
        return g.mean, g.sd / math.sqrt(g.n)
    raise EstimationError("no CD summary set (C1-C5) is reported")


# -- per-study effects --------------------------------------------------------

def _group_effect(g: GroupSummary, method: str):
    if method == "cd":
        y, se = cd_within_study(g)
        return y, se, cd_scenario(g)
    sc = classify_group(g)
    if method == "qe":
        if sc == MEAN_SD:
            return g.mean, qe_median_se(g), sc
        if quantile_scenario(g) is None:
            raise EstimationError(f"QE_median cannot use a {sc} group")
        return g.med, qe_median_se(g), sc
    return group_median(g), None, sc


def study_effect_median(s: StudySummary, cfg) -> EffectEstimate:
    """Median (one group) or difference of medians, group 1 minus group 2."""
    method = cfg.median_method
    if method == "cd" and s.two_group:
        raise EstimationError("the CD method applies to one-group studies only")
    parts = [_group_effect(g, method) for g in s.groups()]
    if len(parts) == 1:
        y, se, sc = parts[0]
        n_total = s.group1.n
    else:
        y = parts[0][0] - parts[1][0]
        se = None if parts[0][1] is None else math.sqrt(parts[0][1] ** 2 + parts[1][1] ** 2)
        sc = f"{parts[0][2]}/{parts[1][2]}"
        n_total = (s.group1.n + s.group2.n) if s.group1.n and s.group2.n else None
    return EffectEstimate(s.study_id, y, se, n_total, sc, method)


# -- order-statistic pooling ---------------------------------------------------

def order_stat_rank(k: int, level: float):
    """Largest rank r with P(Bin(k, 1/2) <= r - 1) <= (1 - level)/2, or None."""
    half_alpha = (1.0 - level) / 2.0
    best = None
    for r in range(1, (k + 1) // 2 + 1):
        if binom_cdf(r - 1, k, 0.5) <= half_alpha:
            best = r
        else:
            break
    return best


def _weighted_quantile(ys, ws, p: float) -> float:
    cum = 0.0
    for y, w in zip(ys, ws):
        cum += w
        if cum >= p - 1e-9:
            return y
    return ys[-1]


def pool_order_stat(effects: Sequence[EffectEstimate], weighted: bool = False,
                    level: float = 0.95) -> PooledResult:
    """Median of study effects with a binomial order-statistic interval."""
    k = len(effects)
    if k == 0:
        raise PoolingError("no studies to pool")
    label = "wm" if weighted else "mm"
    warnings = []
    r = order_stat_rank(k, level)
    if r is None:
        achieved = 1.0 - 2.0 * binom_cdf(0, k, 0.5) if k > 1 else 0.0
        warnings.append(f"no order-statistic interval reaches {level:.0%} with {k} studies; "
                        f"reporting [min, max] with coverage {achieved:.4f}")
    else:
        achieved = 1.0 - 2.0 * binom_cdf(r - 1, k, 0.5)

    if weighted:
        missing = [e.study_id for e in effects if not e.n_total or e.n_total <= 0]
        if missing:
            raise PoolingError("weighted median needs sample sizes; missing for: "
                               + ", ".join(missing))
        order = sorted(range(k), key=lambda i: (effects[i].y, i))
        ys = [effects[i].y for i in order]
        total = fsum(e.n_total for e in effects)
        ws = [effects[i].n_total / total for i in order]
        est = _weighted_quantile(ys, ws, 0.5)
        if r is None:
            lb, ub = ys[0], ys[-1]
        else:
            lb = _weighted_quantile(ys, ws, r / k)
            ub = _weighted_quantile(ys, ws, (k - r + 1) / k)
        weights = [e.n_total / total for e in effects]
    else:
        ys = sorted(e.y for e in effects)
        mid = k // 2
        est = ys[mid] if k % 2 else (ys[mid - 1] + ys[mid]) / 2.0
        lb, ub = (ys[0], ys[-1]) if r is None else (ys[r - 1], ys[k - r])
        weights = [1.0 / k] * k
    return PooledResult(estimate=est, se=None, ci_lb=lb, ci_ub=ub, k=k, weights=weights,
                        method_label=label, model="order", level=level,
                        achieved_coverage=achieved, warnings=warnings)


# -- CD pooling ------------------------------------------------------------------

def _iv_point(effects: Sequence[EffectEstimate], model: PoolModel) -> tuple[float, float]:
    """Inverse-variance point and tau^2 (0 under the common model)."""
    if len(effects) == 1:
        return effects[0].y, 0.0
    v = [e.se * e.se for e in effects]
    tau2 = 0.0
    if model.kind == "random":
        tau2 = tau2_reml(effects)[0] if model.tau2_method == "REML" else tau2_dl(effects)
    w = [1.0 / (vi + tau2) for vi in v]
    return fsum(wi * e.y for wi, e in zip(w, effects)) / fsum(w), tau2


def jackknife_variance(effects: Sequence[EffectEstimate], model: PoolModel) -> float:
    k = len(effects)
    loo = [_iv_point(effects[:i] + effects[i + 1:], model)[0] for i in range(k)]
    m = fsum(loo) / k
    return (k - 1) / k * fsum((t - m) ** 2 for t in loo)


def cd_pool(effects: Sequence[EffectEstimate], model: PoolModel = PoolModel()) -> PooledResult:
    effects = list(effects)
    k = len(effects)
    if k < 2:
        raise PoolingError(f"the CD method needs at least 2 studies, got {k}")
    for e in effects:
        if e.se is None or not e.se > 0:
            raise PoolingError(f"study {e.study_id!r} has no positive standard error")
    est, tau2 = _iv_point(effects, model)
    var = jackknife_variance(effects, model)
    se = math.sqrt(var)
    t = t_quantile(1.0 - (1.0 - model.level) / 2.0, k - 1)
    w = [1.0 / (e.se ** 2 + tau2) for e in effects]
    res = PooledResult(estimate=est, se=se, ci_lb=est - t * se, ci_ub=est + t * se, k=k,
                       weights=w, method_label="cd", model=model.kind, level=model.level)
    if se > 0:
        res.zval = est / se
        res.pval = t_two_sided_p(res.zval, k - 1)
    if model.kind == "random":
        res.tau2_method = model.tau2_method
        res.tau2 = tau2
    return res
