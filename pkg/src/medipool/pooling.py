"""Inverse-variance pooling, between-study variance and heterogeneity."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .kernel import chi2_quantile, chi2_sf, find_root, norm_quantile

fsum = math.fsum


class PoolingError(ValueError):
    pass


@dataclass(frozen=True)
class EffectEstimate:
    """Outcome-measure estimate of one study and its standard error."""

    study_id: str
    y: float
    se: Optional[float] = None
    n_total: Optional[float] = None
    scenario: str = ""
    method: str = ""


@dataclass(frozen=True)
class PoolModel:
    kind: str = "random"
    tau2_method: str = "REML"
    level: float = 0.95

    def __post_init__(self):
        if self.kind not in ("common", "random"):
            raise ValueError(f"model must be 'common' or 'random', not {self.kind!r}")
        if self.tau2_method not in ("DL", "REML"):
            raise ValueError(f"tau^2 estimator must be DL or REML, not {self.tau2_method!r}")
        if not 0.0 < self.level < 1.0:
            raise ValueError("confidence level must lie in (0, 1)")


@dataclass
class PooledResult:
    estimate: float
    se: Optional[float]
    ci_lb: float
    ci_ub: float
    k: int
    weights: list
    method_label: str
    model: str = "random"
    tau2_method: Optional[str] = None
    level: float = 0.95
    zval: Optional[float] = None
    pval: Optional[float] = None
    tau2: Optional[float] = None
    tau2_se: Optional[float] = None
    tau2_ci: Optional[tuple] = None
    i2: Optional[float] = None
    i2_ci: Optional[tuple] = None
    h2: Optional[float] = None
    q: Optional[float] = None
    q_df: Optional[int] = None
    q_pval: Optional[float] = None
    achieved_coverage: Optional[float] = None
    warnings: list = field(default_factory=list)


def _weights_and_y(effects: Sequence[EffectEstimate]):
    if len(effects) < 2:
        raise PoolingError(f"need at least 2 studies to pool, got {len(effects)}")
    for e in effects:
        if e.se is None or not e.se > 0 or not math.isfinite(e.se):
            raise PoolingError(f"study {e.study_id!r} has no positive standard error")
    v = [e.se * e.se for e in effects]
    y = [e.y for e in effects]
    return y, v


def _wmean(y, w) -> float:
    return fsum(wi * yi for wi, yi in zip(w, y)) / fsum(w)


def q_statistic(y, v, tau2: float = 0.0) -> float:
    """Generalized Q: sum of squared standardized residuals at ``tau2``."""
    w = [1.0 / (vi + tau2) for vi in v]
    mu = _wmean(y, w)
    return fsum(wi * (yi - mu) ** 2 for wi, yi in zip(w, y))


def tau2_dl(effects: Sequence[EffectEstimate]) -> float:
    y, v = _weights_and_y(effects)
    w = [1.0 / vi for vi in v]
    sw = fsum(w)
    c = sw - fsum(wi * wi for wi in w) / sw
    q = q_statistic(y, v)
    return max(0.0, (q - (len(y) - 1)) / c)


def restricted_loglik(y, v, tau2: float) -> float:
    w = [1.0 / (vi + tau2) for vi in v]
    mu = _wmean(y, w)
    return -0.5 * (fsum(math.log(vi + tau2) for vi in v) + math.log(fsum(w))
                   + fsum(wi * (yi - mu) ** 2 for wi, yi in zip(w, y)))


def _reml_se(v, tau2: float) -> float:
    w = [1.0 / (vi + tau2) for vi in v]
    s1 = fsum(w)
    s2 = fsum(wi ** 2 for wi in w)
    s3 = fsum(wi ** 3 for wi in w)
    trpp = s2 - 2.0 * s3 / s1 + (s2 / s1) ** 2
    return math.sqrt(2.0 / trpp)


def tau2_reml(effects: Sequence[EffectEstimate], tol: float = 1e-8,
              max_iter: int = 100) -> tuple[float, float, bool]:
    """REML estimate of tau^2 by fixed-point iteration from the DL start.

    Returns ``(tau2, se, converged)``; the standard error comes from the
    Fisher information of the restricted likelihood.
    """
    y, v = _weights_and_y(effects)
    tau2 = tau2_dl(effects)
    converged = False
    for _ in range(max_iter):
        w = [1.0 / (vi + tau2) for vi in v]
        mu = _wmean(y, w)
        sw2 = fsum(wi * wi for wi in w)
        new = fsum(wi * wi * ((yi - mu) ** 2 - vi) for wi, yi, vi in zip(w, y, v)) / sw2 \
            + 1.0 / fsum(w)
        new = max(0.0, new)
        if abs(new - tau2) <= tol:
            tau2 = new
            converged = True
            break
        tau2 = new
    return tau2, _reml_se(v, tau2), converged


def typical_variance(v) -> float:
    w = [1.0 / vi for vi in v]
    sw = fsum(w)
    return (len(v) - 1) * sw / (sw * sw - fsum(wi * wi for wi in w))


def heterogeneity_stats(effects: Sequence[EffectEstimate], tau2: float):
    """``(Q, df, p, I2 in percent, H2)`` with I2 and H2 driven by ``tau2``."""
    y, v = _weights_and_y(effects)
    q = q_statistic(y, v)
    df = len(y) - 1
    s2 = typical_variance(v)
    i2 = 100.0 * tau2 / (tau2 + s2)
    h2 = (tau2 + s2) / s2
    return q, df, chi2_sf(q, df), i2, h2


def tau2_ci_qprofile(effects: Sequence[EffectEstimate], level: float = 0.95):
    """Q-profile interval for tau^2; returns ``(lb, ub, flagged)``.

    ``flagged`` is set when Q(0) already falls below the lower chi-square
    quantile, so the whole interval collapses to zero.
    """
    y, v = _weights_and_y(effects)
    df = len(y) - 1
    alpha = 1.0 - level
    chi_hi = chi2_quantile(1.0 - alpha / 2.0, df)
    chi_lo = chi2_quantile(alpha / 2.0, df)
    q0 = q_statistic(y, v, 0.0)

    def solve(target: float) -> float:
        if q0 <= target:
            return 0.0
        hi = max(1.0, max(v))
        while q_statistic(y, v, hi) > target:
            hi *= 2.0
            if hi > 1e300:
                raise PoolingError("failed to bracket the Q-profile bound")
        root = find_root(lambda t: q_statistic(y, v, t) - target, 0.0, hi,
                         tol=1e-13 * hi)
        return root

    lb = solve(chi_hi)
    ub = solve(chi_lo)
    return lb, ub, q0 <= chi_lo


def pool_iv(effects: Sequence[EffectEstimate], model: PoolModel = PoolModel(),
            label: str = "") -> PooledResult:
    """Inverse-variance weighted estimate under a common or random effects model."""
    y, v = _weights_and_y(effects)
    warnings = []
    tau2 = tau2_se = None
    if model.kind == "random":
        if model.tau2_method == "REML":
            tau2, tau2_se, ok = tau2_reml(effects)
            if not ok:
                warnings.append("REML iteration did not converge; reporting last iterate")
        else:
            tau2 = tau2_dl(effects)
            tau2_se = _reml_se(v, tau2)
        w = [1.0 / (vi + tau2) for vi in v]
    else:
        w = [1.0 / vi for vi in v]
    sw = fsum(w)
    est = _wmean(y, w)
    se = math.sqrt(1.0 / sw)
    z = norm_quantile(1.0 - (1.0 - model.level) / 2.0)
    zval = est / se
    pval = math.erfc(abs(zval) / math.sqrt(2.0))

    het_tau2 = tau2 if tau2 is not None else tau2_dl(effects)
    q, df, q_p, i2, h2 = heterogeneity_stats(effects, het_tau2)
    res = PooledResult(
        estimate=est, se=se, ci_lb=est - z * se, ci_ub=est + z * se, k=len(y),
        weights=w, method_label=label, model=model.kind,
        tau2_method=model.tau2_method if model.kind == "random" else None,
        level=model.level, zval=zval, pval=pval, i2=i2, h2=h2, q=q, q_df=df, q_pval=q_p,
        warnings=warnings,
    )
    if model.kind == "random":
        lb, ub, flagged = tau2_ci_qprofile(effects, model.level)
        s2 = typical_variance(v)
        res.tau2, res.tau2_se, res.tau2_ci = tau2, tau2_se, (lb, ub)
        res.i2_ci = (100.0 * lb / (lb + s2), 100.0 * ub / (ub + s2))
        if flagged:
            warnings.append("Q-profile interval for tau^2 collapsed to [0, 0]")
    return res
