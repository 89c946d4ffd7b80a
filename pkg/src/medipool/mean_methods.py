"""Mean, SD and standard-error estimators for groups reporting quantiles.

Every estimator has a batched core that works on an ``(m, k)`` array of
reported quantiles sharing one scenario and sample size; the bootstrap
reuses these cores on all replicates at once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import special

from . import kernel
from .data import MEAN_SD, S1, S2, S3, GroupSummary, StudySummary, classify_group
from .kernel import (DistFamily, RngStream, minimize_scalar_batch, norm_quantile)
from .pooling import EffectEstimate

MEAN_METHODS = ("wan", "luo", "shi_normal", "shi_lognormal", "qe", "bc", "mln", "yang")
SD_METHODS = ("wan", "shi_normal", "shi_lognormal", "qe", "bc", "mln", "yang")
SE_METHODS = ("naive", "bootstrap", "plugin")
BOOTSTRAP_METHODS = ("qe", "bc", "mln")

SCENARIO_FIELDS = {
    S1: ("min", "med", "max"),
    S2: ("q1", "med", "q3"),
    S3: ("min", "q1", "med", "q3", "max"),
}


class EstimationError(ValueError):
    """A study cannot be handled by the requested estimator."""


def quantile_scenario(g: GroupSummary) -> str:
    sc = classify_group(g)
    if sc not in SCENARIO_FIELDS:
        raise EstimationError(f"scenario {sc} has no S1/S2/S3 quantile summary")
    if g.n < 2:
        raise EstimationError("quantile-based estimators need n >= 2")
    return sc


def summary_values(g: GroupSummary, sc: str) -> np.ndarray:
    return np.array([getattr(g, f) for f in SCENARIO_FIELDS[sc]], dtype=float)


# ---------------------------------------------------------------------------
# Closed forms (array friendly: ``v`` has the scenario's quantiles on its
# last axis)
# ---------------------------------------------------------------------------

def _theta_range(n):
    return 2.0 * norm_quantile((n - 0.375) / (n + 0.25))


def _theta_iqr(n):
    return 2.0 * norm_quantile((0.75 * n - 0.125) / (n + 0.25))


def wan_mean(v, sc):
    v = np.asarray(v, dtype=float)
    if sc == S1:
        return (v[..., 0] + 2.0 * v[..., 1] + v[..., 2]) / 4.0
    if sc == S2:
        return (v[..., 0] + v[..., 1] + v[..., 2]) / 3.0
    return (v[..., 0] + 2.0 * v[..., 1] + 2.0 * v[..., 2] + 2.0 * v[..., 3] + v[..., 4]) / 8.0


def luo_mean(v, sc, n):
    v = np.asarray(v, dtype=float)
    if sc == S1:
        w = 4.0 / (4.0 + n ** 0.75)
        return w * (v[..., 0] + v[..., 2]) / 2.0 + (1.0 - w) * v[..., 1]
    if sc == S2:
        w = 0.7 + 0.39 / n
        return w * (v[..., 0] + v[..., 2]) / 2.0 + (1.0 - w) * v[..., 1]
    w1 = 2.2 / (2.2 + n ** 0.75)
    w2 = 0.7 - 0.72 / n ** 0.55
    return (w1 * (v[..., 0] + v[..., 4]) / 2.0 + w2 * (v[..., 1] + v[..., 3]) / 2.0
            + (1.0 - w1 - w2) * v[..., 2])


def wan_sd(v, sc, n):
    v = np.asarray(v, dtype=float)
    if sc == S1:
        return (v[..., 2] - v[..., 0]) / _theta_range(n)
    if sc == S2:
        return (v[..., 2] - v[..., 0]) / _theta_iqr(n)
    return ((v[..., 4] - v[..., 0]) / (2.0 * _theta_range(n))
            + (v[..., 3] - v[..., 1]) / (2.0 * _theta_iqr(n)))


def shi_sd(v, sc, n):
    """Wan's SD in S1/S2; the optimally weighted combination in S3."""
    if sc != S3:
        return wan_sd(v, sc, n)
    v = np.asarray(v, dtype=float)
    w = 1.0 / (1.0 + 0.07 * n ** 0.6)
    return (w * (v[..., 4] - v[..., 0]) / _theta_range(n)
            + (1.0 - w) * (v[..., 3] - v[..., 1]) / _theta_iqr(n))


def _shi_lognormal(v, sc, n):
    v = np.asarray(v, dtype=float)
    if np.any(v <= 0):
        raise EstimationError("shi_lognormal needs strictly positive quantiles")
    lv = np.log(v)
    mu = luo_mean(lv, sc, n)
    s = shi_sd(lv, sc, n)
    mean = np.exp(mu + 0.5 * s * s)
    return mean, mean * np.sqrt(np.expm1(s * s))


# ---------------------------------------------------------------------------
# Quantile matching over four families
# ---------------------------------------------------------------------------

QE_EPS = 1e-12
_SHAPE_RANGES = {
    "lognormal": (1e-3, 10.0),
    "gamma": (5e-2, 1e6),
    "weibull": (5e-2, 500.0),
}


def qe_points(sc: str, n) -> np.ndarray:
    lo, hi = 0.5 / n, 1.0 - 0.5 / n
    if sc == S1:
        return np.array([lo, 0.5, hi])
    if sc == S2:
        return np.array([0.25, 0.5, 0.75])
    return np.array([lo, 0.25, 0.5, 0.75, hi])


def _unit_quantiles(family: str, shape, p):
    """Quantiles of the unit-scale member with the given shape (broadcast)."""
    shape = np.asarray(shape, dtype=float)[..., None]
    if family == "lognormal":
        return np.exp(shape * norm_quantile(p))
    if family == "gamma":
        return special.gammaincinv(shape, p)
    return (-np.log1p(-p)) ** (1.0 / shape)


def _scale_fit(Q, U):
    """Least-squares scale c >= 0 for Q ~ c * U, row-wise; returns (c, loss)."""
    c = np.maximum(np.sum(Q * U, axis=-1) / np.sum(U * U, axis=-1), 0.0)
    loss = np.sum((Q - c[..., None] * U) ** 2, axis=-1)
    return c, loss


def _fit_shape_family(family: str, Q: np.ndarray, p: np.ndarray):
    lo, hi = _SHAPE_RANGES[family]
    grid = np.linspace(math.log(lo), math.log(hi), 61)
    losses = np.stack([_scale_fit(Q, _unit_quantiles(family, np.full(len(Q), math.exp(s)), p))[1]
                       for s in grid], axis=1)
    best = np.argmin(losses, axis=1)
    a = grid[np.maximum(best - 1, 0)]
    b = grid[np.minimum(best + 1, len(grid) - 1)]

    def objective(s):
        return _scale_fit(Q, _unit_quantiles(family, np.exp(s), p))[1]

    s = minimize_scalar_batch(objective, a, b, tol=1e-10)
    shape = np.exp(s)
    c, loss = _scale_fit(Q, _unit_quantiles(family, shape, p))
    c = np.maximum(c, 1e-300)
    if family == "lognormal":
        return np.log(c), shape, loss
    if family == "gamma":
        return shape, 1.0 / c, loss
    return shape, c, loss


def _fit_normal(Q, p):
    z = norm_quantile(p)
    zc = z - z.mean()
    sigma = np.maximum(Q @ zc / (zc @ zc), 1e-300)
    mu = Q.mean(axis=1) - sigma * z.mean()
    loss = np.sum((Q - mu[:, None] - sigma[:, None] * z) ** 2, axis=1)
    return mu, sigma, loss


def _family_moments(family, a, b):
    if family == "normal":
        return a, b
    if family == "lognormal":
        mean = np.exp(a + 0.5 * b * b)
        return mean, mean * np.sqrt(np.expm1(b * b))
    if family == "gamma":
        return a / b, np.sqrt(a) / b
    g1 = np.exp(special.gammaln(1.0 + 1.0 / a))
    g2 = np.exp(special.gammaln(1.0 + 2.0 / a))
    return b * g1, b * np.sqrt(np.maximum(g2 - g1 * g1, 0.0))


@dataclass(frozen=True)
class FittedDistribution:
    """Quantile-matching fits of the candidate families and their weights."""

    fits: tuple          # ((DistFamily | None, loss), ...) in kernel.FAMILIES order
    weights: tuple

    def mean(self) -> float:
        return float(sum(w * kernel.dist_mean(d) for (d, _), w in zip(self.fits, self.weights) if w > 0))

    def sd(self) -> float:
        return float(sum(w * kernel.dist_sd(d) for (d, _), w in zip(self.fits, self.weights) if w > 0))

    def pdf(self, x: float) -> float:
        return float(sum(w * kernel.dist_pdf(d, x) for (d, _), w in zip(self.fits, self.weights) if w > 0))

    def best(self) -> DistFamily:
        i = int(np.argmax(self.weights))
        return self.fits[i][0]


def _qe_batch(Q: np.ndarray, sc: str, n):
    """Per-family parameters, losses and weights for each row of ``Q``."""
    p = qe_points(sc, n)
    m = len(Q)
    params, losses = {}, {}
    mu, sigma, loss = _fit_normal(Q, p)
    params["normal"], losses["normal"] = (mu, sigma), loss
    positive = np.all(Q > 0, axis=1)
    for fam in ("lognormal", "gamma", "weibull"):
        if positive.any():
            a, b, loss = _fit_shape_family(fam, np.where(positive[:, None], Q, 1.0), p)
            loss = np.where(positive, loss, np.inf)
        else:
            a = b = np.ones(m)
            loss = np.full(m, np.inf)
        params[fam], losses[fam] = (a, b), loss
    inv = np.stack([np.where(np.isfinite(losses[f]), 1.0 / (losses[f] + QE_EPS), 0.0)
                    for f in kernel.FAMILIES], axis=1)
    weights = inv / inv.sum(axis=1, keepdims=True)
    return params, losses, weights


def _qe_moments(Q, sc, n):
    params, _, weights = _qe_batch(Q, sc, n)
    mean = np.zeros(len(Q))
    sd = np.zeros(len(Q))
    for j, fam in enumerate(kernel.FAMILIES):
        fm, fs = _family_moments(fam, *params[fam])
        w = weights[:, j]
        mean += np.where(w > 0, w * fm, 0.0)
        sd += np.where(w > 0, w * fs, 0.0)
    return mean, sd


def _require_dispersion(v):
    v = np.asarray(v, dtype=float)
    if not np.max(v) > np.min(v):
        raise EstimationError("zero dispersion in the reported quantiles")


def qe_fit(g: GroupSummary) -> FittedDistribution:
    sc = quantile_scenario(g)
    v = summary_values(g, sc)
    _require_dispersion(v)
    params, losses, weights = _qe_batch(v[None, :], sc, g.n)
    fits = []
    ws = []
    for j, fam in enumerate(kernel.FAMILIES):
        a, b = (float(x[0]) for x in params[fam])
        loss = float(losses[fam][0])
        fits.append((DistFamily(fam, a, b) if math.isfinite(loss) else None, loss))
        ws.append(float(weights[0, j]))
    return FittedDistribution(tuple(fits), tuple(ws))


# ---------------------------------------------------------------------------
# Box-Cox transform-to-normal (bc and mln)
# ---------------------------------------------------------------------------

LAMBDA_RANGE = (-2.0, 2.0)
_GL_X, _GL_W = np.polynomial.legendre.leggauss(64)


def boxcox(x, lam):
    x = np.asarray(x, dtype=float)
    lam = np.asarray(lam, dtype=float)
    logx = np.log(x)
    small = np.abs(lam) < 1e-12
    safe = np.where(small, 1.0, lam)
    return np.where(small, logx, np.expm1(safe * logx) / safe)


def boxcox_inverse(z, lam):
    """Inverse transform; for lam > 0 the power is continued with its sign
    below the support edge, for lam < 0 callers keep 1 + lam*z positive."""
    z = np.asarray(z, dtype=float)
    lam = np.asarray(lam, dtype=float)
    small = np.abs(lam) < 1e-12
    safe = np.where(small, 1.0, lam)
    u = 1.0 + safe * z
    au = np.where(u == 0.0, 1.0, np.abs(u))
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        powed = np.where(u > 0, np.exp(np.log1p(np.where(u > 0, safe * z, 0.0)) / safe),
                         -np.exp(np.log(au) / safe))
        powed = np.where(u == 0.0, 0.0, powed)
    with np.errstate(over="ignore"):
        return np.where(small, np.exp(z), powed)


def blom_points(sc: str, n) -> np.ndarray:
    p_hi = (n - 0.375) / (n + 0.25)
    p_q3 = (0.75 * n - 0.125) / (n + 0.25)
    if sc == S1:
        return np.array([1.0 - p_hi, 0.5, p_hi])
    if sc == S2:
        return np.array([1.0 - p_q3, 0.5, p_q3])
    return np.array([1.0 - p_hi, 1.0 - p_q3, 0.5, p_q3, p_hi])


def _lambda_search(objective, m):
    """Grid scan over [-2, 2] followed by golden-section refinement."""
    grid = np.linspace(*LAMBDA_RANGE, 41)
    vals = np.stack([objective(np.full(m, g)) for g in grid], axis=1)
    vals = np.where(np.isfinite(vals), vals, np.inf)
    best = np.argmin(vals, axis=1)
    a = grid[np.maximum(best - 1, 0)]
    b = grid[np.minimum(best + 1, len(grid) - 1)]
    return minimize_scalar_batch(objective, a, b, tol=1e-11)


def _affine_residual(T, z):
    """1 - R^2 of the straight-line fit of ``T`` on ``z`` (scale free in T)."""
    zc = z - z.mean()
    Tc = T - T.mean(axis=-1, keepdims=True)
    slope = Tc @ zc / (zc @ zc)
    resid = Tc - slope[..., None] * zc
    return np.sum(resid * resid, axis=-1) / np.sum(Tc * Tc, axis=-1)


def boxcox_moments(lam, mu, sigma):
    """Mean and SD of boxcox_inverse(Z, lam), Z ~ Normal(mu, sigma^2), by
    64-node Gauss-Legendre quadrature over mu +/- 6 sigma."""
    lam, mu, sigma = (np.asarray(x, dtype=float) for x in (lam, mu, sigma))
    lo = mu - 6.0 * sigma
    hi = mu + 6.0 * sigma
    neg = lam < -1e-12
    # Keep the window on the valid side of the pole for negative lambda.
    u_mu = 1.0 + lam * mu
    cap = np.where(neg, (0.01 * np.maximum(u_mu, 1e-300) - 1.0) / np.where(neg, lam, 1.0), hi)
    hi = np.where(neg, np.minimum(hi, cap), hi)
    mid = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    z = mid[..., None] + half[..., None] * _GL_X
    dens = np.exp(-0.5 * ((z - mu[..., None]) / sigma[..., None]) ** 2)
    w = dens * _GL_W
    w = w / w.sum(axis=-1, keepdims=True)
    x = boxcox_inverse(z, lam[..., None])
    mean = np.sum(w * x, axis=-1)
    sd = np.sqrt(np.maximum(np.sum(w * (x - mean[..., None]) ** 2, axis=-1), 0.0))
    return mean, sd


def _bc_params(Q, sc, n):
    z = norm_quantile(blom_points(sc, n))
    lam = _lambda_search(lambda l: _affine_residual(boxcox(Q, l[:, None]), z), len(Q))
    T = boxcox(Q, lam[:, None])
    return lam, luo_mean(T, sc, n), wan_sd(T, sc, n)


def _quantile_cov(p):
    z = norm_quantile(p)
    f = kernel.norm_pdf(z)
    pi, pj = np.meshgrid(p, p, indexing="ij")
    return np.minimum(pi, pj) * (1.0 - np.maximum(pi, pj)) / np.outer(f, f)


def _mln_params(Q, sc, n):
    p = blom_points(sc, n)
    z = norm_quantile(p)
    k = len(p)
    Sinv = np.linalg.inv(_quantile_cov(p))
    one = np.ones(k)
    s11 = one @ Sinv @ one
    P = Sinv - np.outer(Sinv @ one, one @ Sinv) / s11
    C = z @ P @ z
    logq = np.sum(np.log(Q), axis=-1)

    def profile(T):
        A = np.einsum("...i,ij,...j->...", T, P, T)
        B = T @ (P @ z)
        root = np.sqrt(np.maximum(n * n * B * B + 4.0 * k * n * A, 0.0))
        sigma = 2.0 * n * A / np.maximum(n * B + root, 1e-300)
        return A, B, sigma

    def negloglik(lam):
        A, B, sigma = profile(boxcox(Q, lam[:, None]))
        sigma = np.maximum(sigma, 1e-300)
        ll = (-k * np.log(sigma) - n * A / (2.0 * sigma ** 2) + n * B / sigma - 0.5 * n * C
              + (lam - 1.0) * logq)
        return -ll

    lam = _lambda_search(negloglik, len(Q))
    T = boxcox(Q, lam[:, None])
    _, _, sigma = profile(T)
    mu = ((T - sigma[:, None] * z) @ (Sinv @ one)) / s11
    return lam, mu, sigma


def _boxcox_batch(method, Q, sc, n):
    if np.any(Q <= 0):
        bad = np.any(Q <= 0, axis=1)
        if bad.all():
            raise EstimationError(f"{method} needs strictly positive quantiles")
        Q = np.where(bad[:, None], 1.0, Q)
    else:
        bad = None
    lam, mu, sigma = (_bc_params if method == "bc" else _mln_params)(Q, sc, n)
    mean, sd = boxcox_moments(lam, mu, sigma)
    if bad is not None:
        mean = np.where(bad, np.nan, mean)
        sd = np.where(bad, np.nan, sd)
    return (lam, mu, sigma), mean, sd


@dataclass(frozen=True)
class BoxCoxFit:
    """Normal(mu, sigma^2) on the Box-Cox scale with parameter ``boxcox_lambda``."""

    boxcox_lambda: float
    mu: float
    sigma: float

    def mean(self) -> float:
        return float(boxcox_moments(self.boxcox_lambda, self.mu, self.sigma)[0])

    def sd(self) -> float:
        return float(boxcox_moments(self.boxcox_lambda, self.mu, self.sigma)[1])

    def sample(self, n: int, rng: RngStream) -> np.ndarray:
        gen = rng.generator()
        lam = self.boxcox_lambda
        if lam < -1e-12:
            # Truncate at the pole so every draw maps to a finite value.
            u_hi = kernel.norm_cdf((-1.0 / lam - self.mu) / self.sigma)
            u = gen.random(n) * u_hi
            u = np.where(u == 0.0, np.nextafter(0.0, 1.0), u)
            z = self.mu + self.sigma * norm_quantile(np.minimum(u, np.nextafter(1.0, 0.0)))
            z = np.minimum(z, np.nextafter(-1.0 / lam, -np.inf))
        else:
            z = self.mu + self.sigma * gen.standard_normal(n)
        return boxcox_inverse(z, lam)


def boxcox_fit(g: GroupSummary, method: str = "bc") -> BoxCoxFit:
    sc = quantile_scenario(g)
    v = summary_values(g, sc)
    _require_dispersion(v)
    if np.any(v <= 0):
        raise EstimationError(f"{method} needs strictly positive quantiles")
    lam, mu, sigma = (_bc_params if method == "bc" else _mln_params)(v[None, :], sc, g.n)
    return BoxCoxFit(float(lam[0]), float(mu[0]), float(sigma[0]))


# ---------------------------------------------------------------------------
# Normal-theory linear combination of order statistics (yang)
# ---------------------------------------------------------------------------

def _order_stat_ranks(sc, n):
    ranks = {"min": 1.0, "q1": 0.25 * (n + 1), "med": 0.5 * (n + 1),
             "q3": 0.75 * (n + 1), "max": float(n)}
    return np.array([ranks[f] for f in SCENARIO_FIELDS[sc]])


def _yang_design(sc, n):
    """GLS coefficient matrix and scaled covariance of (mu, sigma).

    Expected values and covariances of standard normal order statistics come
    from the David-Johnson expansion in p = r / (n + 1).
    """
    p = _order_stat_ranks(sc, n) / (n + 1.0)
    q = norm_quantile(p)
    f = kernel.norm_pdf(q)
    d1 = 1.0 / f
    d2 = q / f ** 2
    alpha = q + p * (1.0 - p) / (2.0 * (n + 2.0)) * d2
    pi, pj = np.meshgrid(p, p, indexing="ij")
    V = np.minimum(pi, pj) * (1.0 - np.maximum(pi, pj)) / (n + 2.0) * np.outer(d1, d1)
    A = np.column_stack([np.ones_like(alpha), alpha])
    Vinv = np.linalg.inv(V)
    cov = np.linalg.inv(A.T @ Vinv @ A)
    return cov @ A.T @ Vinv, cov


def _yang_batch(Q, sc, n):
    L, cov = _yang_design(sc, n)
    est = Q @ L.T
    return est[:, 0], est[:, 1], cov


# ---------------------------------------------------------------------------
# Dispatch
# ---------------------------------------------------------------------------

def batch_mean_sd(method: str, Q: np.ndarray, sc: str, n):
    """Mean and SD estimates for every row of ``Q`` (NaN where undefined)."""
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    if method == "wan":
        return wan_mean(Q, sc), wan_sd(Q, sc, n)
    if method == "luo":
        return luo_mean(Q, sc, n), wan_sd(Q, sc, n)
    if method == "shi_normal":
        return luo_mean(Q, sc, n), shi_sd(Q, sc, n)
    if method == "shi_lognormal":
        return _shi_lognormal(Q, sc, n)
    if method == "qe":
        return _qe_moments(Q, sc, n)
    if method in ("bc", "mln"):
        _, mean, sd = _boxcox_batch(method, Q, sc, n)
        return mean, sd
    if method == "yang":
        mu, sigma, _ = _yang_batch(Q, sc, n)
        return mu, sigma
    raise EstimationError(f"unknown method {method!r}")


def _scalar(method: str, g: GroupSummary, which: int) -> float:
    sc = quantile_scenario(g)
    v = summary_values(g, sc)
    _require_dispersion(v)
    out = batch_mean_sd(method, v[None, :], sc, g.n)
    value = float(out[which][0])
    if not math.isfinite(value):
        raise EstimationError(f"{method} produced a non-finite estimate")
    return value


def estimate_mean(g: GroupSummary, method: str) -> float:
    """Sample-mean estimate from an S1/S2/S3 summary."""
    if method not in MEAN_METHODS:
        raise EstimationError(f"unknown mean method {method!r}")
    if method == "wan":
        sc = quantile_scenario(g)
        return float(wan_mean(summary_values(g, sc), sc))
    return _scalar(method, g, 0)


def estimate_sd(g: GroupSummary, method: str) -> float:
    if method not in SD_METHODS:
        raise EstimationError(f"unknown sd method {method!r}")
    sd = _scalar(method, g, 1)
    if not sd > 0:
        raise EstimationError("non-positive SD estimate")
    return sd


def yang_plugin_se(g: GroupSummary) -> float:
    sc = quantile_scenario(g)
    v = summary_values(g, sc)
    _require_dispersion(v)
    _, sigma, cov = _yang_batch(v[None, :], sc, g.n)
    return float(sigma[0] * math.sqrt(cov[0, 0]))


# ---------------------------------------------------------------------------
# Standard errors
# ---------------------------------------------------------------------------

MAX_REDRAWS = 10
MAX_FAILURE_RATE = 0.2


def replicate_summaries(x: np.ndarray, sc: str) -> np.ndarray:
    """Reduce each row of samples to the scenario's summary statistics."""
    cols = []
    for f in SCENARIO_FIELDS[sc]:
        if f == "min":
            cols.append(x.min(axis=1))
        elif f == "max":
            cols.append(x.max(axis=1))
        else:
            prob = {"q1": 0.25, "med": 0.5, "q3": 0.75}[f]
            cols.append(np.quantile(x, prob, axis=1))
    return np.column_stack(cols)


def _draw(model, n: int, size: int, rng: RngStream) -> np.ndarray:
    if isinstance(model, BoxCoxFit):
        return model.sample(n * size, rng).reshape(size, n)
    return kernel.sample(model, n * size, rng).reshape(size, n)


def _valid_rows(method, Q, mean):
    ok = np.isfinite(mean) & (Q.max(axis=1) > Q.min(axis=1))
    if method in BOOTSTRAP_METHODS and method != "qe":
        ok &= np.all(Q > 0, axis=1)
    return ok


def bootstrap_se(g: GroupSummary, method: str, nboot: int, rng: RngStream) -> float:
    """Parametric bootstrap SE of the mean estimator.

    Samples of size n are drawn from the fitted model, reduced to the same
    summary, and re-estimated. Failed replicates are redrawn up to ten times.
    """
    if method not in BOOTSTRAP_METHODS:
        raise EstimationError("bootstrap SEs are available for qe, bc and mln only")
    if nboot < 2:
        raise EstimationError("nboot must be at least 2")
    sc = quantile_scenario(g)
    n = int(g.n)
    model = qe_fit(g).best() if method == "qe" else boxcox_fit(g, method)
    estimates = np.full(nboot, np.nan)
    todo = np.arange(nboot)
    for attempt in range(MAX_REDRAWS + 1):
        x = _draw(model, n, len(todo), rng.child(attempt))
        Q = replicate_summaries(x, sc)
        safe = _valid_rows("bc" if method != "qe" else "qe", Q, np.zeros(len(Q)))
        mean = np.full(len(Q), np.nan)
        if safe.any():
            mean[safe] = batch_mean_sd(method, Q[safe], sc, n)[0]
        ok = _valid_rows(method, Q, mean)
        estimates[todo[ok]] = mean[ok]
        todo = todo[~ok]
        if len(todo) == 0:
            break
    if len(todo) > MAX_FAILURE_RATE * nboot:
        raise EstimationError(f"{len(todo)} of {nboot} bootstrap replicates failed")
    good = estimates[np.isfinite(estimates)]
    return float(np.std(good, ddof=1))


def estimate_se_mean(g: GroupSummary, mean_method: str, se_method: str = "naive",
                     sd_method: Optional[str] = None, rng: RngStream = RngStream(),
                     nboot: int = 1000) -> float:
    check_combination(mean_method, se_method)
    if se_method == "naive":
        sd = estimate_sd(g, sd_method or default_sd_method(mean_method))
        return sd / math.sqrt(g.n)
    if se_method == "bootstrap":
        return bootstrap_se(g, mean_method, nboot, rng)
    return yang_plugin_se(g)


def default_sd_method(mean_method: str) -> str:
    return mean_method if mean_method in SD_METHODS else "wan"


def check_combination(mean_method: str, se_method: str) -> None:
    if mean_method not in MEAN_METHODS:
        raise EstimationError(f"unknown mean method {mean_method!r}; "
                              f"choose from {', '.join(MEAN_METHODS)}")
    if se_method not in SE_METHODS:
        raise EstimationError(f"unknown se method {se_method!r}")
    if se_method == "bootstrap" and mean_method not in BOOTSTRAP_METHODS:
        raise EstimationError("se_method 'bootstrap' requires mean_method qe, bc or mln "
                              f"(got {mean_method!r})")
    if se_method == "plugin" and mean_method != "yang":
        raise EstimationError(f"se_method 'plugin' requires mean_method 'yang' (got {mean_method!r})")


# ---------------------------------------------------------------------------
# Study-level effects
# ---------------------------------------------------------------------------

def group_mean_se(g: GroupSummary, mean_method: str, se_method: str,
                  sd_method: Optional[str], rng: RngStream, nboot: int):
    """``(mean, se, scenario)`` for one group, using reported moments when present."""
    sc = classify_group(g)
    if sc in SCENARIO_FIELDS:
        mean = estimate_mean(g, mean_method)
        se = estimate_se_mean(g, mean_method, se_method, sd_method, rng, nboot)
        return mean, se, sc
    if sc == MEAN_SD:
        if not g.sd > 0 or not g.n >= 1:
            raise EstimationError("reported sd and n must be positive")
        return g.mean, g.sd / math.sqrt(g.n), sc
    raise EstimationError(f"group scenario {sc} cannot be used by mean-based methods")


def study_effect_mean(s: StudySummary, cfg, rng: RngStream = RngStream(), index: int = 0
                      ) -> EffectEstimate:
    """Mean (one group) or difference of means, group 1 minus group 2."""
    method = cfg.mean_method_for(index)
    parts = []
    for gi, g in enumerate(s.groups()):
        parts.append(group_mean_se(g, method, cfg.se_method, cfg.sd_method,
                                   rng.child(index, gi), cfg.nboot))
    if len(parts) == 1:
        y, se, sc = parts[0]
        n_total = s.group1.n
    else:
        y = parts[0][0] - parts[1][0]
        se = math.sqrt(parts[0][1] ** 2 + parts[1][1] ** 2)
        sc = f"{parts[0][2]}/{parts[1][2]}"
        n_total = (s.group1.n + s.group2.n) if s.group1.n and s.group2.n else None
    return EffectEstimate(s.study_id, y, se, n_total, sc, method)
