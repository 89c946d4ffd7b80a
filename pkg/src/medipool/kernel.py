"""Numerical primitives shared by the estimators.

Normal, log-normal, gamma and Weibull distributions, a seeded stream-split
random generator, golden-section minimization, bisection root finding and a
log-space binomial CDF.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np
from scipy import special

SQRT2 = math.sqrt(2.0)

# Acklam's rational approximation to the inverse normal CDF.
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


def norm_cdf(x):
    """Standard normal CDF (scalar or array)."""
    if np.ndim(x) == 0:
        return 0.5 * math.erfc(-float(x) / SQRT2)
    return 0.5 * special.erfc(-np.asarray(x, dtype=float) / SQRT2)


def norm_pdf(x):
    x = np.asarray(x, dtype=float)
    out = np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
    return out if out.ndim else float(out)


def _acklam(p: np.ndarray) -> np.ndarray:
    x = np.empty_like(p)
    lo = p < _P_LOW
    hi = p > 1.0 - _P_LOW
    mid = ~(lo | hi)
    if lo.any():
        q = np.sqrt(-2.0 * np.log(p[lo]))
        x[lo] = (((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / \
            ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0)
    if hi.any():
        q = np.sqrt(-2.0 * np.log1p(-p[hi]))
        x[hi] = -(((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / \
            ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0)
    if mid.any():
        q = p[mid] - 0.5
        r = q * q
        x[mid] = (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q / \
            (((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0)
    return x


def norm_quantile(p):
    """Inverse standard normal CDF.

    Rational approximation followed by one Halley refinement step, which
    brings the relative error down to roughly machine precision.
    """
    arr = np.asarray(p, dtype=float)
    if np.any((arr <= 0.0) | (arr >= 1.0)) or np.any(np.isnan(arr)):
        raise ValueError("probability must lie strictly inside (0, 1)")
    flat = arr.reshape(-1)
    # Work in the lower half and reflect, so that 1 - p is never formed.
    lower = np.minimum(flat, 1.0 - flat)
    x = _acklam(lower)
    err = 0.5 * special.erfc(-x / SQRT2) - lower
    u = err * math.sqrt(2.0 * math.pi) * np.exp(0.5 * x * x)
    x = x - u / (1.0 + 0.5 * x * u)
    x = np.where(flat > 0.5, -x, x)
    x = np.where(flat == 0.5, 0.0, x)
    if arr.ndim == 0:
        return float(x[0])
    return x.reshape(arr.shape)


# ---------------------------------------------------------------------------
# Distribution families
# ---------------------------------------------------------------------------

FAMILIES = ("normal", "lognormal", "gamma", "weibull")


@dataclass(frozen=True)
class DistFamily:
    """A two-parameter distribution.

    ``a``/``b`` are (mu, sigma) for normal and lognormal (log scale for the
    latter), (shape, rate) for gamma and (shape, scale) for Weibull.
    """

    family: str
    a: float
    b: float

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if not (math.isfinite(self.a) and math.isfinite(self.b)):
            raise ValueError("distribution parameters must be finite")
        if self.b <= 0 or (self.family in ("gamma", "weibull") and self.a <= 0):
            raise ValueError(f"invalid {self.family} parameters ({self.a}, {self.b})")


def _check_p(p):
    p = np.asarray(p, dtype=float)
    if np.any((p <= 0.0) | (p >= 1.0)):
        raise ValueError("probability must lie strictly inside (0, 1)")
    return p


def _scalarize(x):
    x = np.asarray(x, dtype=float)
    return float(x) if x.ndim == 0 else x


def dist_quantile(d: DistFamily, p):
    p = _check_p(p)
    if d.family == "normal":
        out = d.a + d.b * np.asarray(norm_quantile(p))
    elif d.family == "lognormal":
        out = np.exp(d.a + d.b * np.asarray(norm_quantile(p)))
    elif d.family == "gamma":
        out = special.gammaincinv(d.a, p) / d.b
    else:
        out = d.b * (-np.log1p(-p)) ** (1.0 / d.a)
    return _scalarize(out)


def dist_cdf(d: DistFamily, x):
    x = np.asarray(x, dtype=float)
    if d.family == "normal":
        out = 0.5 * special.erfc(-((x - d.a) / d.b) / SQRT2)
    elif d.family == "lognormal":
        with np.errstate(divide="ignore"):
            z = (np.log(np.maximum(x, 0.0)) - d.a) / d.b
        out = 0.5 * special.erfc(-z / SQRT2)
    elif d.family == "gamma":
        out = special.gammainc(d.a, np.maximum(x, 0.0) * d.b)
    else:
        out = -np.expm1(-(np.maximum(x, 0.0) / d.b) ** d.a)
    return _scalarize(out)


def dist_pdf(d: DistFamily, x):
    x = np.asarray(x, dtype=float)
    if d.family == "normal":
        out = np.asarray(norm_pdf((x - d.a) / d.b)) / d.b
    else:
        pos = x > 0
        xs = np.where(pos, x, 1.0)
        if d.family == "lognormal":
            z = (np.log(xs) - d.a) / d.b
            val = np.exp(-0.5 * z * z) / (xs * d.b * math.sqrt(2.0 * math.pi))
        elif d.family == "gamma":
            val = np.exp(d.a * math.log(d.b) + (d.a - 1.0) * np.log(xs) - d.b * xs
                         - special.gammaln(d.a))
        else:
            t = xs / d.b
            val = (d.a / d.b) * t ** (d.a - 1.0) * np.exp(-(t ** d.a))
        out = np.where(pos, val, 0.0)
    return _scalarize(out)


def dist_mean(d: DistFamily) -> float:
    if d.family == "normal":
        return d.a
    if d.family == "lognormal":
        return math.exp(d.a + 0.5 * d.b ** 2)
    if d.family == "gamma":
        return d.a / d.b
    return d.b * math.gamma(1.0 + 1.0 / d.a)


def dist_sd(d: DistFamily) -> float:
    if d.family == "normal":
        return d.b
    if d.family == "lognormal":
        return math.exp(d.a + 0.5 * d.b ** 2) * math.sqrt(math.expm1(d.b ** 2))
    if d.family == "gamma":
        return math.sqrt(d.a) / d.b
    g1 = math.exp(special.gammaln(1.0 + 1.0 / d.a))
    g2 = math.exp(special.gammaln(1.0 + 2.0 / d.a))
    return d.b * math.sqrt(max(g2 - g1 * g1, 0.0))


# ---------------------------------------------------------------------------
# Random streams
# ---------------------------------------------------------------------------

def stream_id(*parts: int) -> int:
    """Stable 64-bit id for a tuple of non-negative integers."""
    payload = b"".join(int(x).to_bytes(8, "little", signed=False) for x in parts)
    return int.from_bytes(hashlib.blake2b(payload, digest_size=8).digest(), "little")


@dataclass(frozen=True)
class RngStream:
    """Seed plus stream id; each distinct pair yields an independent sequence."""

    seed: int = 0
    stream: int = 0

    def child(self, *parts: int) -> "RngStream":
        return RngStream(self.seed, stream_id(self.stream, *parts))

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=int(self.seed), spawn_key=(int(self.stream),))
        return np.random.Generator(np.random.Philox(ss))


def sample(d: DistFamily, n: int, rng: RngStream) -> np.ndarray:
    """Draw ``n`` values from ``d``; identical ``rng`` gives identical draws."""
    if n <= 0:
        raise ValueError("sample size must be positive")
    gen = rng.generator()
    if d.family == "normal":
        return d.a + d.b * gen.standard_normal(n)
    if d.family == "lognormal":
        return np.exp(d.a + d.b * gen.standard_normal(n))
    # Inverse CDF keeps gamma/Weibull draws a fixed function of the uniforms.
    u = gen.random(n)
    u = np.where(u == 0.0, np.nextafter(0.0, 1.0), u)
    return np.asarray(dist_quantile(d, u))


# ---------------------------------------------------------------------------
# Discrete helpers
# ---------------------------------------------------------------------------

def binom_cdf(k: int, n: int, p: float) -> float:
    """P(X <= k) for X ~ Binomial(n, p), summed in log space."""
    if n <= 0 or k < 0 or k > n or int(k) != k:
        raise ValueError(f"need 0 <= k <= n with n >= 1, got k={k}, n={n}")
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must be a probability")
    k = int(k)
    if k == n:
        return 1.0
    if p == 0.0:
        return 1.0
    if p == 1.0:
        return 0.0
    i = np.arange(k + 1)
    logpmf = (special.gammaln(n + 1) - special.gammaln(i + 1) - special.gammaln(n - i + 1)
              + i * math.log(p) + (n - i) * math.log1p(-p))
    return float(min(1.0, math.exp(special.logsumexp(logpmf))))


def binom_logcdf(k: int, n: int, p: float) -> float:
    """log P(X <= k); stays finite when the probability underflows."""
    if n <= 0 or k < 0 or k > n or int(k) != k:
        raise ValueError(f"need 0 <= k <= n with n >= 1, got k={k}, n={n}")
    if k == n:
        return 0.0
    i = np.arange(int(k) + 1)
    logpmf = (special.gammaln(n + 1) - special.gammaln(i + 1) - special.gammaln(n - i + 1)
              + i * math.log(p) + (n - i) * math.log1p(-p))
    return float(min(0.0, special.logsumexp(logpmf)))


def norm_quantile_log(logp: float) -> float:
    """x with log(norm_cdf(x)) == logp, usable far below double underflow."""
    if logp >= 0.0:
        raise ValueError("log-probability must be negative")
    if logp > -700.0:
        p = math.exp(logp)
        if p < 1.0:
            return norm_quantile(p)
    # Bracket with the Mills-ratio asymptote, then bisect on log_ndtr.
    guess = -math.sqrt(-2.0 * logp)
    lo, hi = guess - 5.0, min(guess + 5.0, 0.0)
    return find_root(lambda x: float(special.log_ndtr(x)) - logp, lo, hi, tol=1e-13)


def chi2_quantile(p: float, df: float) -> float:
    if not 0.0 < p < 1.0:
        raise ValueError("probability must lie strictly inside (0, 1)")
    return 2.0 * float(special.gammaincinv(df / 2.0, p))


def chi2_sf(x: float, df: float) -> float:
    return float(special.gammaincc(df / 2.0, max(x, 0.0) / 2.0))


def t_quantile(p: float, df: float) -> float:
    return float(special.stdtrit(df, p))


# ---------------------------------------------------------------------------
# Scalar search
# ---------------------------------------------------------------------------

def t_two_sided_p(t: float, df: float) -> float:
    return float(2.0 * special.stdtr(df, -abs(t)))


INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def golden_steps(lo: float, hi: float, tol: float) -> int:
    return max(0, math.ceil(math.log((hi - lo) / tol) / math.log(1.0 / INV_PHI)))


def minimize_scalar(f, lo: float, hi: float, tol: float = 1e-8) -> float:
    """Golden-section search for the minimum of a unimodal ``f`` on [lo, hi].

    Uses ``golden_steps(lo, hi, tol) + 2`` evaluations at most.
    """
    if not lo < hi:
        raise ValueError("need lo < hi")
    if tol <= 0:
        raise ValueError("tol must be positive")
    a, b = float(lo), float(hi)
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(golden_steps(lo, hi, tol)):
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = f(d)
    return c if fc <= fd else d


def minimize_scalar_batch(f, lo, hi, tol: float = 1e-8) -> np.ndarray:
    """Vectorized golden-section search: ``f`` maps an array of abscissae
    (one per problem) to an array of objective values."""
    a = np.array(lo, dtype=float)
    b = np.array(hi, dtype=float)
    if np.any(a >= b):
        raise ValueError("need lo < hi")
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(golden_steps(0.0, float(np.max(b - a)), tol)):
        left = fc <= fd
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        keep = np.where(left, c, d)
        fkeep = np.where(left, fc, fd)
        new = np.where(left, b - INV_PHI * (b - a), a + INV_PHI * (b - a))
        fnew = f(new)
        c = np.where(left, new, keep)
        d = np.where(left, keep, new)
        fc = np.where(left, fnew, fkeep)
        fd = np.where(left, fkeep, fnew)
    return np.where(fc <= fd, c, d)


def find_root(f, lo: float, hi: float, tol: float = 1e-10) -> float:
    """Bisection root of ``f`` on a sign-changing bracket [lo, hi]."""
    flo, fhi = f(lo), f(hi)
    if flo == 0.0:
        return float(lo)
    if fhi == 0.0:
        return float(hi)
    if flo * fhi > 0.0:
        raise ValueError("no sign change on the bracket")
    a, b = float(lo), float(hi)
    while b - a > tol:
        m = 0.5 * (a + b)
        if m == a or m == b:
            break
        fm = f(m)
        if fm == 0.0:
            return m
        if (fm < 0.0) == (flo < 0.0):
            a, flo = m, fm
        else:
            b = m
    return 0.5 * (a + b)
