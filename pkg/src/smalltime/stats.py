"""
Statistical instruments shared by every verification.

Normal and gamma distribution functions, one- and two-sample
Kolmogorov-Smirnov tests, exceedance probabilities with Wilson intervals, and
the Cramer-Wold projection directions used for multivariate limits.
"""

import logging
import math
from collections.abc import Callable
from dataclasses import asdict, dataclass

import numpy as np
from scipy import stats as sps
from scipy.special import gammainc, ndtr, ndtri

logger = logging.getLogger(__name__)

KS_LEVEL = 0.001
CRAMER_WOLD_SEED = 0xC0FFEE
CRAMER_WOLD_EXTRA = 8


def normal_cdf(x):
    """
    Standard normal CDF.

    >>> float(normal_cdf(0.0))
    0.5
    >>> round(float(normal_cdf(0.05)), 6)
    0.519939
    """
    return ndtr(x)


def normal_quantile(p):
    """
    Inverse of the standard normal CDF on (0, 1).

    >>> round(float(normal_quantile(0.975)), 6)
    1.959964

    Raises:
        ValueError: if any p lies outside the open interval (0, 1)
    """
    arr = np.asarray(p, dtype=float)
    if np.any(~((arr > 0.0) & (arr < 1.0))):
        raise ValueError(f"normal_quantile needs p in (0, 1), got {p}")
    return ndtri(p)


def normal_pdf(x):
    """Standard normal density."""
    x = np.asarray(x, dtype=float)
    return np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)


def gamma_cdf(x, shape: float, scale: float):
    """
    Gamma CDF, i.e. the regularized lower incomplete gamma P(shape, x / scale).

    >>> round(float(gamma_cdf(2.0, shape=1.0, scale=2.0)), 6)
    0.632121

    Raises:
        ValueError: if shape or scale is not positive, or x is negative
    """
    if not shape > 0 or not scale > 0:
        raise ValueError(f"gamma_cdf needs shape > 0 and scale > 0, got shape={shape}, scale={scale}")
    arr = np.asarray(x, dtype=float)
    if np.any(arr < 0):
        raise ValueError(f"gamma_cdf is defined for x >= 0, got {x}")
    return gammainc(shape, arr / scale)


def chi2_quantile(q: float, df: float = 1.0) -> float:
    """Quantile of the chi-square law with ``df`` degrees of freedom."""
    if not 0 < q < 1:
        raise ValueError(f"chi2_quantile needs q in (0, 1), got {q}")
    return float(sps.chi2.ppf(q, df))


@dataclass(frozen=True)
class KSReport:
    """Outcome of a Kolmogorov-Smirnov test against the asymptotic critical value."""

    statistic: float
    n: int
    critical_001: float
    passed: bool
    level: float = KS_LEVEL

    def to_dict(self) -> dict:
        """JSON-ready representation."""
        return asdict(self)


def ks_critical(n: int, level: float = KS_LEVEL) -> float:
    """Asymptotic Kolmogorov critical value K_{1-level} / sqrt(n); about 1.949 / sqrt(n) at 0.001."""
    return float(sps.kstwobign.isf(level)) / math.sqrt(n)


def ks_one_sample(sample, cdf: Callable[[np.ndarray], np.ndarray], level: float = KS_LEVEL) -> KSReport:
    """
    One-sample Kolmogorov-Smirnov test.

    The statistic is the exact sup-distance max(i/n - F(x_(i)), F(x_(i)) - (i-1)/n)
    over the sorted sample, as computed by ``scipy.stats.kstest``.

    Args:
        sample: nonempty finite real vector
        cdf: vectorized CDF of the hypothesised law
        level: significance level of the asymptotic critical value

    Returns:
        KSReport with pass iff statistic <= critical value
    """
    x = np.asarray(sample, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("ks_one_sample needs a nonempty sample")
    if not np.all(np.isfinite(x)):
        raise ValueError("ks_one_sample needs a finite sample")
    statistic = float(sps.kstest(x, cdf, method="asymp").statistic)
    critical = ks_critical(x.size, level)
    return KSReport(statistic, int(x.size), critical, statistic <= critical, level)


def ks_normal(sample, variance: float, level: float = KS_LEVEL) -> KSReport:
    """KS test of ``sample`` against N(0, variance)."""
    if not variance > 0:
        raise ValueError(f"KS against a normal law needs a positive variance, got {variance}")
    scale = math.sqrt(variance)
    return ks_one_sample(sample, lambda z: ndtr(z / scale), level)


def ks_two_sample(a, b, level: float = KS_LEVEL) -> KSReport:
    """
    Two-sample Kolmogorov-Smirnov test with the asymptotic critical value.

    The effective sample size is n*m / (n + m).
    """
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.size == 0 or b.size == 0:
        raise ValueError("ks_two_sample needs two nonempty samples")
    statistic = float(sps.ks_2samp(a, b, method="asymp").statistic)
    n_eff = a.size * b.size / (a.size + b.size)
    critical = float(sps.kstwobign.isf(level)) / math.sqrt(n_eff)
    return KSReport(statistic, int(round(n_eff)), critical, statistic <= critical, level)


@dataclass(frozen=True)
class ProbEstimate:
    """A Monte Carlo probability with its Wilson confidence interval."""

    p_hat: float
    n: int
    ci_low: float
    ci_high: float
    confidence: float

    @property
    def half_width(self) -> float:
        """Half the interval width."""
        return 0.5 * (self.ci_high - self.ci_low)

    def contains(self, value: float, slack: float = 0.0) -> bool:
        """True when ``value`` lies in the interval widened by ``slack`` on both sides."""
        return self.ci_low - slack <= value <= self.ci_high + slack

    def to_dict(self) -> dict:
        """JSON-ready representation."""
        return asdict(self)


def wilson_interval(successes: int, n: int, confidence: float = 0.99) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if n <= 0:
        raise ValueError(f"wilson_interval needs n > 0, got {n}")
    if not 0 < confidence < 1:
        raise ValueError(f"confidence must lie in (0, 1), got {confidence}")
    ci = sps.binomtest(int(successes), int(n)).proportion_ci(confidence_level=confidence, method="wilson")
    return float(ci.low), float(ci.high)


def estimate_probability(indicator, confidence: float = 0.99) -> ProbEstimate:
    """Estimate P(event) from a boolean vector of outcomes."""
    hits = np.asarray(indicator, dtype=bool).ravel()
    n = hits.size
    successes = int(hits.sum())
    low, high = wilson_interval(successes, n, confidence)
    p_hat = successes / n
    # Clamp against rounding in the score interval at the 0 / 1 edges.
    return ProbEstimate(p_hat, n, min(low, p_hat), max(high, p_hat), confidence)


def prob_exceed(sample, coordinate: int = 0, level: float = 0.0, confidence: float = 0.99) -> ProbEstimate:
    """
    Fraction of rows strictly above ``level`` in one column, with a Wilson interval.

    Args:
        sample: an ``MCSample`` or a 2-D array (one path per row)
        coordinate: column index
        level: threshold; ties count as not exceeding
        confidence: interval confidence level
    """
    values = np.asarray(getattr(sample, "values", sample), dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    if not -values.shape[1] <= coordinate < values.shape[1]:
        raise IndexError(f"coordinate {coordinate} out of range for {values.shape[1]} columns")
    return estimate_probability(values[:, coordinate] > level, confidence)


def dkw_epsilon(n: int, confidence: float = 0.999) -> float:
    """Dvoretzky-Kiefer-Wolfowitz band half-width sqrt(log(2 / alpha) / (2 n))."""
    alpha = 1.0 - confidence
    return math.sqrt(math.log(2.0 / alpha) / (2.0 * n))


def cramer_wold_directions(
    n: int, extra: int = CRAMER_WOLD_EXTRA, seed: int = CRAMER_WOLD_SEED
) -> np.ndarray:
    """
    Projection directions for testing an n-dimensional limit law.

    The axis directions come first, followed by ``extra`` fixed pseudo-random
    unit vectors. A one-dimensional law needs only the single direction [1].

    >>> cramer_wold_directions(1).tolist()
    [[1.0]]
    >>> cramer_wold_directions(2).shape
    (10, 2)
    """
    axes = np.eye(n)
    if n == 1:
        return axes
    rng = np.random.default_rng(seed)
    random = rng.standard_normal((extra, n))
    random /= np.linalg.norm(random, axis=1, keepdims=True)
    return np.vstack([axes, random])
