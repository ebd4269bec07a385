"""
Closed-form values for the models whose small-time behaviour departs from the
Gaussian limit.

- Squared Bessel from 0: R_t / t has the gamma(delta/2, 2) law at every t, so
  P(R_t > delta t) = P(R_1 > delta) does not depend on t. It is below 1/2,
  tends to 0 as delta -> 0 and to 1/2 as delta -> infinity; every p in (0, 1/2)
  is attained, and p in (1/2, 1) by the reflected martingale delta t - R_t.
- Compensated Poisson martingale t - P_t: P(t - P_t > 0) = e^{-t} for t < 1, which tends to 1.
- Squared Brownian motion from 0: B_t^2 > 0 almost surely, while
  B_t^2 / sqrt(t) collapses to 0 (degenerate normal limit).
- Brownian motion with drift Phi^-1(p) / (2 sqrt t): P(X_t > 0) = p at every t.
"""

import logging
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, replace

import pandas as pd
from scipy import stats as sps
from scipy.optimize import brentq
from scipy.special import gammaincc

from .models import ModelSpec, poisson_martingale, quantile_drift_bm, squared_bessel, squared_bm
from .simulate import SimConfig, derive_seed, simulate_terminal
from .stats import chi2_quantile, prob_exceed

logger = logging.getLogger(__name__)

DEFAULT_DELTAS = (0.01, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 100.0, 1000.0, 10000.0)


def bessel_limit_probability(delta: float) -> float:
    """
    P(R_1 > delta) for the squared Bessel process of dimension delta started at 0.

    >>> round(bessel_limit_probability(2.0), 6)
    0.367879
    """
    if delta < 0:
        raise ValueError(f"delta must be >= 0, got {delta}")
    if delta == 0:
        return 0.0
    return float(gammaincc(0.5 * delta, 0.5 * delta))


def bessel_limit_table(deltas: Sequence[float] = DEFAULT_DELTAS) -> pd.DataFrame:
    """The limit probability over a range of dimensions."""
    return pd.DataFrame(
        {"delta": list(deltas), "probability": [bessel_limit_probability(d) for d in deltas]}
    )


@dataclass(frozen=True)
class BesselChoice:
    """A dimension realising a target limit probability."""

    p: float
    delta: float
    reflected: bool

    @property
    def achieved(self) -> float:
        """The limit probability actually realised."""
        q = bessel_limit_probability(self.delta)
        return 1.0 - q if self.reflected else q


def bessel_delta_for_probability(p: float) -> BesselChoice:
    """
    The dimension delta with P(R_1^delta > delta) = p.

    For p in (0, 1/2) the dimension is found by bracketing. For p in (1/2, 1)
    the reflected martingale delta t - R_t realises p with the dimension of 1 - p.
    p = 1/2 is only reached in the limit delta -> infinity.
    """
    if not 0 < p < 1:
        raise ValueError(f"p must lie in (0, 1), got {p}")
    if p == 0.5:
        raise ValueError("p = 1/2 is the delta -> infinity limit and is not attained")
    reflected = p > 0.5
    target = 1.0 - p if reflected else p

    def gap(delta: float) -> float:
        return bessel_limit_probability(delta) - target

    lo, hi = 1e-3, 1.0
    while gap(lo) > 0:
        lo /= 10.0
        if lo < 1e-300:
            raise ValueError(f"no dimension attains probability {target}")
    while gap(hi) < 0:
        hi *= 4.0
        if hi > 1e18:
            raise ValueError(f"probability {target} is too close to 1/2 to resolve")
    delta = brentq(gap, lo, hi, xtol=1e-14, rtol=1e-14, maxiter=500)
    logger.debug(f"delta={delta:.10g} realises p={p} (reflected={reflected})")
    return BesselChoice(p, float(delta), reflected)


def poisson_exceed_probability(t: float, rate: float = 1.0) -> float:
    """
    P(rate t - P_t > 0) = P(P_t < rate t).

    >>> round(poisson_exceed_probability(0.5), 6)
    0.606531
    """
    if not t > 0:
        raise ValueError(f"t must be > 0, got {t}")
    mean = rate * t
    return float(sps.poisson.cdf(math.ceil(mean) - 1, mean))


def squared_bm_quantile(t: float, q: float = 0.99) -> float:
    """q-quantile of B_t^2 / sqrt(t) = sqrt(t) chi^2_1, which collapses to 0."""
    return math.sqrt(t) * chi2_quantile(q, 1.0)


def squared_bm_exceed_probability() -> float:
    """P(B_t^2 > 0) = 1 for every t > 0."""
    return 1.0


def quantile_drift_probability(p: float) -> float:
    """P(X_t > 0) for the quantile-drift Brownian motion: p at every t."""
    if not 0 < p < 1:
        raise ValueError(f"p must lie in (0, 1), got {p}")
    return p


def examples_table(name: str, **params) -> pd.DataFrame:
    """
    Tabulate one counterexample.

    Args:
        name: bessel, poisson, squared_bm or quantile_drift
        params: delta / deltas for bessel, t and rate for poisson, t for
            squared_bm, p for quantile_drift
    """
    if name == "bessel":
        deltas = list(params.get("deltas", DEFAULT_DELTAS))
        if "delta" in params and params["delta"] is not None:
            deltas = sorted({*deltas, float(params["delta"])})
        return bessel_limit_table(deltas)
    if name == "poisson":
        times = params.get("t") or [1.0, 0.5, 0.1, 0.01, 0.001]
        rate = params.get("rate", 1.0)
        return pd.DataFrame({"t": times, "probability": [poisson_exceed_probability(t, rate) for t in times]})
    if name == "squared_bm":
        times = params.get("t") or [1.0, 1e-2, 1e-4, 1e-6]
        return pd.DataFrame(
            {
                "t": times,
                "quantile_99": [squared_bm_quantile(t) for t in times],
                "probability": [squared_bm_exceed_probability()] * len(times),
            }
        )
    if name == "quantile_drift":
        p = params.get("p", 0.25)
        times = params.get("t") or [1.0, 1e-2, 1e-4]
        return pd.DataFrame({"t": times, "probability": [quantile_drift_probability(p)] * len(times)})
    raise ValueError(f"Unknown example '{name}'; choose bessel, poisson, squared_bm or quantile_drift")


MC_DEFAULT_TIMES = {
    "bessel": (1.0, 1e-2),
    "poisson": (0.5,),
    "squared_bm": (1e-2, 1e-4),
    "quantile_drift": (1.0, 1e-2, 1e-4),
}


def _simulated_event(name: str, params: dict) -> tuple[ModelSpec, Callable, Callable]:
    """Model, exceedance level above x0 at time t, and the closed-form probability at t."""
    if name == "bessel":
        delta = float(params.get("delta") or 2.0)
        return squared_bessel(delta), lambda t: delta * t, lambda t: bessel_limit_probability(delta)
    if name == "poisson":
        rate = float(params.get("rate") or 1.0)
        return poisson_martingale(rate), lambda t: 0.0, lambda t: poisson_exceed_probability(t, rate)
    if name == "squared_bm":
        return squared_bm(), lambda t: 0.0, lambda t: squared_bm_exceed_probability()
    if name == "quantile_drift":
        p = float(params.get("p") or 0.25)
        return quantile_drift_bm(p), lambda t: 0.0, lambda t: quantile_drift_probability(p)
    raise ValueError(f"Unknown example '{name}'; choose bessel, poisson, squared_bm or quantile_drift")


def monte_carlo_check(name: str, cfg: SimConfig, confidence: float = 0.99, **params) -> pd.DataFrame:
    """
    Simulate one counterexample and compare its exceedance probability with the closed form.

    Each time gets its own substream seed. A row passes when the Wilson interval
    contains the closed-form value.

    Args:
        name: bessel, poisson, squared_bm or quantile_drift
        cfg: Monte Carlo settings
        confidence: interval confidence level
        params: delta for bessel, rate for poisson, p for quantile_drift, t for the times

    Returns:
        one row per time with t, p_hat, ci_low, ci_high, exact and pass
    """
    model, level, exact = _simulated_event(name, params)
    times = [float(t) for t in (params.get("t") or MC_DEFAULT_TIMES[name])]
    rows = []
    for i, t in enumerate(times):
        sample = simulate_terminal(model, t, replace(cfg, seed=derive_seed(cfg.seed, i)))
        estimate = prob_exceed(sample, 0, model.x0[0] + level(t), confidence)
        value = exact(t)
        passed = estimate.contains(value, slack=1e-12)
        logger.info(
            f"{'✓' if passed else '✗'} {name} t={t:g}: {estimate.p_hat:.6f} "
            f"[{estimate.ci_low:.6f}, {estimate.ci_high:.6f}] vs {value:.6f}"
        )
        rows.append(
            {
                "t": t,
                "p_hat": estimate.p_hat,
                "ci_low": estimate.ci_low,
                "ci_high": estimate.ci_high,
                "exact": value,
                "pass": passed,
            }
        )
    return pd.DataFrame(rows, columns=["t", "p_hat", "ci_low", "ci_high", "exact", "pass"])
