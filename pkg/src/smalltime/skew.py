"""
At-the-money implied volatility skew.

The slope d sigma_imp / dK at K = S0 is estimated by a central difference of
implied vols, and compared with two envelopes:

- the CLT envelope (-sqrt(2 pi) C - sigma/2) / S0 .. (sqrt(2 pi) C - sigma/2) / S0
  with C = sqrt(log 2 / 2) c, which stays O(1) as T -> 0 and is valid for
  models with a time-dependent volatility;
- the model-free envelope, which grows like T^{-1/2}.

The O(T) and O((sigma sqrt T)^3) terms left out of the CLT envelope are kept
as a separate remainder budget, a heuristic envelope reported next to the bounds.
"""

import logging
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from enum import StrEnum
from typing import Any

import numpy as np
import pandas as pd

from .bounds import EXPANSION_SLOPE, DriftDiffusionBound, drift_bound_for_model
from .errors import NoArbViolation, OutOfScope, StatisticalFailure
from .models import ModelKind, ModelSpec
from .pricing import bs_call, bs_d1_d2, bs_vega, implied_vol
from .simulate import SimConfig, simulate_terminal
from .stats import normal_cdf, normal_pdf

logger = logging.getLogger(__name__)

SQRT_2PI = math.sqrt(2.0 * math.pi)
SE_MULTIPLE = 3.0


class Check(StrEnum):
    """Outcome of one skew verdict."""

    PASS = "pass"
    FAIL = "fail"
    NOT_APPLICABLE = "not-applicable"


def strike_step(S0: float, sigma_imp: float, T: float) -> float:
    """Default finite-difference step S0 * max(1e-3, sigma sqrt(T) / 10)."""
    return S0 * max(1e-3, sigma_imp * math.sqrt(T) / 10.0)


def slope_from_call_prices(
    call_fn: Callable[[float], float], S0: float, r: float, T: float, dK: float | None = None
) -> float:
    """
    Central-difference ATM slope of the implied vols of an arbitrary call-price function.

    >>> flat = lambda K: float(bs_call(100.0, K, 0.0, 0.2, 0.5))
    >>> round(abs(slope_from_call_prices(flat, 100.0, 0.0, 0.5)), 8)
    0.0
    """
    if dK is None:
        atm = implied_vol(call_fn(S0), S0, S0, r, T).sigma_imp
        dK = strike_step(S0, atm, T)
    if not dK > 0:
        raise ValueError(f"dK must be > 0, got {dK}")
    up = implied_vol(call_fn(S0 + dK), S0, S0 + dK, r, T).sigma_imp
    down = implied_vol(call_fn(S0 - dK), S0, S0 - dK, r, T).sigma_imp
    return (up - down) / (2.0 * dK)


@dataclass(frozen=True)
class SlopeEstimate:
    """Monte Carlo ATM slope with its delta-method standard error."""

    T: float
    dK: float
    slope: float
    se: float
    sigma_imp_atm: float
    sigma_down: float
    sigma_up: float


def _vol_from_mc(price: float, se: float, S0: float, K: float, r: float, T: float) -> float:
    lower = max(S0 - K * math.exp(-r * T), 0.0)
    try:
        return implied_vol(price, S0, K, r, T).sigma_imp
    except NoArbViolation as e:
        # Noise can push an estimate out of the no-arbitrage interval; only a whole interval outside is real.
        if price + SE_MULTIPLE * se > lower and price - SE_MULTIPLE * se < S0:
            raise StatisticalFailure(
                f"call estimate {price:.6g} +- {se:.2g} at K={K:g} straddles the no-arbitrage bounds"
            ) from e
        raise


def atm_slope(model: ModelSpec, T: float, cfg: SimConfig, dK: float | None = None) -> SlopeEstimate:
    """
    Estimate the ATM implied-vol slope from Monte Carlo call prices.

    All three strikes (S0 - dK, S0, S0 + dK) are priced on one terminal sample, so
    the finite difference sees common random numbers. The standard error
    propagates the per-path payoff difference through the inverse vegas.

    Raises:
        NoArbViolation: a call estimate lies outside the no-arbitrage interval
        StatisticalFailure: Monte Carlo noise makes an implied vol undefined
    """
    if not model.is_price_model:
        raise ValueError(f"{model.kind} in {model.coords} coordinates is not a positive-price model")
    S0, r = model.x0[0], model.rate
    sample = simulate_terminal(model, T, cfg)
    S_T = sample.values[:, 0]
    n = S_T.size
    df = math.exp(-r * T)

    def price(K: float) -> tuple[np.ndarray, float, float]:
        payoff = df * np.maximum(S_T - K, 0.0)
        return payoff, float(payoff.mean()), float(payoff.std(ddof=1) / math.sqrt(n))

    _, c_atm, se_atm = price(S0)
    sigma_atm = _vol_from_mc(c_atm, se_atm, S0, S0, r, T)
    if dK is None:
        dK = strike_step(S0, sigma_atm, T)
    if not 0 < dK < S0:
        raise ValueError(f"dK must lie in (0, S0), got {dK}")
    pay_up, c_up, se_up = price(S0 + dK)
    pay_down, c_down, se_down = price(S0 - dK)
    sigma_up = _vol_from_mc(c_up, se_up, S0, S0 + dK, r, T)
    sigma_down = _vol_from_mc(c_down, se_down, S0, S0 - dK, r, T)
    slope = (sigma_up - sigma_down) / (2.0 * dK)

    vega_up = float(bs_vega(S0, S0 + dK, r, sigma_up, T))
    vega_down = float(bs_vega(S0, S0 - dK, r, sigma_down, T))
    per_path = pay_up / vega_up - pay_down / vega_down
    se = float(per_path.std(ddof=1) / math.sqrt(n)) / (2.0 * dK)
    logger.debug(f"ATM slope T={T:g}: {slope:.6g} +- {se:.2g} (dK={dK:.4g})")
    return SlopeEstimate(float(T), float(dK), slope, se, sigma_atm, sigma_down, sigma_up)


@dataclass(frozen=True)
class SlopeBounds:
    """CLT slope envelope with its remainder budget."""

    lower: float
    upper: float
    budget: float
    C: float


def clt_slope_bounds(
    c: DriftDiffusionBound | float, sigma_imp_atm: float, S0: float, T: float, r: float = 0.0
) -> SlopeBounds:
    """
    ATM slope bounds from the small-time CLT, with the remainders left out.

    lower = (sqrt(2 pi) / (S0 sqrt T)) (-C sqrt T - sigma sqrt T / (2 sqrt(2 pi)))
    upper = (sqrt(2 pi) / (S0 sqrt T)) ( C sqrt T - sigma sqrt T / (2 sqrt(2 pi)))

    The budget is (sqrt(2 pi) / (S0 sqrt T)) (2 max(r, sigma^2) T + (sigma sqrt T)^3).

    >>> b = clt_slope_bounds(0.15, 0.2, 100.0, 0.01)
    >>> round(b.lower, 7), round(b.upper, 7)
    (-0.0032135, 0.0012135)
    """
    c = c.c if isinstance(c, DriftDiffusionBound) else float(c)
    if not T > 0 or not S0 > 0:
        raise ValueError(f"T and S0 must be > 0, got T={T}, S0={S0}")
    if sigma_imp_atm < 0:
        raise ValueError(f"sigma_imp_atm must be >= 0, got {sigma_imp_atm}")
    C = EXPANSION_SLOPE * c
    root_t = math.sqrt(T)
    factor = SQRT_2PI / (S0 * root_t)
    skew_term = sigma_imp_atm * root_t / (2.0 * SQRT_2PI)
    lower = factor * (-C * root_t - skew_term)
    upper = factor * (C * root_t - skew_term)
    budget = factor * (2.0 * max(r, sigma_imp_atm**2) * T + (sigma_imp_atm * root_t) ** 3)
    return SlopeBounds(lower, upper, budget, C)


def model_free_slope_bounds(S0: float, K: float, r: float, T: float, sigma_imp: float) -> tuple[float, float]:
    """
    Standard no-arbitrage slope bounds.

    lower = -(sqrt(2 pi) / (S0 sqrt T)) (1 - Phi(d2)) e^{-rT + d1^2/2}
    upper =  (sqrt(2 pi) / (S0 sqrt T)) Phi(d2) e^{-rT + d1^2/2}
    """
    d1, d2 = bs_d1_d2(S0, K, r, sigma_imp, T)
    scale = SQRT_2PI / (S0 * math.sqrt(T)) * math.exp(-r * T + 0.5 * float(d1) ** 2)
    phi = float(normal_cdf(d2))
    return -scale * (1.0 - phi), scale * phi


def slope_from_digital(D: float, sigma_imp: float, K: float, T: float) -> float:
    """
    Exact ATM slope from an undiscounted digital price at zero rate.

    With s = sigma_imp sqrt(T): (Phi(-s/2) - D) / (K sqrt(T) n(s/2)).
    """
    s = sigma_imp * math.sqrt(T)
    return (float(normal_cdf(-s / 2.0)) - D) / (K * math.sqrt(T) * float(normal_pdf(s / 2.0)))


def slope_asymptotic(D: float, sigma_imp: float, K: float, T: float) -> float:
    """Leading-order form sqrt(2 pi) / (K sqrt T) (1/2 - D - s / (2 sqrt(2 pi)))."""
    s = sigma_imp * math.sqrt(T)
    return SQRT_2PI / (K * math.sqrt(T)) * (0.5 - D - s / (2.0 * SQRT_2PI))


@dataclass(frozen=True)
class SkewReport:
    """ATM slope with both envelopes at one maturity."""

    T: float
    S0: float
    slope_est: float
    slope_se: float
    clt_lower: float
    clt_upper: float
    budget: float
    mf_lower: float
    mf_upper: float
    C: float
    sigma_imp_atm: float
    in_scope: bool
    verdicts: dict[str, Check] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        """JSON-ready representation."""
        out = {k: v for k, v in self.__dict__.items() if k != "verdicts"}
        out["verdicts"] = {k: str(v) for k, v in self.verdicts.items()}
        out["budget_note"] = "remainder budget is a heuristic envelope"
        return out


def skew_report(
    model: ModelSpec,
    T: float,
    cfg: SimConfig | None = None,
    dK: float | None = None,
) -> SkewReport:
    """
    Build a SkewReport; without ``cfg`` a GBM is priced analytically.

    Models outside the time-dependent-volatility scope (CEV, Heston) get NaN
    CLT bounds and ``in_scope = False``.
    """
    S0, r = model.x0[0], model.rate
    if cfg is None:
        if model.kind != ModelKind.GBM:
            raise ValueError(f"analytic pricing is only available for GBM, not {model.kind}")
        sigma = model.params["sigma"]
        slope = slope_from_call_prices(lambda K: float(bs_call(S0, K, r, sigma, T)), S0, r, T, dK)
        estimate = SlopeEstimate(T, dK or strike_step(S0, sigma, T), slope, 0.0, sigma, sigma, sigma)
    else:
        estimate = atm_slope(model, T, cfg, dK)

    sigma_atm = estimate.sigma_imp_atm
    mf_lower, mf_upper = model_free_slope_bounds(S0, S0, r, T, sigma_atm)
    try:
        c = drift_bound_for_model(model)
        clt = clt_slope_bounds(c, sigma_atm, S0, T, r)
        in_scope = True
    except OutOfScope:
        clt = SlopeBounds(math.nan, math.nan, math.nan, math.nan)
        in_scope = False
    report = SkewReport(
        float(T), S0, estimate.slope, estimate.se, clt.lower, clt.upper, clt.budget,
        mf_lower, mf_upper, clt.C, sigma_atm, in_scope,
    )
    return SkewReport(**{**report.__dict__, "verdicts": compare_bounds(report)})


def compare_bounds(report: SkewReport, n_se: float = SE_MULTIPLE) -> dict[str, Check]:
    """
    Verdicts (a) and (b) for one report.

    (a) the slope lies in the model-free band, within n_se standard errors;
    (b) the slope lies in the CLT band widened by the remainder budget, within
    n_se standard errors; not applicable outside the model scope.
    """
    slack = n_se * report.slope_se
    a = report.mf_lower - slack <= report.slope_est <= report.mf_upper + slack
    verdicts = {"a": Check.PASS if a else Check.FAIL}
    if not report.in_scope:
        verdicts["b"] = Check.NOT_APPLICABLE
        return verdicts
    lo, hi = report.clt_lower - report.budget - slack, report.clt_upper + report.budget + slack
    b = lo <= report.slope_est <= hi
    if b and not report.clt_lower - slack <= report.slope_est <= report.clt_upper + slack:
        logger.warning(
            f"T={report.T:g}: slope inside the CLT band only thanks to the heuristic remainder budget"
        )
    verdicts["b"] = Check.PASS if b else Check.FAIL
    return verdicts


@dataclass(frozen=True)
class WidthRatioResult:
    """Verdict (c): the CLT-to-model-free width ratio shrinks like sqrt(T)."""

    T: tuple[float, ...]
    ratios: tuple[float, ...]
    normalized: tuple[float, ...]
    decreasing: bool
    within_tolerance: bool

    @property
    def passed(self) -> bool:
        """Both conditions hold."""
        return self.decreasing and self.within_tolerance


def width_ratio_check(reports: Sequence[SkewReport], tolerance: float = 0.1) -> WidthRatioResult:
    """
    Check that width(CLT) / width(model-free) decreases proportionally to sqrt(T).

    Reports are ordered by decreasing maturity; ratio / sqrt(T) must stay within
    ``tolerance`` (relative) of its value at the largest maturity.
    """
    ordered = sorted(reports, key=lambda rep: -rep.T)
    if any(not rep.in_scope for rep in ordered):
        raise OutOfScope("the width ratio needs CLT bounds at every maturity")
    T = np.array([rep.T for rep in ordered])
    ratios = np.array([(rep.clt_upper - rep.clt_lower) / (rep.mf_upper - rep.mf_lower) for rep in ordered])
    normalized = ratios / np.sqrt(T)
    decreasing = bool(np.all(np.diff(ratios) < 0))
    within = bool(normalized[0] > 0 and np.all(np.abs(normalized / normalized[0] - 1.0) <= tolerance))
    return WidthRatioResult(tuple(T), tuple(ratios), tuple(normalized), decreasing, within)


def skew_frame(reports: Sequence[SkewReport]) -> pd.DataFrame:
    """Reports as a table."""
    rows = [
        {
            "T": rep.T,
            "slope_est": rep.slope_est,
            "slope_se": rep.slope_se,
            "clt_lower": rep.clt_lower,
            "clt_upper": rep.clt_upper,
            "budget": rep.budget,
            "mf_lower": rep.mf_lower,
            "mf_upper": rep.mf_upper,
            "verdicts": " ".join(f"{k}:{v}" for k, v in sorted(rep.verdicts.items())),
        }
        for rep in reports
    ]
    columns = [
        "T", "slope_est", "slope_se", "clt_lower", "clt_upper", "budget", "mf_lower", "mf_upper", "verdicts"
    ]
    return pd.DataFrame(rows, columns=columns)
