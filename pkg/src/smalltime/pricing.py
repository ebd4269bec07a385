"""
Option pricing layer.

Black-Scholes closed forms, implied volatility inversion, deterministic rate
curves, and Monte Carlo digital and call prices under catalog models. The ATM
digital limit check asks whether P(S_T > S_0) tends to 1/2 as T -> 0, which
is what the small-time CLT predicts for a non-degenerate limit.
"""

import logging
import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, replace
from typing import Any

import numpy as np
import pandas as pd
from scipy.optimize import brentq, newton

from .errors import ConfigError, DegenerateLimit, NoArbViolation, OutOfScope
from .models import ItemStatus, ModelSpec, check_assumptions, compensator, small_time_matrix
from .simulate import MCSample, SimConfig, derive_seed, simulate_terminal
from .stats import ProbEstimate, normal_cdf, normal_pdf, prob_exceed

logger = logging.getLogger(__name__)

IV_BRACKET = (1e-6, 10.0)
IV_RESIDUAL_TOL = 1e-10


def _check_positive(**values):
    for name, value in values.items():
        if np.any(~(np.asarray(value, dtype=float) > 0)):
            raise ValueError(f"{name} must be > 0, got {value}")


def bs_d1_d2(S0, K, r, sigma, T):
    """d1 = (log(S0/K) + (r + sigma^2/2) T) / (sigma sqrt T) and d2 = d1 - sigma sqrt T."""
    _check_positive(S0=S0, K=K, sigma=sigma, T=T)
    vol = sigma * np.sqrt(T)
    d1 = (np.log(S0 / K) + (r + 0.5 * sigma**2) * T) / vol
    return d1, d1 - vol


def bs_call(S0, K, r, sigma, T):
    """
    Black-Scholes call price.

    >>> round(float(bs_call(100.0, 100.0, 0.0, 0.2, 1.0)), 4)
    7.9656
    """
    d1, d2 = bs_d1_d2(S0, K, r, sigma, T)
    return S0 * normal_cdf(d1) - K * np.exp(-r * T) * normal_cdf(d2)


def bs_put(S0, K, r, sigma, T):
    """Black-Scholes put price."""
    d1, d2 = bs_d1_d2(S0, K, r, sigma, T)
    return K * np.exp(-r * T) * normal_cdf(-d2) - S0 * normal_cdf(-d1)


def bs_vega(S0, K, r, sigma, T):
    """Derivative of the call price in sigma."""
    d1, _ = bs_d1_d2(S0, K, r, sigma, T)
    return S0 * normal_pdf(d1) * np.sqrt(T)


def bs_digital(S0, K, r, sigma, T):
    """Cash-or-nothing digital e^{-rT} Phi(d2), the negative strike derivative of the call."""
    _, d2 = bs_d1_d2(S0, K, r, sigma, T)
    return np.exp(-r * T) * normal_cdf(d2)


@dataclass(frozen=True)
class VolQuote:
    """An implied volatility with the pricing residual it reproduces."""

    K: float
    T: float
    sigma_imp: float
    solver_residual: float

    def to_dict(self) -> dict[str, float]:
        """JSON-ready representation."""
        return dict(self.__dict__)


def implied_vol(C_target: float, S0: float, K: float, r: float, T: float) -> VolQuote:
    """
    Invert the Black-Scholes call price in sigma.

    A bracketing root finder (Brent) on [1e-6, 10] gives global convergence,
    followed by a Newton polish with vega that is kept only if it lowers the
    residual.

    Raises:
        NoArbViolation: if C_target is outside (max(S0 - K e^{-rT}, 0), S0) or
            below the price at the bracket floor
    """
    _check_positive(S0=S0, K=K, T=T)
    lower = max(S0 - K * math.exp(-r * T), 0.0)
    if not lower < C_target < S0:
        raise NoArbViolation(
            f"call price {C_target!r} is outside the no-arbitrage interval ({lower:.12g}, {S0:.12g})"
        )

    def residual(sigma: float) -> float:
        return float(bs_call(S0, K, r, sigma, T)) - C_target

    lo, hi = IV_BRACKET
    r_lo, r_hi = residual(lo), residual(hi)
    if r_lo > 0:
        raise NoArbViolation(f"call price {C_target!r} lies below the price at sigma={lo:g}")
    if r_hi < 0:
        raise NoArbViolation(f"call price {C_target!r} lies above the price at sigma={hi:g}")
    if r_lo == 0:
        return VolQuote(K, T, lo, 0.0)

    sigma = brentq(residual, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
    best = abs(residual(sigma))
    try:
        polished = newton(
            residual, sigma, fprime=lambda s: float(bs_vega(S0, K, r, s, T)), tol=1e-15, maxiter=8
        )
        if lo <= polished <= hi and abs(residual(polished)) < best:
            sigma, best = float(polished), abs(residual(polished))
    except (RuntimeError, ZeroDivisionError, ValueError) as e:
        logger.debug(f"Newton polish skipped: {e}")
    if best > IV_RESIDUAL_TOL * S0:
        logger.warning(
            f"implied vol residual {best:.3e} exceeds {IV_RESIDUAL_TOL:g} * S0 at K={K:g}, T={T:g}"
        )
    return VolQuote(K, T, float(sigma), best)


# -- rates ------------------------------------------------------------------------------


@dataclass(frozen=True)
class RateCurve:
    """
    Deterministic short rate, constant or piecewise constant.

    ``rates[i]`` applies between ``breaks[i - 1]`` and ``breaks[i]``; the first
    rate starts at 0 and the last runs forever.

    >>> round(RateCurve.step([0.5], [0.05, 0.01]).equivalent_rate(1.0), 12)
    0.03
    """

    breaks: tuple[float, ...]
    rates: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "breaks", tuple(float(b) for b in self.breaks))
        object.__setattr__(self, "rates", tuple(float(r) for r in self.rates))
        if len(self.rates) != len(self.breaks) + 1:
            raise ConfigError("a rate curve needs exactly one more rate than break points")
        if any(b <= 0 for b in self.breaks) or any(b1 >= b2 for b1, b2 in zip(self.breaks, self.breaks[1:])):
            raise ConfigError(f"break points must be positive and increasing, got {self.breaks}")

    @classmethod
    def constant(cls, r: float) -> "RateCurve":
        """Flat rate r."""
        return cls((), (r,))

    @classmethod
    def step(cls, breaks: Sequence[float], rates: Sequence[float]) -> "RateCurve":
        """Piecewise-constant rate."""
        return cls(tuple(breaks), tuple(rates))

    @classmethod
    def from_value(cls, value) -> "RateCurve":
        """A number, a RateCurve, or a JSON object {"breaks": [...], "rates": [...]}."""
        if isinstance(value, RateCurve):
            return value
        if isinstance(value, Mapping):
            unknown = set(value) - {"breaks", "rates"}
            if unknown:
                raise ConfigError(f"Unknown rate keys: {sorted(unknown)}")
            return cls.step(value.get("breaks", ()), value["rates"])
        return cls.constant(float(value))

    def integral(self, T: float) -> float:
        """Exact integral of r over [0, T]."""
        total, start = 0.0, 0.0
        for end, rate in zip((*self.breaks, math.inf), self.rates):
            stop = min(end, T)
            if stop > start:
                total += rate * (stop - start)
            start = end
            if start >= T:
                break
        return total

    def discount(self, T: float) -> float:
        """exp(-integral of r over [0, T])."""
        return math.exp(-self.integral(T))

    def equivalent_rate(self, T: float) -> float:
        """Flat rate with the same discount factor at T."""
        return self.integral(T) / T

    def to_dict(self) -> dict[str, Any]:
        """JSON-ready representation."""
        return {"breaks": list(self.breaks), "rates": list(self.rates)}


@dataclass(frozen=True)
class MarketParams:
    """Inputs of a single European quote."""

    S0: float
    K: float
    T: float
    r: RateCurve | float = 0.0

    def __post_init__(self):
        _check_positive(S0=self.S0, K=self.K, T=self.T)
        object.__setattr__(self, "r", RateCurve.from_value(self.r))

    @property
    def discount(self) -> float:
        """Discount factor to T."""
        return self.r.discount(self.T)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "MarketParams":
        """Build from a JSON object with keys S0, K, T and optionally r."""
        unknown = set(data) - {"S0", "K", "T", "r"}
        if unknown:
            raise ConfigError(f"Unknown market keys: {sorted(unknown)}")
        try:
            return cls(float(data["S0"]), float(data["K"]), float(data["T"]), data.get("r", 0.0))
        except KeyError as e:
            raise ConfigError(f"Market entry is missing {e}") from e


# -- Monte Carlo ------------------------------------------------------------------------


@dataclass(frozen=True)
class DigitalEstimate:
    """Discounted digital price with the probability estimate it came from."""

    K: float
    T: float
    probability: ProbEstimate
    discount: float

    @property
    def price(self) -> float:
        """Discounted probability."""
        return self.discount * self.probability.p_hat

    @property
    def ci_low(self) -> float:
        """Discounted lower interval end."""
        return self.discount * self.probability.ci_low

    @property
    def ci_high(self) -> float:
        """Discounted upper interval end."""
        return self.discount * self.probability.ci_high

    def to_dict(self) -> dict[str, Any]:
        """JSON-ready representation."""
        return {
            "K": self.K,
            "T": self.T,
            "price": self.price,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "discount": self.discount,
            "probability": self.probability.to_dict(),
        }


@dataclass(frozen=True)
class CallEstimate:
    """Discounted Monte Carlo call price with its standard error."""

    K: float
    T: float
    price: float
    se: float


def _require_price_model(model: ModelSpec):
    if not model.is_price_model:
        raise ValueError(f"{model.kind} in {model.coords} coordinates is not a positive-price model")


def _discount(model: ModelSpec, T: float, discount) -> float:
    curve = RateCurve.constant(model.rate) if discount is None else RateCurve.from_value(discount)
    return curve.discount(T)


def mc_digital(
    model: ModelSpec,
    K: float,
    T: float,
    discount: RateCurve | float | None = None,
    cfg: SimConfig | None = None,
    confidence: float = 0.99,
    sample: MCSample | None = None,
) -> DigitalEstimate:
    """
    Monte Carlo price of 1{S_T > K} under ``model``, discounted deterministically.

    The discount defaults to the model's own rate. A precomputed terminal
    ``sample`` may be supplied instead of ``cfg``.
    """
    _require_price_model(model)
    _check_positive(K=K, T=T)
    if sample is None:
        if cfg is None:
            raise ValueError("mc_digital needs either cfg or a sample")
        sample = simulate_terminal(model, T, cfg)
    estimate = prob_exceed(sample, 0, K, confidence)
    return DigitalEstimate(float(K), float(T), estimate, _discount(model, T, discount))


def mc_call(
    model: ModelSpec,
    K: float,
    T: float,
    discount: RateCurve | float | None = None,
    cfg: SimConfig | None = None,
    sample: MCSample | None = None,
) -> CallEstimate:
    """Monte Carlo call price with its standard error."""
    _require_price_model(model)
    _check_positive(K=K, T=T)
    if sample is None:
        if cfg is None:
            raise ValueError("mc_call needs either cfg or a sample")
        sample = simulate_terminal(model, T, cfg)
    df = _discount(model, T, discount)
    payoff = np.maximum(sample.values[:, 0] - K, 0.0)
    se = df * float(payoff.std(ddof=1)) / math.sqrt(payoff.size) if payoff.size > 1 else math.inf
    return CallEstimate(float(K), float(T), df * float(payoff.mean()), se)


def digital_limit(S0: float, K: float) -> float:
    """
    Short-maturity limit of P(S_T > K): 1 in the money, 0 out of the money, 1/2 at the money.

    >>> digital_limit(100.0, 50.0), digital_limit(100.0, 100.0), digital_limit(100.0, 150.0)
    (1.0, 0.5, 0.0)
    """
    _check_positive(S0=S0, K=K)
    if K < S0:
        return 1.0
    if K > S0:
        return 0.0
    return 0.5


@dataclass(frozen=True)
class DigitalLimitReport:
    """ATM digital estimates along a decreasing maturity schedule."""

    T_schedule: tuple[float, ...]
    levels: tuple[float, ...]
    estimates: tuple[DigitalEstimate, ...]
    passed: bool
    gated: bool

    @property
    def limit_estimate(self) -> ProbEstimate:
        """Undiscounted probability at the smallest maturity."""
        return self.estimates[-1].probability

    def to_frame(self) -> pd.DataFrame:
        """One row per maturity."""
        rows = [
            {
                "T": e.T,
                "level": level,
                "p_hat": e.probability.p_hat,
                "p_ci_low": e.probability.ci_low,
                "p_ci_high": e.probability.ci_high,
                "discount": e.discount,
                "price": e.price,
                "ci_low": e.ci_low,
                "ci_high": e.ci_high,
            }
            for e, level in zip(self.estimates, self.levels)
        ]
        return pd.DataFrame(rows)

    def to_dict(self) -> dict[str, Any]:
        """JSON-ready representation."""
        return {
            "T_schedule": list(self.T_schedule),
            "levels": list(self.levels),
            "estimates": [e.to_dict() for e in self.estimates],
            "passed": self.passed,
            "clt_gate": self.gated,
        }


def atm_digital_limit_check(
    model: ModelSpec,
    T_schedule: Sequence[float],
    cfg: SimConfig,
    martingale: bool = False,
    require_clt: bool = True,
    confidence: float = 0.99,
    discount: RateCurve | float | None = None,
) -> DigitalLimitReport:
    """
    Estimate P(X^1_T > level) along a decreasing maturity schedule and test the 1/2 limit.

    The level is the initial value (the ATM strike), or x0 plus the deterministic
    compensator when ``martingale`` is set. The check passes when the smallest-T
    interval for the undiscounted probability comes within |1 - DF| / 2 of 1/2.

    Args:
        model: catalog model
        T_schedule: strictly decreasing maturities
        cfg: simulation settings; each maturity uses its own derived seed
        martingale: compare against the compensated level x0 + A_T
        require_clt: refuse models whose limit is degenerate or whose CLT hypotheses fail
        confidence: interval confidence
        discount: rate curve; defaults to the model's own rate

    Raises:
        DegenerateLimit: the first coordinate has a degenerate Gaussian limit
        OutOfScope: an admissibility item is violated
        UnsupportedModel: the model has no diffusion part (with require_clt)
    """
    schedule = [float(T) for T in T_schedule]
    if not schedule or any(T <= 0 for T in schedule) or any(a <= b for a, b in zip(schedule, schedule[1:])):
        raise ValueError(f"T_schedule must be strictly decreasing and positive, got {schedule}")
    if require_clt:
        report = check_assumptions(model, schedule[0])
        violated = [i for i, s in report.items.items() if s == ItemStatus.VIOLATED]
        if violated:
            raise OutOfScope(f"{model.kind} violates CLT hypotheses {violated}; the 1/2 limit does not apply")
        L = small_time_matrix(model)
        if float(L[0] @ L[0]) <= 0.0:
            raise DegenerateLimit(f"{model.kind} has a degenerate limit in its first coordinate at x0")

    estimates, levels = [], []
    for i, T in enumerate(schedule):
        level = model.x0[0] + (float(compensator(model, T)[0]) if martingale else 0.0)
        sample = simulate_terminal(model, T, replace(cfg, seed=derive_seed(cfg.seed, i)))
        estimate = prob_exceed(sample, 0, level, confidence)
        df = _discount(model, T, discount)
        estimates.append(DigitalEstimate(level, T, estimate, df))
        levels.append(level)
        logger.info(
            f"ATM digital T={T:g}: P={estimate.p_hat:.5f} [{estimate.ci_low:.5f}, {estimate.ci_high:.5f}]"
        )

    last = estimates[-1]
    passed = last.probability.contains(0.5, slack=abs(1.0 - last.discount) / 2.0)
    return DigitalLimitReport(tuple(schedule), tuple(levels), tuple(estimates), passed, require_clt)


def batch_digital(
    model: ModelSpec,
    markets: Sequence[MarketParams | Mapping[str, Any]],
    cfg: SimConfig,
    confidence: float = 0.99,
) -> pd.DataFrame:
    """
    Price a list of digitals under ``model``.

    Each entry overrides the model's initial price and, where the model has a
    rate parameter, its drift rate with the entry's equivalent flat rate.

    Returns:
        DataFrame with columns K, T, price, ci_low, ci_high
    """
    _require_price_model(model)
    rows = []
    for i, market in enumerate(markets):
        market = market if isinstance(market, MarketParams) else MarketParams.from_dict(market)
        priced = model.with_x0((market.S0, *model.x0[1:]))
        if "r" in priced.params:
            priced = priced.with_params(r=market.r.equivalent_rate(market.T))
        estimate = mc_digital(
            priced, market.K, market.T, market.r, replace(cfg, seed=derive_seed(cfg.seed, i)), confidence
        )
        rows.append(
            {
                "K": market.K,
                "T": market.T,
                "price": estimate.price,
                "ci_low": estimate.ci_low,
                "ci_high": estimate.ci_high,
            }
        )
    return pd.DataFrame(rows, columns=["K", "T", "price", "ci_low", "ci_high"])
