"""
Girsanov-Hoelder bounds on the probability that a diffusion is above its start.

For dX = b dt + sigma dB with ||sigma^-1 b|| <= c, a change of measure and
Hoelder's inequality give

    e^{f1(t)} <= P(X^1_t > X^1_0) <= e^{f2(t)},

with f1, f2 depending on (c, t) only through k = c^2 t. Both sides behave like
1/2 -+ sqrt(log 2 / 2) c sqrt(t) for small t. The upper bound needs its
optimal Hoelder exponent p = sqrt(2 log 2 / k) to exceed 1, i.e.
t < t* = 2 log 2 / c^2; beyond that horizon it is replaced by the trivial 1.
"""

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, replace
from typing import Any

import numpy as np
import pandas as pd

from .errors import OutOfScope
from .models import Coordinates, ModelKind, ModelSpec
from .simulate import SimConfig, derive_seed, simulate_terminal
from .stats import ProbEstimate, normal_cdf, prob_exceed

logger = logging.getLogger(__name__)

LOG2 = math.log(2.0)
# sqrt(log 2 / 2): slope of the sqrt(t) term in both expansions.
EXPANSION_SLOPE = math.sqrt(LOG2 / 2.0)
# Times at which the sqrt(t) expansions are checked.
EXPANSION_WINDOW = 1e-2
EXPANSION_GROWTH_TOL = 0.1


@dataclass(frozen=True)
class DriftDiffusionBound:
    """The constant c = sup |sigma^-1 b|, in units of 1 / sqrt(time)."""

    c: float

    def __post_init__(self):
        if not math.isfinite(self.c) or self.c < 0:
            raise ValueError(f"c must be finite and >= 0, got {self.c}")

    @property
    def horizon(self) -> float:
        """Validity horizon t* = 2 log 2 / c^2 of the upper bound (inf when c = 0)."""
        return math.inf if self.c == 0 else 2.0 * LOG2 / self.c**2


@dataclass(frozen=True)
class BoundsCurve:
    """Bound functions evaluated on a time grid."""

    c: float
    t_grid: np.ndarray
    f1: np.ndarray
    f2: np.ndarray
    e_f1: np.ndarray
    e_f2: np.ndarray
    expansion_lo: np.ndarray
    expansion_hi: np.ndarray
    p_lower: np.ndarray
    p_upper: np.ndarray
    horizon: float

    @property
    def in_horizon(self) -> np.ndarray:
        """True where t < t*, i.e. where the upper bound is the non-trivial formula."""
        return self.t_grid < self.horizon

    def to_frame(self) -> pd.DataFrame:
        """One row per time."""
        return pd.DataFrame(
            {
                "t": self.t_grid,
                "f1": self.f1,
                "f2": self.f2,
                "e_f1": self.e_f1,
                "e_f2": self.e_f2,
                "expansion_lo": self.expansion_lo,
                "expansion_hi": self.expansion_hi,
                "p_lower": self.p_lower,
                "p_upper": self.p_upper,
                "in_horizon": self.in_horizon,
            }
        )


def _as_grid(t_grid) -> np.ndarray:
    t = np.atleast_1d(np.asarray(t_grid, dtype=float))
    if t.size == 0 or np.any(~(t > 0)) or np.any(~np.isfinite(t)):
        raise ValueError(f"bound times must be finite and > 0, got {t.tolist()}")
    return t


def _bound(c) -> DriftDiffusionBound:
    return c if isinstance(c, DriftDiffusionBound) else DriftDiffusionBound(float(c))


def girsanov_bounds(c: DriftDiffusionBound | float, t_grid: Sequence[float]) -> BoundsCurve:
    """
    Evaluate f1, f2, their exponentials, the sqrt(t) expansions and the optimal exponents.

    The exponentials use the rearranged closed forms
    e^{f1} = 2^{-p_lower^2} and e^{f2} = exp(-(k / 2) (p_upper - 1)^2), with
    p_upper - 1 formed as (2 log 2 - k) / (sqrt(k) (sqrt(2 log 2) + sqrt(k)))
    so nothing cancels near the horizon. c = 0 gives exactly 1/2 on both sides.

    >>> curve = girsanov_bounds(0.5, [0.01])
    >>> round(float(curve.e_f1[0]), 5), round(float(curve.e_f2[0]), 5)
    (0.47083, 0.52966)
    """
    bound = _bound(c)
    t = _as_grid(t_grid)
    n = t.size
    if bound.c == 0:
        half = np.full(n, 0.5)
        return BoundsCurve(
            0.0, t, np.full(n, -LOG2), np.full(n, -LOG2), half, half.copy(), half.copy(), half.copy(),
            np.ones(n), np.full(n, np.inf), math.inf,
        )

    k = bound.c**2 * t
    root_k = np.sqrt(k)
    a = root_k / math.sqrt(2.0 * LOG2)
    p_lower = 1.0 + a
    f1 = -LOG2 * p_lower**2
    e_f1 = np.exp2(-(p_lower**2))

    in_horizon = t < bound.horizon
    with np.errstate(divide="ignore", invalid="ignore"):
        p_upper = np.where(in_horizon, 1.0 / a, np.nan)
        gap = (2.0 * LOG2 - k) / (root_k * (math.sqrt(2.0 * LOG2) + root_k))
    f2 = np.where(in_horizon, -0.5 * k * gap**2, 0.0)
    e_f2 = np.where(in_horizon, np.exp(f2), 1.0)
    if not in_horizon.all():
        logger.warning(
            f"{int((~in_horizon).sum())} time(s) at or beyond the horizon t*={bound.horizon:.6g}: "
            "upper bound set to 1"
        )

    spread = EXPANSION_SLOPE * bound.c * np.sqrt(t)
    return BoundsCurve(
        bound.c, t, f1, f2, e_f1, e_f2, 0.5 - spread, 0.5 + spread, p_lower, p_upper, bound.horizon
    )


def conjugate_exponent(p):
    """q with 1/p + 1/q = 1."""
    p = np.asarray(p, dtype=float)
    return p / (p - 1.0)


def expansion_error(c: DriftDiffusionBound | float, t_grid: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    """
    Remainder ratios |e^{f_i}(t) - (1/2 -+ sqrt(log 2 / 2) c sqrt(t))| / t.

    Returns:
        (lower ratio, upper ratio) per time

    Raises:
        ValueError: for times outside (0, min(t*, 1))
    """
    bound = _bound(c)
    t = _as_grid(t_grid)
    if np.any(t >= min(bound.horizon, 1.0)):
        raise ValueError(f"expansion_error needs t < min(t*, 1) = {min(bound.horizon, 1.0):g}")
    curve = girsanov_bounds(bound, t)
    return np.abs(curve.e_f1 - curve.expansion_lo) / t, np.abs(curve.e_f2 - curve.expansion_hi) / t


def expansion_limit_ratio(c: DriftDiffusionBound | float) -> float:
    """
    Common limit (2 log 2 - 1) c^2 / 4 of both remainder ratios as t -> 0.

    >>> round(expansion_limit_ratio(1.0), 6)
    0.096574
    """
    return (2.0 * LOG2 - 1.0) * _bound(c).c ** 2 / 4.0


def expansion_bounded(
    c: DriftDiffusionBound | float,
    t_grid: Sequence[float],
    tolerance: float = EXPANSION_GROWTH_TOL,
) -> bool:
    """
    Check that the remainder ratios do not grow as t decreases.

    Only times up to EXPANSION_WINDOW are used. Each ratio must stay within
    ``tolerance`` (relative) of the larger of its limit and its value at the
    largest time: the lower ratio rises toward the largest time, the upper one
    toward the limit.
    """
    t = _as_grid(t_grid)
    t = t[t <= EXPANSION_WINDOW]
    if t.size == 0:
        raise ValueError(f"expansion_bounded needs times <= {EXPANSION_WINDOW:g}")
    order = np.argsort(t)
    lower, upper = expansion_error(c, t[order])
    limit = expansion_limit_ratio(c)
    for name, ratio in (("lower", lower), ("upper", upper)):
        ceiling = (1.0 + tolerance) * max(limit, float(ratio[-1]))
        if not np.all(np.isfinite(ratio)) or float(ratio.max()) > ceiling:
            logger.warning(
                f"{name} remainder ratio grows as t decreases: max {float(ratio.max()):.6g} > {ceiling:.6g}"
            )
            return False
    return True


def drift_bound_for_model(model: ModelSpec) -> DriftDiffusionBound:
    """
    The constant c = sup_t |sigma(t)^-1 b(t)| for models whose diffusion is a function of time only.

    GBM is read in log coordinates whatever its stored form, where the drift is
    r - sigma^2 / 2.

    Raises:
        OutOfScope: for state-dependent or missing diffusion coefficients
    """
    p = model.params
    if model.kind in (ModelKind.DRIFTED_BM, ModelKind.JUMP_DIFFUSION):
        if p["sigma"] == 0:
            raise OutOfScope("sigma = 0: the drift cannot be measured against the diffusion")
        # The same drift b in each of m coordinates.
        return DriftDiffusionBound(abs(p["b"]) * math.sqrt(model.dim) / p["sigma"])
    if model.kind == ModelKind.GBM:
        if p["sigma"] == 0:
            raise OutOfScope("sigma = 0: the drift cannot be measured against the diffusion")
        return DriftDiffusionBound(abs(p["r"] - 0.5 * p["sigma"] ** 2) / p["sigma"])
    raise OutOfScope(
        f"{model.kind} has a state-dependent or missing diffusion; the bounds need sigma(t) only"
    )


def bracketing_probability(model: ModelSpec, t: float) -> float:
    """
    Exact P(X^1_t > X^1_0) for the Gaussian-increment models.

    >>> from smalltime.models import drifted_bm
    >>> round(bracketing_probability(drifted_bm(b=0.5), 0.01), 6)
    0.519939
    """
    p = model.params
    if model.kind == ModelKind.DRIFTED_BM:
        drift, sigma = p["b"], p["sigma"]
    elif model.kind == ModelKind.GBM:
        drift, sigma = p["r"] - 0.5 * p["sigma"] ** 2, p["sigma"]
    else:
        raise OutOfScope(f"No closed-form exceedance probability for {model.kind}")
    if sigma == 0:
        return float(drift > 0)
    return float(normal_cdf(drift * math.sqrt(t) / sigma))


@dataclass(frozen=True)
class BracketingResult:
    """Bracketing outcome at one time."""

    t: float
    e_f1: float
    e_f2: float
    probability: float
    estimate: ProbEstimate | None
    in_horizon: bool
    passed: bool

    def to_dict(self) -> dict[str, Any]:
        """JSON-ready representation."""
        out = {k: v for k, v in self.__dict__.items() if k != "estimate"}
        out["estimate"] = None if self.estimate is None else self.estimate.to_dict()
        return out


def verify_bracketing(
    model: ModelSpec,
    t_grid: Sequence[float],
    cfg: SimConfig | None = None,
    confidence: float = 0.99,
) -> list[BracketingResult]:
    """
    Check e^{f1(t)} <= P(X^1_t > X^1_0) <= e^{f2(t)} on a time grid.

    DriftedBM and GBM use the exact Gaussian probability and require containment.
    Other in-scope models (JumpDiffusion) are estimated by Monte Carlo and pass
    when the Wilson interval overlaps the band.
    """
    bound = drift_bound_for_model(model)
    curve = girsanov_bounds(bound, t_grid)
    exact = model.kind in (ModelKind.DRIFTED_BM, ModelKind.GBM)
    if not exact and cfg is None:
        raise ValueError(f"Monte Carlo settings are required to check {model.kind}")
    level = model.x0[0]
    results = []
    for i, t in enumerate(curve.t_grid):
        lo, hi = float(curve.e_f1[i]), float(curve.e_f2[i])
        if exact:
            prob = bracketing_probability(model, float(t))
            estimate = None
            passed = lo <= prob <= hi
        else:
            sample = simulate_terminal(model, float(t), replace(cfg, seed=derive_seed(cfg.seed, i)))
            estimate = prob_exceed(sample, 0, level, confidence)
            prob = estimate.p_hat
            passed = estimate.ci_low <= hi and estimate.ci_high >= lo
        results.append(BracketingResult(float(t), lo, hi, prob, estimate, bool(curve.in_horizon[i]), passed))
        logger.debug(f"bracketing t={t:g}: [{lo:.6f}, {hi:.6f}] vs {prob:.6f} -> {passed}")
    passes = sum(r.passed for r in results)
    logger.info(f"bracketing {model.kind} with c={bound.c:g}: {passes}/{len(results)} pass")
    return results


def bracketing_frame(results: Sequence[BracketingResult]) -> pd.DataFrame:
    """Bracketing results as a table."""
    rows = []
    for r in results:
        row = {"t": r.t, "e_f1": r.e_f1, "e_f2": r.e_f2, "probability": r.probability}
        row["ci_low"] = r.estimate.ci_low if r.estimate else np.nan
        row["ci_high"] = r.estimate.ci_high if r.estimate else np.nan
        row["in_horizon"] = r.in_horizon
        row["pass"] = r.passed
        rows.append(row)
    columns = ["t", "e_f1", "e_f2", "probability", "ci_low", "ci_high", "in_horizon", "pass"]
    return pd.DataFrame(rows, columns=columns)
