"""
Small-time central limit checks.

For a model X and a smooth map f, (f(X_t) - f(x0)) / sqrt(t) converges to
N(0, V) with V = Df(x0) L (Df(x0) L)^T, L being the small-time limit of the
diffusion coefficient. This module builds the normalized samples, computes V
and tests the convergence with Kolmogorov-Smirnov statistics along Cramer-Wold
projections, both for fixed times and at the process level. It also evaluates
the small-time large deviations rate function of a one-dimensional diffusion.
"""

import logging
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field, replace
from enum import StrEnum
from typing import Any

import numpy as np
import pandas as pd
from scipy.integrate import quad

from .errors import MappingDomain, QuadratureFailure, ShapeMismatch
from .models import TOL_PSD, GaussianLimit, ModelSpec, small_time_matrix
from .simulate import MCSample, SimConfig, derive_seed, simulate_paths, simulate_terminal
from .stats import KS_LEVEL, KSReport, ProbEstimate, cramer_wold_directions, estimate_probability, ks_normal

logger = logging.getLogger(__name__)

FCLT_SE_MULTIPLE = 5.0
SHRINKAGE_QUANTILE = 0.99


class Verdict(StrEnum):
    """Outcome of a limit-law check."""

    CONSISTENT = "consistent"
    INCONSISTENT = "inconsistent"
    DEGENERATE = "degenerate"


# -- mappings ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MappingSpec:
    """
    A smooth map f: R^m -> R^n with its Jacobian at the initial point.

    ``f`` is vectorized over rows: an (k, m) array maps to (k, n).
    """

    name: str
    f: Callable[[np.ndarray], np.ndarray]
    Df_at_x0: np.ndarray
    x0: tuple[float, ...] = ()

    def __post_init__(self):
        jac = np.atleast_2d(np.asarray(self.Df_at_x0, dtype=float))
        jac.setflags(write=False)
        object.__setattr__(self, "Df_at_x0", jac)
        object.__setattr__(self, "x0", tuple(float(v) for v in self.x0))

    @property
    def in_dim(self) -> int:
        """Input dimension m."""
        return self.Df_at_x0.shape[1]

    @property
    def out_dim(self) -> int:
        """Output dimension n."""
        return self.Df_at_x0.shape[0]

    def __call__(self, x) -> np.ndarray:
        return self.f(np.atleast_2d(np.asarray(x, dtype=float)))


def identity(x0) -> MappingSpec:
    """f(x) = x."""
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    return MappingSpec("identity", lambda x: x, np.eye(x0.size), tuple(x0))


def log_map(x0) -> MappingSpec:
    """Coordinatewise logarithm; needs a positive initial point."""
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if np.any(x0 <= 0):
        raise MappingDomain(f"log map needs a positive initial point, got {x0.tolist()}")
    return MappingSpec("log", np.log, np.diag(1.0 / x0), tuple(x0))


def log_first(x0) -> MappingSpec:
    """Logarithm of the first coordinate (e.g. log-price of a Heston state)."""
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if x0[0] <= 0:
        raise MappingDomain(f"log map needs a positive first coordinate, got {x0[0]}")
    jac = np.zeros((1, x0.size))
    jac[0, 0] = 1.0 / x0[0]
    return MappingSpec("log_first", lambda x: np.log(x[:, :1]), jac, tuple(x0))


def square(x0) -> MappingSpec:
    """Coordinatewise square."""
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    return MappingSpec("square", np.square, np.diag(2.0 * x0), tuple(x0))


def linear(A, x0=None) -> MappingSpec:
    """Fixed linear map x -> A x."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    x0 = np.zeros(A.shape[1]) if x0 is None else np.atleast_1d(x0)
    return MappingSpec("linear", lambda x: x @ A.T, A, tuple(x0))


def project(i: int, x0) -> MappingSpec:
    """The i-th coordinate."""
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    row = np.zeros((1, x0.size))
    row[0, i] = 1.0
    return replace(linear(row, x0), name=f"project[{i}]")


def compose(g: MappingSpec, f: MappingSpec) -> MappingSpec:
    """
    g o f, with the chain-rule Jacobian Dg(f(x0)) Df(x0).

    ``g`` must have been built at f(x0).
    """
    if g.in_dim != f.out_dim:
        raise ShapeMismatch(f"cannot compose {g.name} (input {g.in_dim}) with {f.name} (output {f.out_dim})")
    return MappingSpec(f"{g.name}*{f.name}", lambda x: g.f(f.f(x)), g.Df_at_x0 @ f.Df_at_x0, f.x0)


MAPPINGS = {
    "identity": identity,
    "log": log_map,
    "log_first": log_first,
    "square": square,
}


def mapping_by_name(name: str, x0) -> MappingSpec:
    """Look up a catalog mapping built at ``x0``."""
    if name.startswith("project[") and name.endswith("]"):
        return project(int(name[len("project[") : -1]), x0)
    try:
        return MAPPINGS[name](x0)
    except KeyError as e:
        raise ValueError(f"Unknown mapping '{name}'; choose from {sorted(MAPPINGS)} or project[i]") from e


def finite_difference_jacobian(mapping: MappingSpec, x0=None, h: float = 1e-6) -> np.ndarray:
    """Central finite-difference Jacobian of ``mapping`` at ``x0`` (relative step)."""
    x0 = np.asarray(mapping.x0 if x0 is None else x0, dtype=float)
    cols = []
    for j in range(x0.size):
        step = h * max(1.0, abs(x0[j]))
        up, down = x0.copy(), x0.copy()
        up[j] += step
        down[j] -= step
        cols.append((mapping(up)[0] - mapping(down)[0]) / (2.0 * step))
    return np.column_stack(cols)


# -- limit law --------------------------------------------------------------------------


def limit_covariance(mapping: MappingSpec, L) -> GaussianLimit:
    """
    V = Df L (Df L)^T, symmetrized.

    >>> import numpy as np
    >>> limit_covariance(identity([0.0]), np.array([[0.2]])).V.round(12).tolist()
    [[0.04]]

    Raises:
        ShapeMismatch: if Df and L do not conform
    """
    L = np.atleast_2d(np.asarray(L, dtype=float))
    jac = mapping.Df_at_x0
    if jac.shape[1] != L.shape[0]:
        raise ShapeMismatch(f"Df is {jac.shape} but L is {L.shape}")
    DL = jac @ L
    V = DL @ DL.T
    return GaussianLimit(L, 0.5 * (V + V.T))


def normalized_increments(model: ModelSpec, mapping: MappingSpec, t: float, cfg: SimConfig) -> MCSample:
    """
    Sample (f(X_t) - f(x0)) / sqrt(t).

    Raises:
        MappingDomain: if a simulated state leaves the domain of f
    """
    sample = simulate_terminal(model, t, cfg)
    x0 = np.asarray(model.x0, dtype=float)[None, :]
    with np.errstate(invalid="ignore", divide="ignore"):
        y = (mapping(sample.values) - mapping(x0)) / math.sqrt(t)
    if not np.all(np.isfinite(y)):
        bad = int(np.sum(~np.all(np.isfinite(y), axis=1)))
        raise MappingDomain(
            f"{bad} simulated state(s) of {model.kind} at t={t:g} lie outside the domain of {mapping.name}"
        )
    meta = {**sample.meta, "mapping": mapping.name, "t": t}
    return MCSample(y, tuple(f"y{i + 1}" for i in range(y.shape[1])), meta, sample.jump_counts)


def _check_decreasing(schedule: Sequence[float], name: str, upper: float = math.inf) -> np.ndarray:
    arr = np.asarray(schedule, dtype=float)
    if arr.size == 0:
        raise ValueError(f"{name} must not be empty")
    if np.any(arr <= 0) or np.any(arr >= upper):
        raise ValueError(f"{name} must lie in (0, {upper:g}), got {arr.tolist()}")
    if np.any(np.diff(arr) >= 0):
        raise ValueError(f"{name} must be strictly decreasing, got {arr.tolist()}")
    return arr


def _degenerate_directions(limit: GaussianLimit, directions: np.ndarray) -> np.ndarray:
    lam_max = max(float(limit.eigenvalues.max()), 0.0)
    variances = np.einsum("ki,ij,kj->k", directions, limit.V, directions)
    if lam_max <= 0.0:
        return np.ones(len(directions), dtype=bool)
    return variances <= TOL_PSD * lam_max


@dataclass(frozen=True)
class CltCell:
    """One (time, direction) cell of a CLT check."""

    t: float
    direction_id: int
    variance: float
    ks: KSReport | None = None
    abs_quantile: float | None = None

    def to_dict(self) -> dict[str, Any]:
        """JSON-ready representation."""
        out = {"t": self.t, "direction_id": self.direction_id, "variance": self.variance}
        if self.ks is not None:
            out["ks"] = self.ks.to_dict()
        if self.abs_quantile is not None:
            out["abs_quantile_99"] = self.abs_quantile
        return out


@dataclass(frozen=True)
class CltReport:
    """Result of a fixed-time CLT check over a decreasing time schedule."""

    t_schedule: tuple[float, ...]
    limit: GaussianLimit
    directions: np.ndarray
    cells: tuple[CltCell, ...]
    verdict: Verdict
    shrinkage_ok: bool | None = None

    def to_frame(self) -> pd.DataFrame:
        """KS cells as a flat table; degenerate directions carry no KS test and are left out."""
        rows = [
            {
                "t": c.t,
                "direction_id": c.direction_id,
                "ks_stat": c.ks.statistic,
                "critical": c.ks.critical_001,
                "pass": c.ks.passed,
            }
            for c in self.cells
            if c.ks is not None
        ]
        return pd.DataFrame(rows, columns=["t", "direction_id", "ks_stat", "critical", "pass"])

    def to_dict(self) -> dict[str, Any]:
        """JSON-ready representation."""
        return {
            "verdict": str(self.verdict),
            "t_schedule": list(self.t_schedule),
            "limit": self.limit.to_dict(),
            "directions": self.directions.tolist(),
            "shrinkage_ok": self.shrinkage_ok,
            "cells": [c.to_dict() for c in self.cells],
        }


def clt_check(
    model: ModelSpec,
    mapping: MappingSpec,
    t_schedule: Sequence[float],
    cfg: SimConfig,
    level: float = KS_LEVEL,
) -> CltReport:
    """
    Test (f(X_t) - f(x0)) / sqrt(t) against N(0, V) along a decreasing schedule.

    Each time uses its own seed derived from ``cfg.seed``. For every Cramer-Wold
    direction d with d^T V d > 0 the projected sample is KS-tested against
    N(0, d^T V d); degenerate directions get the shrinkage check instead (the
    99th percentile of |projection| must decrease along the schedule).

    Args:
        model: catalog model with a diffusion limit
        mapping: f, built at the model's initial point
        t_schedule: strictly decreasing positive times
        cfg: simulation settings
        level: KS significance level

    Returns:
        CltReport; the verdict is ``degenerate`` if V is rank deficient, else
        ``consistent`` iff every KS test at the smallest time passes
    """
    schedule = _check_decreasing(t_schedule, "t_schedule")
    limit = limit_covariance(mapping, small_time_matrix(model))
    directions = cramer_wold_directions(mapping.out_dim)
    degenerate = _degenerate_directions(limit, directions)
    variances = np.einsum("ki,ij,kj->k", directions, limit.V, directions)

    cells = []
    quantiles = []
    for i, t in enumerate(schedule):
        sample = normalized_increments(model, mapping, float(t), replace(cfg, seed=derive_seed(cfg.seed, i)))
        projections = sample.values @ directions.T
        q_row = []
        for k in range(len(directions)):
            if degenerate[k]:
                q = float(np.quantile(np.abs(projections[:, k]), SHRINKAGE_QUANTILE))
                q_row.append(q)
                cells.append(CltCell(float(t), k, float(variances[k]), abs_quantile=q))
            else:
                ks = ks_normal(projections[:, k], float(variances[k]), level)
                cells.append(CltCell(float(t), k, float(variances[k]), ks=ks))
        quantiles.append(q_row)
        passes = sum(c.ks is not None and c.ks.passed for c in cells[-len(directions) :])
        logger.info(f"CLT t={t:g}: {passes}/{int((~degenerate).sum())} KS passes")

    shrinkage_ok = None
    if degenerate.any():
        q = np.asarray(quantiles)
        shrinkage_ok = bool(np.all(np.diff(q, axis=0) < 0)) if len(schedule) > 1 else None

    smallest = float(schedule[-1])
    if limit.is_degenerate():
        verdict = Verdict.DEGENERATE
    elif all(c.ks.passed for c in cells if c.t == smallest and c.ks is not None):
        verdict = Verdict.CONSISTENT
    else:
        verdict = Verdict.INCONSISTENT
    logger.info(f"CLT verdict for {model.kind} under {mapping.name}: {verdict}")
    times = tuple(float(t) for t in schedule)
    return CltReport(times, limit, directions, tuple(cells), verdict, shrinkage_ok)


# -- process level ----------------------------------------------------------------------


@dataclass(frozen=True)
class FcltCell:
    """One statistic of a process-level check."""

    u: float
    check: str
    s: float
    t: float
    direction_id: int
    statistic: float
    tolerance: float
    passed: bool


@dataclass(frozen=True)
class FcltReport:
    """Result of a process-level check over decreasing scale factors."""

    u_schedule: tuple[float, ...]
    t_grid: tuple[float, ...]
    limit: GaussianLimit
    cells: tuple[FcltCell, ...]
    verdict: Verdict
    jump_fractions: dict[float, ProbEstimate] = field(default_factory=dict)
    expected_jump_fractions: dict[float, float] = field(default_factory=dict)

    def passed_for(self, u: float) -> bool:
        """True when every check at scale ``u`` passes."""
        checks = [c.passed for c in self.cells if c.u == u]
        if u in self.jump_fractions:
            checks.append(self.jump_fractions[u].contains(self.expected_jump_fractions[u]))
        return all(checks)

    def to_frame(self) -> pd.DataFrame:
        """All statistics as a flat table."""
        return pd.DataFrame(
            [c.__dict__ for c in self.cells],
            columns=["u", "check", "s", "t", "direction_id", "statistic", "tolerance", "passed"],
        )

    def to_dict(self) -> dict[str, Any]:
        """JSON-ready representation."""
        return {
            "verdict": str(self.verdict),
            "u_schedule": list(self.u_schedule),
            "t_grid": list(self.t_grid),
            "limit": self.limit.to_dict(),
            "cells": [c.__dict__ for c in self.cells],
            "jump_fractions": {
                str(u): {**est.to_dict(), "expected": self.expected_jump_fractions[u]}
                for u, est in self.jump_fractions.items()
            },
            "untested": "tightness is not testable from finitely many paths",
        }


def fclt_check(
    model: ModelSpec,
    mapping: MappingSpec,
    u_schedule: Sequence[float],
    t_grid: Sequence[float],
    cfg: SimConfig,
    level: float = KS_LEVEL,
) -> FcltReport:
    """
    Check finite-dimensional laws of Y^u_t = (f(X_{ut}) - f(x0)) / sqrt(u).

    At each scale u the rescaled process should look like a Brownian motion
    with covariance V:

    - marginals: KS of each projection of Y_t against N(0, t d^T V d);
    - covariance: Cov(Y_s, Y_t) against min(s, t) d^T V d within 5 standard errors;
    - orthogonality: corr(Y_s, Y_t - Y_s) within 5 / sqrt(n) of 0 for consecutive times.

    For jump models the fraction of paths with a jump before u * max(t_grid)
    is compared with 1 - exp(-lambda u T) at 99.7% confidence.
    """
    schedule = _check_decreasing(u_schedule, "u_schedule", upper=1.0)
    grid = np.asarray([t for t in t_grid if t > 0], dtype=float)
    if grid.size == 0 or np.any(np.diff(grid) <= 0):
        raise ValueError(f"t_grid must contain strictly increasing positive times, got {list(t_grid)}")
    limit = limit_covariance(mapping, small_time_matrix(model))
    directions = cramer_wold_directions(mapping.out_dim)
    degenerate = _degenerate_directions(limit, directions)
    variances = np.einsum("ki,ij,kj->k", directions, limit.V, directions)
    x0 = np.asarray(model.x0, dtype=float)[None, :]
    f0 = mapping(x0)

    cells: list[FcltCell] = []
    fractions: dict[float, ProbEstimate] = {}
    expected: dict[float, float] = {}
    for i, u in enumerate(schedule):
        u = float(u)
        sim_cfg = replace(cfg, t_grid=(0.0, *(u * grid)), seed=derive_seed(cfg.seed, i))
        sample = simulate_paths(model, sim_cfg)
        states = sample.states()[:, 1:, :]
        n = states.shape[0]
        with np.errstate(invalid="ignore", divide="ignore"):
            Y = np.stack([mapping(states[:, j, :]) - f0 for j in range(grid.size)], axis=1) / math.sqrt(u)
        if not np.all(np.isfinite(Y)):
            raise MappingDomain(f"simulated states at scale u={u:g} lie outside the domain of {mapping.name}")

        for k, d in enumerate(directions):
            if degenerate[k]:
                continue
            P = Y @ d
            var = float(variances[k])
            for j, t in enumerate(grid):
                ks = ks_normal(P[:, j], t * var, level)
                cells.append(FcltCell(u, "marginal", t, t, k, ks.statistic, ks.critical_001, ks.passed))
            centered = P - P.mean(axis=0)
            for a in range(grid.size):
                for b in range(a, grid.size):
                    prod = centered[:, a] * centered[:, b]
                    est = float(prod.mean())
                    se = float(prod.std(ddof=1) / math.sqrt(n))
                    target = var * min(grid[a], grid[b])
                    tol = FCLT_SE_MULTIPLE * se
                    gap = est - target
                    cells.append(FcltCell(u, "covariance", grid[a], grid[b], k, gap, tol, abs(gap) <= tol))
            for a in range(grid.size - 1):
                increment = P[:, a + 1] - P[:, a]
                corr = float(np.corrcoef(P[:, a], increment)[0, 1])
                tol = FCLT_SE_MULTIPLE / math.sqrt(n)
                passed = abs(corr) <= tol
                cells.append(FcltCell(u, "orthogonality", grid[a], grid[a + 1], k, corr, tol, passed))

        if sample.jump_counts is not None and model.jump is not None:
            fractions[u] = estimate_probability(sample.jump_counts[:, -1] > 0, confidence=0.997)
            expected[u] = -math.expm1(-model.jump.intensity * u * grid[-1])
        at_u = [c.passed for c in cells if c.u == u]
        logger.info(f"FCLT u={u:g}: {sum(at_u)}/{len(at_u)} checks pass")

    report = FcltReport(
        tuple(float(u) for u in schedule),
        tuple(float(t) for t in grid),
        limit,
        tuple(cells),
        Verdict.CONSISTENT,
        fractions,
        expected,
    )
    if limit.is_degenerate():
        verdict = Verdict.DEGENERATE
    elif report.passed_for(float(schedule[-1])):
        verdict = Verdict.CONSISTENT
    else:
        verdict = Verdict.INCONSISTENT
    return replace(report, verdict=verdict)


# -- large deviations -------------------------------------------------------------------

LDP_EPSABS = 1e-10
LDP_SIGMA_SAMPLES = 65


def ldp_rate(sigma_fn: Callable[[float], float], x0: float, eps: float) -> float:
    """
    Small-time large deviations rate I(x0 + eps) = (integral from x0 to x0 + eps of du / sigma(u))^2 / 2.

    >>> round(ldp_rate(lambda u: u, 1.0, 1.0), 6)
    0.240227

    Raises:
        ValueError: if sigma is non-positive somewhere on the interval (detected by sampling)
        QuadratureFailure: if QUADPACK does not meet the tolerance
    """
    if eps == 0:
        return 0.0
    lo, hi = sorted((float(x0), float(x0) + float(eps)))
    sampled = np.array([sigma_fn(u) for u in np.linspace(lo, hi, LDP_SIGMA_SAMPLES)], dtype=float)
    if not np.all(np.isfinite(sampled)) or np.any(sampled <= 0):
        raise ValueError(f"sigma must be finite and positive on [{lo:g}, {hi:g}]")
    result = quad(
        lambda u: 1.0 / sigma_fn(u), lo, hi, epsabs=LDP_EPSABS, epsrel=1e-12, limit=200, full_output=1
    )
    if len(result) > 3:
        raise QuadratureFailure(f"ldp_rate quadrature on [{lo:g}, {hi:g}] failed: {result[3]}")
    return 0.5 * result[0] ** 2


def ldp_second_derivative(sigma_fn: Callable[[float], float], x0: float, h: float = 1e-3) -> float:
    """Central second difference of I at x0; tends to 1 / sigma(x0)^2, the inverse CLT variance."""
    return (ldp_rate(sigma_fn, x0, h) + ldp_rate(sigma_fn, x0, -h)) / (h * h)


def ldp_tail_estimate(sigma_fn: Callable[[float], float], x0: float, eps: float, t: float) -> float:
    """Leading-order tail exp(-I(x0 + eps) / t)."""
    if not t > 0:
        raise ValueError(f"t must be > 0, got {t}")
    return math.exp(-ldp_rate(sigma_fn, x0, eps) / t)
