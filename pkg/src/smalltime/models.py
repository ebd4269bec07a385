"""
Model Catalog

A closed catalog of semimartingale models with analytic knowledge of their
coefficients. Each model is described by an immutable ``ModelSpec``; the
coefficients b(t, x) and sigma(t, x) are exposed through a vectorized
``CoefficientView`` so that the simulator and the admissibility checks share a
single definition.

The admissibility report answers, item by item, whether the small-time CLT
hypotheses (bounded drift up to a stopping time, locally bounded diffusion with
a deterministic limit L at time zero) hold for a catalog model.
"""

import hashlib
import json
import logging
import math
from collections.abc import Callable, Mapping
from dataclasses import dataclass, field
from enum import StrEnum
from typing import Any

import numpy as np
from scipy.special import ndtri

from .errors import ConfigError, ShapeMismatch, UnsupportedModel

logger = logging.getLogger(__name__)

# Eigenvalues below TOL_PSD * lambda_max count as zero.
TOL_PSD = 1e-10


class ModelKind(StrEnum):
    """Kinds of models in the catalog."""

    DRIFTED_BM = "DriftedBM"
    GBM = "GBM"
    CEV = "CEV"
    HESTON = "Heston"
    SQUARED_BESSEL = "SquaredBessel"
    SQUARED_BM = "SquaredBM"
    QUANTILE_DRIFT_BM = "QuantileDriftBM"
    POISSON_MARTINGALE = "PoissonMartingale"
    JUMP_DIFFUSION = "JumpDiffusion"


class Coordinates(StrEnum):
    """State coordinates for models that have a price and a log-price form."""

    PRICE = "price"
    LOG = "log"


class JumpLaw(StrEnum):
    """Symmetric jump-size laws. Only symmetric laws are representable."""

    TWO_POINT = "two_point"
    UNIFORM = "uniform"


# Parameter names per kind, with defaults. ``None`` marks a required parameter.
_PARAMETERS: dict[ModelKind, dict[str, float | None]] = {
    ModelKind.DRIFTED_BM: {"b": 0.0, "sigma": 1.0},
    ModelKind.GBM: {"r": 0.0, "sigma": None},
    ModelKind.CEV: {"r": 0.0, "sigma": None, "beta": None},
    ModelKind.HESTON: {"r": 0.0, "kappa": None, "theta": None, "xi": None, "rho": 0.0},
    ModelKind.SQUARED_BESSEL: {"delta": None},
    ModelKind.SQUARED_BM: {},
    ModelKind.QUANTILE_DRIFT_BM: {"p": None},
    ModelKind.POISSON_MARTINGALE: {"rate": 1.0},
    ModelKind.JUMP_DIFFUSION: {"b": 0.0, "sigma": 1.0},
}

_MULTI_DIM_KINDS = {ModelKind.DRIFTED_BM, ModelKind.JUMP_DIFFUSION}
_LOG_CAPABLE_KINDS = {ModelKind.GBM, ModelKind.HESTON}
_JSON_KEYS = {"kind", "params", "x0", "dim", "coords", "jump"}


@dataclass(frozen=True)
class JumpSpec:
    """
    Finite-activity compound Poisson jumps with a symmetric size law.

    Args:
        intensity: expected number of jumps per unit time
        law: two-point (+a or -a with probability 1/2 each) or uniform on [-a, a]
        a: jump scale
    """

    intensity: float
    law: JumpLaw = JumpLaw.TWO_POINT
    a: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "law", JumpLaw(self.law))
        if not self.intensity >= 0 or not math.isfinite(self.intensity):
            raise ConfigError(f"Jump intensity must be finite and >= 0, got {self.intensity}")
        if not self.a >= 0 or not math.isfinite(self.a):
            raise ConfigError(f"Jump scale must be finite and >= 0, got {self.a}")

    @property
    def size_variance(self) -> float:
        """Variance of a single jump size."""
        if self.law == JumpLaw.TWO_POINT:
            return self.a**2
        return self.a**2 / 3.0

    def sample_sizes(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Draw ``size`` independent jump sizes."""
        if self.law == JumpLaw.TWO_POINT:
            return self.a * rng.choice(np.array([-1.0, 1.0]), size=size)
        return rng.uniform(-self.a, self.a, size=size)

    def sum_sizes(self, rng: np.random.Generator, counts: np.ndarray) -> np.ndarray:
        """Sum ``counts[i]`` independent jump sizes for every entry of ``counts``."""
        counts = np.asarray(counts, dtype=np.int64)
        if self.law == JumpLaw.TWO_POINT:
            ups = rng.binomial(counts, 0.5)
            return self.a * (2.0 * ups - counts)
        total = int(counts.sum())
        sizes = rng.uniform(-self.a, self.a, size=total)
        owners = np.repeat(np.arange(counts.size), counts.ravel())
        return np.bincount(owners, weights=sizes, minlength=counts.size).reshape(counts.shape)

    def to_dict(self) -> dict[str, Any]:
        """JSON-ready representation."""
        return {"intensity": self.intensity, "law": str(self.law), "a": self.a}


@dataclass(frozen=True)
class ModelSpec:
    """
    A tagged description of a catalog model.

    Args:
        kind: which catalog model
        params: named real parameters; missing optional ones are filled with defaults
        x0: initial state, one entry per coordinate
        dim: state dimension m
        coords: price or log-price state (GBM and Heston only)
        jump: jump description (JumpDiffusion only)
    """

    kind: ModelKind
    params: Mapping[str, float] = field(default_factory=dict)
    x0: tuple[float, ...] = (0.0,)
    dim: int = 1
    coords: Coordinates = Coordinates.PRICE
    jump: JumpSpec | None = None

    def __post_init__(self):
        try:
            kind = ModelKind(self.kind)
        except ValueError as e:
            raise ConfigError(f"Unknown model kind: {self.kind}") from e
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "coords", Coordinates(self.coords))
        object.__setattr__(self, "x0", tuple(float(v) for v in np.atleast_1d(self.x0)))
        object.__setattr__(self, "params", self._resolve_params(kind, self.params))
        if isinstance(self.jump, Mapping):
            try:
                object.__setattr__(self, "jump", JumpSpec(**self.jump))
            except TypeError as e:
                raise ConfigError(f"Invalid jump description {dict(self.jump)}: {e}") from e
        self._validate()

    @staticmethod
    def _resolve_params(kind: ModelKind, given: Mapping[str, float]) -> dict[str, float]:
        schema = _PARAMETERS[kind]
        unknown = set(given) - set(schema)
        if unknown:
            raise ConfigError(f"Unknown parameters for {kind}: {sorted(unknown)}")
        resolved = {}
        for name, default in schema.items():
            if name in given:
                resolved[name] = float(given[name])
            elif default is None:
                raise ConfigError(f"Missing required parameter '{name}' for {kind}")
            else:
                resolved[name] = float(default)
        return resolved

    def _validate(self):
        p = self.params
        if self.dim < 1:
            raise ConfigError(f"dim must be >= 1, got {self.dim}")
        if len(self.x0) != self.dim:
            raise ConfigError(f"x0 has {len(self.x0)} entries but dim is {self.dim}")
        if not all(math.isfinite(v) for v in self.x0):
            raise ConfigError("x0 must be finite")
        if self.kind == ModelKind.HESTON and self.dim != 2:
            raise ConfigError("Heston state is (price, variance): dim must be 2")
        if self.kind not in _MULTI_DIM_KINDS and self.kind != ModelKind.HESTON and self.dim != 1:
            raise ConfigError(f"{self.kind} is one-dimensional")
        if self.coords == Coordinates.LOG and self.kind not in _LOG_CAPABLE_KINDS:
            raise ConfigError(f"{self.kind} has no log-coordinate form")
        if (self.jump is not None) != (self.kind == ModelKind.JUMP_DIFFUSION):
            raise ConfigError("A jump description is required for JumpDiffusion and only allowed there")
        for name in ("sigma", "xi", "kappa", "theta", "delta", "rate"):
            if name in p and p[name] < 0:
                raise ConfigError(f"{name} must be >= 0, got {p[name]}")
        if self.kind == ModelKind.CEV:
            if not 0 < p["beta"] <= 1:
                raise ConfigError(f"CEV exponent beta must lie in (0, 1], got {p['beta']}")
            if self.x0[0] <= 0:
                raise ConfigError("CEV needs a positive initial price")
        if self.kind == ModelKind.HESTON:
            if not -1 <= p["rho"] <= 1:
                raise ConfigError(f"Heston correlation must lie in [-1, 1], got {p['rho']}")
            if self.x0[1] < 0:
                raise ConfigError("Heston initial variance must be >= 0")
        if self.kind == ModelKind.QUANTILE_DRIFT_BM and not 0 < p["p"] < 1:
            raise ConfigError(f"QuantileDriftBM needs p in (0, 1), got {p['p']}")
        if self.kind in (ModelKind.SQUARED_BESSEL, ModelKind.SQUARED_BM) and self.x0[0] < 0:
            raise ConfigError(f"{self.kind} lives on [0, inf); x0 must be >= 0")
        if self.kind in (ModelKind.GBM, ModelKind.HESTON) and self.coords == Coordinates.PRICE:
            if self.x0[0] <= 0:
                raise ConfigError(f"{self.kind} in price coordinates needs a positive initial price")

    @property
    def is_price_model(self) -> bool:
        """True when the first coordinate is a positive price."""
        return self.kind in (ModelKind.GBM, ModelKind.HESTON, ModelKind.CEV) and (
            self.coords == Coordinates.PRICE
        )

    @property
    def rate(self) -> float:
        """Risk-free rate carried by the model, 0 when it has none."""
        return self.params.get("r", 0.0)

    def with_x0(self, x0) -> "ModelSpec":
        """Return a copy started at ``x0``."""
        x0 = tuple(np.atleast_1d(x0))
        return ModelSpec(self.kind, dict(self.params), x0, self.dim, self.coords, self.jump)

    def with_params(self, **params) -> "ModelSpec":
        """Return a copy with some parameters replaced."""
        merged = {**self.params, **params}
        return ModelSpec(self.kind, merged, self.x0, self.dim, self.coords, self.jump)

    def to_dict(self) -> dict[str, Any]:
        """JSON-ready representation."""
        out = {
            "kind": str(self.kind),
            "params": dict(self.params),
            "x0": list(self.x0),
            "dim": self.dim,
        }
        if self.kind in _LOG_CAPABLE_KINDS:
            out["coords"] = str(self.coords)
        if self.jump is not None:
            out["jump"] = self.jump.to_dict()
        return out

    def to_json(self) -> str:
        """Serialize to a JSON object string."""
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ModelSpec":
        """
        Build a model from its JSON object form.

        Raises:
            ConfigError: on unknown keys, missing keys or invalid values
        """
        if not isinstance(data, Mapping):
            raise ConfigError(f"Model description must be a JSON object, got {type(data).__name__}")
        unknown = set(data) - _JSON_KEYS
        if unknown:
            raise ConfigError(f"Unknown model keys: {sorted(unknown)}")
        if "kind" not in data:
            raise ConfigError("Model description is missing 'kind'")
        x0 = data.get("x0", [0.0])
        return cls(
            kind=data["kind"],
            params=data.get("params", {}),
            x0=tuple(x0),
            dim=int(data.get("dim", len(x0))),
            coords=data.get("coords", Coordinates.PRICE),
            jump=data.get("jump"),
        )

    @classmethod
    def from_json(cls, text: str) -> "ModelSpec":
        """Parse a JSON object string."""
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"Malformed model JSON: {e}") from e
        return cls.from_dict(data)

    def identity_hash(self) -> str:
        """Stable short hash of the canonical JSON form."""
        return hashlib.sha256(self.to_json().encode()).hexdigest()[:16]


# -- catalog constructors ---------------------------------------------------------------


def drifted_bm(b: float = 0.0, sigma: float = 1.0, x0: float = 0.0, dim: int = 1) -> ModelSpec:
    """Brownian motion with constant drift b and volatility sigma in every coordinate."""
    return ModelSpec(ModelKind.DRIFTED_BM, {"b": b, "sigma": sigma}, (x0,) * dim, dim)


def gbm(sigma: float, r: float = 0.0, s0: float = 100.0, coords: str = "price") -> ModelSpec:
    """Geometric Brownian motion; in log coordinates the state is log S."""
    coords = Coordinates(coords)
    x0 = math.log(s0) if coords == Coordinates.LOG else s0
    return ModelSpec(ModelKind.GBM, {"r": r, "sigma": sigma}, (x0,), 1, coords)


def cev(sigma: float, beta: float, r: float = 0.0, s0: float = 100.0) -> ModelSpec:
    """Constant elasticity of variance: dS = r S dt + sigma S^beta dB."""
    return ModelSpec(ModelKind.CEV, {"r": r, "sigma": sigma, "beta": beta}, (s0,), 1)


def heston(
    v0: float,
    kappa: float,
    theta: float,
    xi: float,
    rho: float = 0.0,
    r: float = 0.0,
    s0: float = 100.0,
    coords: str = "price",
) -> ModelSpec:
    """Heston stochastic volatility; the state is (price or log-price, variance)."""
    coords = Coordinates(coords)
    x_price = math.log(s0) if coords == Coordinates.LOG else s0
    params = {"r": r, "kappa": kappa, "theta": theta, "xi": xi, "rho": rho}
    return ModelSpec(ModelKind.HESTON, params, (x_price, v0), 2, coords)


def squared_bessel(delta: float, x0: float = 0.0) -> ModelSpec:
    """Squared Bessel process dR = delta dt + 2 sqrt(R) dB."""
    return ModelSpec(ModelKind.SQUARED_BESSEL, {"delta": delta}, (x0,), 1)


def squared_bm(x0: float = 0.0) -> ModelSpec:
    """The square of a Brownian motion started at sqrt(x0)."""
    return ModelSpec(ModelKind.SQUARED_BM, {}, (x0,), 1)


def quantile_drift_bm(p: float, x0: float = 0.0) -> ModelSpec:
    """B_t + Phi^-1(p) sqrt(t): P(X_t > x0) = p for every t."""
    return ModelSpec(ModelKind.QUANTILE_DRIFT_BM, {"p": p}, (x0,), 1)


def poisson_martingale(rate: float = 1.0, x0: float = 0.0) -> ModelSpec:
    """The compensated Poisson martingale rate * t - P_t."""
    return ModelSpec(ModelKind.POISSON_MARTINGALE, {"rate": rate}, (x0,), 1)


def jump_diffusion(
    b: float,
    sigma: float,
    intensity: float,
    a: float,
    law: str = "two_point",
    x0: float = 0.0,
    dim: int = 1,
) -> ModelSpec:
    """Drifted Brownian motion plus symmetric compound Poisson jumps."""
    jump = JumpSpec(intensity=intensity, law=JumpLaw(law), a=a)
    return ModelSpec(ModelKind.JUMP_DIFFUSION, {"b": b, "sigma": sigma}, (x0,) * dim, dim, jump=jump)


# -- coefficients -----------------------------------------------------------------------


@dataclass(frozen=True)
class CoefficientView:
    """
    Vectorized SDE coefficients of a model.

    ``drift(t, X)`` maps an (n, m) state array to (n, m); ``diffusion(t, X)``
    maps it to (n, m, d).
    """

    drift: Callable[[float, np.ndarray], np.ndarray]
    diffusion: Callable[[float, np.ndarray], np.ndarray]
    brownian_dim: int
    jump: JumpSpec | None = None
    state_free: bool = False


def _constant(value: np.ndarray) -> Callable[[float, np.ndarray], np.ndarray]:
    value = np.asarray(value, dtype=float)

    def evaluate(t, x):
        return np.broadcast_to(value, (x.shape[0], *value.shape)).copy()

    return evaluate


def coefficients(model: ModelSpec) -> CoefficientView:
    """
    Return the drift and diffusion coefficients of a catalog model.

    State-dependent volatilities are evaluated on the clamped state
    (max(x, 0)), which is how CEV absorption and Heston full truncation enter
    the simulation.
    """
    p = model.params
    m = model.dim
    kind = model.kind
    if kind in (ModelKind.DRIFTED_BM, ModelKind.JUMP_DIFFUSION):
        return CoefficientView(
            _constant(np.full(m, p["b"])),
            _constant(p["sigma"] * np.eye(m)),
            brownian_dim=m,
            jump=model.jump,
            state_free=True,
        )
    if kind == ModelKind.GBM:
        if model.coords == Coordinates.LOG:
            return CoefficientView(
                _constant(np.array([p["r"] - 0.5 * p["sigma"] ** 2])),
                _constant(np.array([[p["sigma"]]])),
                brownian_dim=1,
                state_free=True,
            )
        return CoefficientView(
            lambda t, x: p["r"] * x,
            lambda t, x: p["sigma"] * x[:, :, None],
            brownian_dim=1,
        )
    if kind == ModelKind.CEV:
        return CoefficientView(
            lambda t, x: p["r"] * x,
            lambda t, x: (p["sigma"] * np.maximum(x, 0.0) ** p["beta"])[:, :, None],
            brownian_dim=1,
        )
    if kind == ModelKind.HESTON:
        return CoefficientView(_heston_drift(p, model.coords), _heston_diffusion(p, model.coords), 2)
    if kind in (ModelKind.SQUARED_BESSEL, ModelKind.SQUARED_BM):
        delta = p["delta"] if kind == ModelKind.SQUARED_BESSEL else 1.0
        return CoefficientView(
            lambda t, x: np.full_like(x, delta),
            lambda t, x: (2.0 * np.sqrt(np.maximum(x, 0.0)))[:, :, None],
            brownian_dim=1,
        )
    if kind == ModelKind.QUANTILE_DRIFT_BM:
        q = float(ndtri(p["p"]))

        def quantile_drift(t, x):
            with np.errstate(divide="ignore"):
                return np.full_like(x, q / (2.0 * math.sqrt(t)) if t > 0 else math.copysign(math.inf, q))

        return CoefficientView(quantile_drift, _constant(np.array([[1.0]])), 1, state_free=True)
    if kind == ModelKind.POISSON_MARTINGALE:
        # Pure jump: the compensator is the drift, there is no Brownian part.
        return CoefficientView(
            _constant(np.array([p["rate"]])), _constant(np.zeros((1, 1))), 1, state_free=True
        )
    raise UnsupportedModel(f"No coefficients for {kind}")


def _heston_drift(p, coords):
    def drift(t, x):
        v = np.maximum(x[:, 1], 0.0)
        out = np.empty_like(x)
        out[:, 0] = p["r"] - 0.5 * v if coords == Coordinates.LOG else p["r"] * x[:, 0]
        out[:, 1] = p["kappa"] * (p["theta"] - v)
        return out

    return drift


def _heston_diffusion(p, coords):
    rho = p["rho"]
    rho_bar = math.sqrt(max(1.0 - rho * rho, 0.0))

    def diffusion(t, x):
        vol = np.sqrt(np.maximum(x[:, 1], 0.0))
        scale = vol if coords == Coordinates.LOG else vol * x[:, 0]
        out = np.zeros((x.shape[0], 2, 2))
        out[:, 0, 0] = rho * scale
        out[:, 0, 1] = rho_bar * scale
        out[:, 1, 0] = p["xi"] * vol
        return out

    return diffusion


def compensator(model: ModelSpec, t: float) -> np.ndarray:
    """
    Deterministic drift integral A_t for models with a state-free drift.

    ``X_t - A_t`` is then the martingale part (e.g. R_t - delta t for the
    squared Bessel process).
    """
    p = model.params
    kind = model.kind
    if kind in (ModelKind.DRIFTED_BM, ModelKind.JUMP_DIFFUSION):
        return np.full(model.dim, p["b"] * t)
    if kind == ModelKind.SQUARED_BESSEL:
        return np.array([p["delta"] * t])
    if kind == ModelKind.SQUARED_BM:
        return np.array([t])
    if kind == ModelKind.QUANTILE_DRIFT_BM:
        return np.array([float(ndtri(p["p"])) * math.sqrt(t)])
    if kind == ModelKind.POISSON_MARTINGALE:
        return np.zeros(1)
    if kind == ModelKind.GBM and model.coords == Coordinates.LOG:
        return np.array([(p["r"] - 0.5 * p["sigma"] ** 2) * t])
    raise UnsupportedModel(f"{kind} has a state-dependent drift; no deterministic compensator")


def small_time_matrix(model: ModelSpec, coordinate: int | None = None) -> np.ndarray:
    """
    Return L = sigma(0, x0), the small-time limit of the diffusion coefficient.

    L is m x m with one row per state coordinate and one column per Brownian
    driver. For Heston that is 2 x 2: rows (price or log-price, variance),
    columns the two independent drivers, with the correlation carried by the
    first row. With ``coordinate`` set, the 1 x 1 matrix sqrt((L L^T)_ii) of
    that coordinate alone is returned, which is [sqrt(v0)] for a Heston
    log-price whatever rho.

    >>> small_time_matrix(heston(0.04, 1.5, 0.04, 0.3, rho=-0.7, coords="log"), coordinate=0).round(12)
    array([[0.2]])

    Raises:
        UnsupportedModel: for the Poisson martingale, which has no diffusion part
        ValueError: for a coordinate outside the state
    """
    if model.kind == ModelKind.POISSON_MARTINGALE:
        raise UnsupportedModel("PoissonMartingale has no diffusion part; there is no matrix L")
    view = coefficients(model)
    x0 = np.asarray(model.x0, dtype=float)[None, :]
    L = view.diffusion(0.0, x0)[0]
    if coordinate is None:
        return L
    if not 0 <= coordinate < L.shape[0]:
        raise ValueError(f"coordinate {coordinate} out of range for a state of dimension {L.shape[0]}")
    return np.array([[math.sqrt(float(L[coordinate] @ L[coordinate]))]])


# -- admissibility ----------------------------------------------------------------------


class ItemStatus(StrEnum):
    """Outcome of one admissibility item."""

    HOLDS = "holds"
    HOLDS_LOCALLY = "holds-locally"
    VIOLATED = "violated"
    NOT_CHECKABLE = "not-checkable"


ASSUMPTION_ITEMS = {
    1: "X_0 = x0 almost surely",
    2: "finite-variation part has a density b up to a positive stopping time",
    3: "drift b bounded up to that stopping time",
    4: "martingale covariation has a density sigma sigma^T up to a positive stopping time",
    5: "sigma bounded by a deterministic constant up to that stopping time",
    6: "sigma_t converges to a deterministic matrix L as t -> 0",
}


@dataclass(frozen=True)
class AdmissibilityReport:
    """Per-item admissibility of a model for the small-time CLT."""

    kind: ModelKind
    horizon: float
    items: dict[int, ItemStatus]
    notes: tuple[str, ...] = ()
    L_degenerate: bool | None = None
    feller: bool | None = None

    @property
    def all_hold(self) -> bool:
        """True when every item holds (globally or locally)."""
        return all(s in (ItemStatus.HOLDS, ItemStatus.HOLDS_LOCALLY) for s in self.items.values())

    def to_dict(self) -> dict[str, Any]:
        """JSON-ready representation."""
        return {
            "kind": str(self.kind),
            "horizon": self.horizon,
            "items": {str(k): str(v) for k, v in self.items.items()},
            "notes": list(self.notes),
            "L_degenerate": self.L_degenerate,
            "feller": self.feller,
        }


def feller_condition(model: ModelSpec) -> bool:
    """Heston Feller condition 2 kappa theta >= xi^2."""
    if model.kind != ModelKind.HESTON:
        raise UnsupportedModel("The Feller condition is a Heston property")
    p = model.params
    return 2.0 * p["kappa"] * p["theta"] >= p["xi"] ** 2


def check_assumptions(model: ModelSpec, horizon: float) -> AdmissibilityReport:
    """
    Report, item by item, whether the model meets the small-time CLT hypotheses.

    The answer comes from analytic knowledge of the catalog coefficients, not
    from simulation, so the report is deterministic.

    Args:
        model: catalog model
        horizon: time horizon T > 0 of the experiment

    Returns:
        AdmissibilityReport with one status per item (1)-(6)
    """
    if not horizon > 0:
        raise ValueError(f"horizon must be > 0, got {horizon}")
    kind = model.kind
    H, HL, V, NC = ItemStatus.HOLDS, ItemStatus.HOLDS_LOCALLY, ItemStatus.VIOLATED, ItemStatus.NOT_CHECKABLE
    notes = []
    feller = None

    if kind == ModelKind.POISSON_MARTINGALE:
        items = {1: H, 2: H, 3: H, 4: NC, 5: NC, 6: NC}
        notes.append("not a continuous semimartingale: the jumps are one-sided, so no diffusion limit L")
        return AdmissibilityReport(kind, horizon, items, tuple(notes))

    log_gbm = kind == ModelKind.GBM and model.coords == Coordinates.LOG
    state_free_sigma = log_gbm or kind in (
        ModelKind.DRIFTED_BM,
        ModelKind.JUMP_DIFFUSION,
        ModelKind.QUANTILE_DRIFT_BM,
    )
    bounded_drift = kind in (
        ModelKind.DRIFTED_BM,
        ModelKind.JUMP_DIFFUSION,
        ModelKind.SQUARED_BESSEL,
        ModelKind.SQUARED_BM,
    ) or log_gbm

    items = {1: H, 2: H, 3: H if bounded_drift else HL, 4: H, 5: H if state_free_sigma else HL, 6: H}
    if kind == ModelKind.QUANTILE_DRIFT_BM:
        items[3] = V
        notes.append("drift Phi^-1(p) / (2 sqrt(t)) is unbounded as t -> 0")
    if kind == ModelKind.JUMP_DIFFUSION:
        notes.append("symmetric finite-activity jumps: the compensated small-jump term vanishes")
    if kind == ModelKind.HESTON:
        feller = feller_condition(model)
        if not feller:
            logger.warning("Heston Feller condition 2*kappa*theta >= xi^2 is violated (flagged only)")
            notes.append("Feller condition violated; variance can reach 0 (full truncation in simulation)")

    L = small_time_matrix(model)
    eigen = np.linalg.eigvalsh(L @ L.T)
    degenerate = bool(eigen.min() <= TOL_PSD * max(eigen.max(), 0.0) or eigen.max() <= 0.0)
    if degenerate:
        notes.append("L is degenerate at x0: the Gaussian limit is degenerate")
    return AdmissibilityReport(kind, horizon, items, tuple(notes), degenerate, feller)


# -- Gaussian limit ---------------------------------------------------------------------


@dataclass(frozen=True)
class GaussianLimit:
    """
    Limit law of the normalized increments: N(0, V) with V = Df L (Df L)^T.

    Args:
        L: m x m small-time diffusion matrix
        V: n x n symmetric positive semi-definite limit covariance
    """

    L: np.ndarray
    V: np.ndarray

    def __post_init__(self):
        V = np.atleast_2d(np.asarray(self.V, dtype=float))
        L = np.atleast_2d(np.asarray(self.L, dtype=float))
        if V.shape[0] != V.shape[1]:
            raise ShapeMismatch(f"V must be square, got {V.shape}")
        if not np.allclose(V, V.T, rtol=0.0, atol=1e-12 * max(1.0, np.abs(V).max())):
            raise ValueError("V must be symmetric")
        eigen = np.linalg.eigvalsh(V)
        if eigen.size and eigen.min() < -TOL_PSD * max(abs(eigen.max()), 1.0):
            raise ValueError(f"V is not positive semi-definite (smallest eigenvalue {eigen.min():.3e})")
        V.setflags(write=False)
        L.setflags(write=False)
        object.__setattr__(self, "V", V)
        object.__setattr__(self, "L", L)

    @property
    def eigenvalues(self) -> np.ndarray:
        """Eigenvalues of V in ascending order."""
        return np.linalg.eigvalsh(self.V)

    def is_degenerate(self, tol: float = TOL_PSD) -> bool:
        """True when V has an eigenvalue below tol * lambda_max (or V = 0)."""
        eigen = self.eigenvalues
        lam_max = eigen.max()
        return bool(lam_max <= 0.0 or eigen.min() <= tol * lam_max)

    def direction_variance(self, direction) -> float:
        """Variance d^T V d of the projection onto ``direction``."""
        d = np.asarray(direction, dtype=float)
        return float(d @ self.V @ d)

    def to_dict(self) -> dict[str, Any]:
        """JSON-ready representation."""
        return {"L": self.L.tolist(), "V": self.V.tolist()}
