"""
Monte Carlo simulation of catalog models.

Paths are generated in chunks of ``chunk_size`` rows. Chunk ``i`` draws all of
its randomness from its own counter-based substream keyed by ``(seed, i)`` and
writes a disjoint row range of the result, so the output is the same whatever
the number of worker threads or the order in which chunks finish.
"""

import json
import logging
import math
import os
import pathlib
from collections.abc import Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from enum import StrEnum
from typing import Any

import numpy as np
import pandas as pd
from scipy.special import ndtri

from .errors import ConfigError, SchemeUnavailable, StepUnstable
from .models import Coordinates, ModelKind, ModelSpec, coefficients, compensator

logger = logging.getLogger(__name__)

THREADS_ENV = "SMALLTIME_THREADS"
DEFAULT_CHUNK_SIZE = 16_384
H_MAX_FRACTION = 1e-4
BINARY_MAGIC = b"SMTMCS01"

_EXACT_KINDS = {
    ModelKind.DRIFTED_BM,
    ModelKind.GBM,
    ModelKind.SQUARED_BESSEL,
    ModelKind.SQUARED_BM,
    ModelKind.QUANTILE_DRIFT_BM,
    ModelKind.POISSON_MARTINGALE,
}
_JUMP_KINDS = {ModelKind.POISSON_MARTINGALE, ModelKind.JUMP_DIFFUSION}


class Scheme(StrEnum):
    """Simulation schemes."""

    EULER_MARUYAMA = "EulerMaruyama"
    EXACT = "Exact"


@dataclass(frozen=True)
class SimConfig:
    """
    Monte Carlo settings.

    Args:
        n_paths: number of independent paths
        t_grid: recorded times, starting at 0 and strictly increasing
        seed: 64-bit unsigned seed
        scheme: Euler-Maruyama or exact sampling
        chunk_size: paths per RNG substream
        h_max: largest Euler step; defaults to h_fraction * max(t_grid)
        h_fraction: default step as a fraction of the horizon
        antithetic: pair every Gaussian draw with its negation
        threads: worker cap; defaults to SMALLTIME_THREADS or the CPU count
    """

    n_paths: int
    t_grid: tuple[float, ...] = (0.0, 1.0)
    seed: int = 0
    scheme: Scheme = Scheme.EXACT
    chunk_size: int = DEFAULT_CHUNK_SIZE
    h_max: float | None = None
    h_fraction: float = H_MAX_FRACTION
    antithetic: bool = False
    threads: int | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        object.__setattr__(self, "t_grid", tuple(float(t) for t in self.t_grid))
        if self.n_paths < 1:
            raise ConfigError(f"n_paths must be >= 1, got {self.n_paths}")
        if self.chunk_size < 1:
            raise ConfigError(f"chunk_size must be >= 1, got {self.chunk_size}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        grid = np.asarray(self.t_grid)
        if grid.size < 2 or grid[0] != 0.0:
            raise ConfigError(f"t_grid must start at 0 and contain a positive time, got {self.t_grid}")
        if not np.all(np.diff(grid) > 0) or not np.all(np.isfinite(grid)):
            raise ConfigError(f"t_grid must be finite and strictly increasing, got {self.t_grid}")
        if self.h_max is not None and not self.h_max > 0:
            raise ConfigError(f"h_max must be > 0, got {self.h_max}")
        if not 0 < self.h_fraction <= 1:
            raise ConfigError(f"h_fraction must lie in (0, 1], got {self.h_fraction}")
        if self.threads is not None and self.threads < 1:
            raise ConfigError(f"threads must be >= 1, got {self.threads}")

    @property
    def step_cap(self) -> float:
        """Effective largest Euler step."""
        return self.h_max if self.h_max is not None else self.h_fraction * self.t_grid[-1]

    def for_terminal(self, t: float) -> "SimConfig":
        """Copy whose grid is {0, t}; a default step cap follows t."""
        if not t > 0:
            raise ValueError(f"terminal time must be > 0, got {t}")
        return replace(self, t_grid=(0.0, float(t)))

    def to_dict(self) -> dict[str, Any]:
        """JSON-ready representation (the worker cap is not part of a run's identity)."""
        out = asdict(self)
        out["scheme"] = str(self.scheme)
        out["t_grid"] = list(self.t_grid)
        out.pop("threads")
        return out

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "SimConfig":
        """Build from a JSON object; unknown keys are rejected."""
        allowed = {
            "n_paths", "t_grid", "seed", "scheme", "chunk_size",
            "h_max", "h_fraction", "antithetic", "threads",
        }
        unknown = set(data) - allowed
        if unknown:
            raise ConfigError(f"Unknown simulation keys: {sorted(unknown)}")
        if "n_paths" not in data:
            raise ConfigError("Simulation settings are missing 'n_paths'")
        try:
            return cls(**data)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"Invalid simulation settings: {e}") from e


def resolve_threads(threads: int | None = None) -> int:
    """Worker count: explicit value, else SMALLTIME_THREADS, else the CPU count."""
    if threads is not None:
        return max(1, int(threads))
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError as e:
            raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {env!r}") from e
    return os.cpu_count() or 1


def substream_rng(seed: int, chunk_index: int) -> np.random.Generator:
    """
    Independent random stream for one chunk.

    A Philox counter-based generator keyed by ``SeedSequence(seed, spawn_key=(chunk_index,))``:
    the same pair always yields the same stream and distinct chunks never overlap.

    >>> a = substream_rng(7, 0).random(3)
    >>> b = substream_rng(7, 0).random(3)
    >>> bool((a == b).all())
    True
    """
    sequence = np.random.SeedSequence(int(seed), spawn_key=(int(chunk_index),))
    return np.random.Generator(np.random.Philox(sequence))


def derive_seed(seed: int, *keys: int) -> int:
    """A 64-bit seed for a sub-experiment (e.g. one time of a schedule)."""
    sequence = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    state = sequence.generate_state(1, np.uint64)
    return int(state[0])


def exact_available(model: ModelSpec) -> bool:
    """True when the catalog has an exact sampler for the model."""
    return model.kind in _EXACT_KINDS


@dataclass(frozen=True)
class MCSample:
    """
    A matrix of independent Monte Carlo draws with its provenance.

    ``values`` has one row per path. Path samples are laid out time-major:
    the columns are x_1..x_m at t_grid[0], then at t_grid[1], and so on.
    """

    values: np.ndarray
    labels: tuple[str, ...]
    meta: dict[str, Any]
    jump_counts: np.ndarray | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2 or values.shape[1] != len(self.labels):
            raise ValueError(f"values shape {values.shape} does not match {len(self.labels)} labels")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "labels", tuple(self.labels))
        if self.jump_counts is not None:
            counts = np.asarray(self.jump_counts, dtype=np.int64)
            counts.setflags(write=False)
            object.__setattr__(self, "jump_counts", counts)

    @property
    def n_paths(self) -> int:
        """Number of rows."""
        return self.values.shape[0]

    @property
    def times(self) -> tuple[float, ...]:
        """Recorded times."""
        return tuple(self.meta.get("times", ()))

    def states(self) -> np.ndarray:
        """View of the values as (n_paths, n_times, dim)."""
        dim = int(self.meta["dim"])
        return self.values.reshape(self.n_paths, -1, dim)

    def column(self, label: str) -> np.ndarray:
        """One column by label."""
        return self.values[:, self.labels.index(label)]

    def to_frame(self) -> pd.DataFrame:
        """Values as a DataFrame with the labels as columns."""
        return pd.DataFrame(self.values, columns=list(self.labels))

    def to_csv(self, path) -> pathlib.Path:
        """Write a header row of labels and one path per row."""
        path = pathlib.Path(path)
        self.to_frame().to_csv(path, index=False, float_format="%.17g")
        return path

    def to_binary(self, path) -> pathlib.Path:
        """
        Write the compact binary layout plus a JSON sidecar.

        The file holds an 8-byte magic followed by the values as little-endian
        64-bit floats in row-major order, then, if present, the jump counts as
        little-endian 64-bit integers. ``<path>.json`` carries shape, labels and meta.
        """
        path = pathlib.Path(path)
        with open(path, "wb") as f:
            f.write(BINARY_MAGIC)
            f.write(np.ascontiguousarray(self.values, dtype="<f8").tobytes())
            if self.jump_counts is not None:
                f.write(np.ascontiguousarray(self.jump_counts, dtype="<i8").tobytes())
        sidecar = {
            "shape": list(self.values.shape),
            "labels": list(self.labels),
            "jump_counts_shape": None if self.jump_counts is None else list(self.jump_counts.shape),
            "meta": self.meta,
        }
        _sidecar_path(path).write_text(json.dumps(sidecar, indent=2, sort_keys=True))
        return path

    @classmethod
    def from_binary(cls, path) -> "MCSample":
        """Read a sample written by ``to_binary``."""
        path = pathlib.Path(path)
        sidecar = json.loads(_sidecar_path(path).read_text())
        raw = path.read_bytes()
        if raw[: len(BINARY_MAGIC)] != BINARY_MAGIC:
            raise ValueError(f"{path} is not an MCSample binary file")
        rows, cols = sidecar["shape"]
        offset = len(BINARY_MAGIC)
        values = np.frombuffer(raw, dtype="<f8", count=rows * cols, offset=offset).reshape(rows, cols)
        counts = None
        if sidecar["jump_counts_shape"] is not None:
            shape = tuple(sidecar["jump_counts_shape"])
            offset += rows * cols * 8
            counts = np.frombuffer(raw, dtype="<i8", count=math.prod(shape), offset=offset).reshape(shape)
        return cls(values.astype(float), tuple(sidecar["labels"]), sidecar["meta"], counts)


def _sidecar_path(path: pathlib.Path) -> pathlib.Path:
    return path.with_name(path.name + ".json")


# -- samplers ---------------------------------------------------------------------------


def _normals(rng: np.random.Generator, shape: tuple[int, ...], antithetic: bool) -> np.ndarray:
    if not antithetic:
        return rng.standard_normal(shape)
    half = (shape[0] + 1) // 2
    z = rng.standard_normal((half, *shape[1:]))
    return np.concatenate([z, -z])[: shape[0]]


def _exact_chunk(model: ModelSpec, t_grid: np.ndarray, rng, rows: int, antithetic: bool):
    p = model.params
    kind = model.kind
    k, m = t_grid.size, model.dim
    x0 = np.asarray(model.x0)
    out = np.empty((rows, k, m))
    out[:, 0, :] = x0
    counts = None
    dt = np.diff(t_grid)
    t = t_grid[1:][None, :, None]

    if kind in (ModelKind.DRIFTED_BM, ModelKind.GBM, ModelKind.QUANTILE_DRIFT_BM, ModelKind.SQUARED_BM):
        z = _normals(rng, (rows, k - 1, m), antithetic)
        w = np.cumsum(z * np.sqrt(dt)[None, :, None], axis=1)
        if kind == ModelKind.DRIFTED_BM:
            out[:, 1:, :] = x0 + p["b"] * t + p["sigma"] * w
        elif kind == ModelKind.GBM:
            log_move = (p["r"] - 0.5 * p["sigma"] ** 2) * t + p["sigma"] * w
            out[:, 1:, :] = x0 + log_move if model.coords == Coordinates.LOG else x0 * np.exp(log_move)
        elif kind == ModelKind.QUANTILE_DRIFT_BM:
            out[:, 1:, :] = x0 + float(ndtri(p["p"])) * np.sqrt(t) + w
        else:
            out[:, 1:, :] = (math.sqrt(x0[0]) + w) ** 2
    elif kind == ModelKind.SQUARED_BESSEL:
        # Noncentral chi-square transition as a Poisson mixture of gammas; also covers delta = 0.
        state = np.full(rows, x0[0])
        for j, h in enumerate(dt):
            mixing = rng.poisson(state / (2.0 * h))
            state = 2.0 * h * rng.standard_gamma(0.5 * p["delta"] + mixing)
            out[:, j + 1, 0] = state
    elif kind == ModelKind.POISSON_MARTINGALE:
        arrivals = rng.poisson(p["rate"] * dt[None, :], size=(rows, k - 1))
        counts = np.zeros((rows, k), dtype=np.int64)
        counts[:, 1:] = np.cumsum(arrivals, axis=1)
        out[:, :, 0] = x0[0] + p["rate"] * t_grid[None, :] - counts
    else:
        raise SchemeUnavailable(f"No exact sampler for {kind}; use EulerMaruyama")
    return out, counts


def _log_form(model: ModelSpec) -> ModelSpec:
    x0 = (math.log(model.x0[0]), *model.x0[1:])
    return ModelSpec(model.kind, dict(model.params), x0, model.dim, Coordinates.LOG, model.jump)


def _euler_chunk(model: ModelSpec, t_grid: np.ndarray, rng, rows: int, h_max: float, antithetic: bool):
    # Positive-price GBM and Heston are stepped in log space and exponentiated.
    in_log = model.kind in (ModelKind.GBM, ModelKind.HESTON) and model.coords == Coordinates.PRICE
    stepped = _log_form(model) if in_log else model
    view = coefficients(stepped)
    k, m, d = t_grid.size, model.dim, view.brownian_dim
    out = np.empty((rows, k, m))
    x = np.tile(np.asarray(stepped.x0, dtype=float), (rows, 1))
    out[:, 0, :] = x
    counts = np.zeros((rows, k), dtype=np.int64) if model.kind in _JUMP_KINDS else None
    running = np.zeros(rows, dtype=np.int64)

    for j in range(k - 1):
        t0, t1 = t_grid[j], t_grid[j + 1]
        interval = t1 - t0
        if view.state_free:
            # Constant diffusion and a known drift integral: one step is exact in law.
            if model.kind == ModelKind.POISSON_MARTINGALE:
                arrivals = rng.poisson(model.params["rate"] * interval, size=rows)
                running += arrivals
                x = x + model.params["rate"] * interval - arrivals[:, None]
            else:
                L = view.diffusion(t0, x[:1])[0]
                z = _normals(rng, (rows, d), antithetic)
                x = x + (compensator(stepped, t1) - compensator(stepped, t0)) + math.sqrt(interval) * z @ L.T
                if view.jump is not None:
                    arrivals = rng.poisson(view.jump.intensity * interval, size=rows)
                    running += arrivals
                    x = x + view.jump.sum_sizes(rng, np.repeat(arrivals[:, None], m, axis=1))
        else:
            steps = max(1, math.ceil(interval / h_max * (1.0 - 1e-12)))
            h = interval / steps
            sqrt_h = math.sqrt(h)
            for s in range(steps):
                t = t0 + s * h
                z = _normals(rng, (rows, d), antithetic)
                x = x + view.drift(t, x) * h + np.einsum("nmd,nd->nm", view.diffusion(t, x), z) * sqrt_h
        out[:, j + 1, :] = x
        if counts is not None:
            counts[:, j + 1] = running

    if in_log:
        out[:, :, 0] = np.exp(out[:, :, 0])
    return out, counts


def _labels(model: ModelSpec, times: Sequence[float], terminal: bool) -> tuple[str, ...]:
    if terminal:
        return tuple(f"x{i + 1}" for i in range(model.dim))
    return tuple(f"x{i + 1}@t={t:.12g}" for t in times for i in range(model.dim))


def _simulate(model: ModelSpec, cfg: SimConfig) -> tuple[np.ndarray, np.ndarray | None]:
    if cfg.scheme == Scheme.EXACT and not exact_available(model):
        raise SchemeUnavailable(f"Exact sampling is not available for {model.kind}; use EulerMaruyama")
    t_grid = np.asarray(cfg.t_grid)
    n, k, m = cfg.n_paths, t_grid.size, model.dim
    n_chunks = math.ceil(n / cfg.chunk_size)
    states = np.empty((n, k, m))
    counts = np.zeros((n, k), dtype=np.int64) if model.kind in _JUMP_KINDS else None

    def run_chunk(index: int):
        lo = index * cfg.chunk_size
        hi = min(n, lo + cfg.chunk_size)
        rng = substream_rng(cfg.seed, index)
        if cfg.scheme == Scheme.EXACT:
            block, block_counts = _exact_chunk(model, t_grid, rng, hi - lo, cfg.antithetic)
        else:
            block, block_counts = _euler_chunk(model, t_grid, rng, hi - lo, cfg.step_cap, cfg.antithetic)
        if not np.all(np.isfinite(block)):
            bad = int(np.sum(~np.all(np.isfinite(block), axis=(1, 2))))
            raise StepUnstable(f"{bad} path(s) of chunk {index} became non-finite simulating {model.kind}")
        states[lo:hi] = block
        if counts is not None and block_counts is not None:
            counts[lo:hi] = block_counts
        logger.debug(f"chunk {index}: rows {lo}-{hi} done")

    workers = min(resolve_threads(cfg.threads), n_chunks)
    if workers <= 1:
        for index in range(n_chunks):
            run_chunk(index)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for future in [pool.submit(run_chunk, i) for i in range(n_chunks)]:
                future.result()
    return states, counts


def _meta(model: ModelSpec, cfg: SimConfig, times: Sequence[float]) -> dict[str, Any]:
    return {
        "model": model.to_dict(),
        "model_hash": model.identity_hash(),
        "sim": cfg.to_dict(),
        "times": [float(t) for t in times],
        "dim": model.dim,
        "substreams": {"generator": "Philox", "key": "SeedSequence(seed, spawn_key=(chunk,))"},
    }


def simulate_terminal(model: ModelSpec, t: float, cfg: SimConfig) -> MCSample:
    """
    Draw ``cfg.n_paths`` independent samples of X_t.

    Samples are exact for the kinds with a known law and Euler-Maruyama
    approximations otherwise; ``cfg.t_grid`` is ignored in favour of {0, t}.

    Raises:
        SchemeUnavailable: Exact requested for CEV, Heston or JumpDiffusion
        StepUnstable: the simulation produced non-finite states
    """
    cfg_t = cfg.for_terminal(t)
    logger.debug(f"simulate_terminal {model.kind} t={t:g} n={cfg.n_paths} scheme={cfg.scheme}")
    states, counts = _simulate(model, cfg_t)
    return MCSample(
        states[:, -1, :],
        _labels(model, (t,), terminal=True),
        _meta(model, cfg_t, (t,)),
        None if counts is None else counts[:, -1:],
    )


def simulate_paths(model: ModelSpec, cfg: SimConfig) -> MCSample:
    """
    Simulate full paths on ``cfg.t_grid``.

    Returns:
        MCSample of shape n_paths x (len(t_grid) * dim), time-major columns, with
        cumulative jump counts per recorded time for jump models
    """
    logger.debug(f"simulate_paths {model.kind} grid={len(cfg.t_grid)} n={cfg.n_paths} scheme={cfg.scheme}")
    states, counts = _simulate(model, cfg)
    n = cfg.n_paths
    return MCSample(
        states.reshape(n, -1),
        _labels(model, cfg.t_grid, terminal=False),
        _meta(model, cfg, cfg.t_grid),
        counts,
    )
