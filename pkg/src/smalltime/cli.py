#!/usr/bin/env python3
"""
Command-line front end for the small-time experiments.

Each subcommand builds a RunConfig (from ``--config`` and/or flags), runs the
matching module, and writes its CSV/JSON artifacts plus ``manifest.json`` into
the output directory. Exit status: 0 when every verdict passes, 2 on a failed
verdict, 1 on bad input.
"""

import argparse
import json
import logging
import math
import pathlib
import sys
import time
from collections.abc import Callable, Mapping
from dataclasses import dataclass, field
from typing import Any

import numpy as np
import pandas as pd

from . import reports
from .bounds import (
    EXPANSION_WINDOW,
    bracketing_frame,
    drift_bound_for_model,
    expansion_bounded,
    expansion_error,
    expansion_limit_ratio,
    girsanov_bounds,
    verify_bracketing,
)
from .clt import Verdict, clt_check, fclt_check, ldp_rate, ldp_second_derivative, mapping_by_name
from .errors import ConfigError, OutOfScope
from .examples_catalog import (
    bessel_delta_for_probability,
    bessel_limit_probability,
    examples_table,
    monte_carlo_check,
    poisson_exceed_probability,
)
from .models import ModelSpec, coefficients
from .pricing import atm_digital_limit_check, batch_digital
from .simulate import SimConfig
from .skew import Check, skew_frame, skew_report, width_ratio_check

logger = logging.getLogger(__name__)

COMMANDS = ("clt-check", "fclt-check", "bounds", "digital", "skew", "ldp", "examples")
DEFAULT_PATHS = 100_000
EXIT_OK, EXIT_INPUT, EXIT_VERDICT = 0, 1, 2
SUITE_DIR = pathlib.Path(__file__).parent / "suites" / "paper-repro"
DESCENDING_KEYS = ("t_schedule", "u_schedule", "T_schedule")
LDP_CURVATURE_TOL = 1e-3


def parse_grid(text: str) -> list[float]:
    """
    Parse a time grid: ``a:b:log:n``, ``a:b:lin:n``, a comma list or a single number.

    >>> parse_grid("1e-3:1e-1:log:3")
    [0.001, 0.01, 0.1]
    >>> parse_grid("0.5, 0.25")
    [0.5, 0.25]
    """
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 4 or parts[2] not in ("log", "lin"):
            raise ValueError(f"Grid '{text}' must look like a:b:log:n or a:b:lin:n")
        a, b, n = float(parts[0]), float(parts[1]), int(parts[3])
        if n < 1:
            raise ValueError(f"Grid '{text}' needs at least one point")
        if parts[2] == "log":
            if a <= 0 or b <= 0:
                raise ValueError(f"Log grid '{text}' needs positive end points")
            values = np.geomspace(a, b, n)
        else:
            values = np.linspace(a, b, n)
        return [float(f"{v:.15g}") for v in values]
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as e:
        raise ValueError(f"Cannot parse grid '{text}'") from e


def _grid_arg(text: str) -> list[float]:
    try:
        return parse_grid(text)
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e)) from e


@dataclass(frozen=True)
class RunConfig:
    """
    One experiment.

    Args:
        command: subcommand name
        model: model under test, absent for ``examples`` and plain ``bounds``
        sim: Monte Carlo settings
        params: command-specific parameters (schedules, strikes, expected verdict, ...)
        out_dir: directory receiving the artifacts
    """

    command: str
    model: ModelSpec | None = None
    sim: SimConfig = field(default_factory=lambda: SimConfig(n_paths=DEFAULT_PATHS))
    params: dict[str, Any] = field(default_factory=dict)
    out_dir: pathlib.Path = pathlib.Path("runs")

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"Unknown command '{self.command}'; choose from {', '.join(COMMANDS)}")
        object.__setattr__(self, "out_dir", pathlib.Path(self.out_dir))

    @property
    def expect(self) -> str | None:
        """Expected verdict, when a failing verdict is the intended outcome."""
        return self.params.get("expect")

    def to_dict(self) -> dict[str, Any]:
        """JSON form, as echoed into the manifest."""
        return {
            "command": self.command,
            "model": None if self.model is None else self.model.to_dict(),
            "sim": self.sim.to_dict(),
            "params": self.params,
            "out_dir": str(self.out_dir),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "RunConfig":
        """Build from the JSON object form; unknown keys are rejected."""
        if not isinstance(data, Mapping):
            raise ConfigError(f"Run configuration must be a JSON object, got {type(data).__name__}")
        unknown = set(data) - {"command", "model", "sim", "params", "out_dir"}
        if unknown:
            raise ConfigError(f"Unknown configuration keys: {sorted(unknown)}")
        if "command" not in data:
            raise ConfigError("Run configuration is missing 'command'")
        params = data.get("params") or {}
        if not isinstance(params, Mapping):
            raise ConfigError("'params' must be a JSON object")
        model = data.get("model")
        sim = data.get("sim")
        return cls(
            command=data["command"],
            model=None if model is None else ModelSpec.from_dict(model),
            sim=SimConfig(n_paths=DEFAULT_PATHS) if sim is None else SimConfig.from_dict(sim),
            params=dict(params),
            out_dir=data.get("out_dir", "runs"),
        )

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        """Read a JSON configuration file."""
        return cls.from_dict(read_config(path))


def read_config(path) -> dict[str, Any]:
    """Load a configuration file as a plain dict."""
    path = pathlib.Path(path)
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"Malformed JSON in {path}: {e}") from e
    except OSError as e:
        raise ConfigError(f"Cannot read {path}: {e}") from e


# -- commands ---------------------------------------------------------------------------


@dataclass
class Outcome:
    """What a command produced: a verdict plus artifacts still to be written."""

    verdict: str
    tables: dict[str, pd.DataFrame] = field(default_factory=dict)
    documents: dict[str, Any] = field(default_factory=dict)
    message: str = ""


def _require_model(config: RunConfig) -> ModelSpec:
    if config.model is None:
        raise ConfigError(f"'{config.command}' needs a model")
    return config.model


def _schedule(params: Mapping[str, Any], key: str, default=None) -> list[float]:
    value = params.get(key, default)
    if value is None:
        raise ConfigError(f"Missing parameter '{key}'")
    values = parse_grid(value) if isinstance(value, str) else [float(v) for v in np.atleast_1d(value)]
    if key in DESCENDING_KEYS:
        values = sorted(values, reverse=True)
    return values


def _run_clt(config: RunConfig) -> Outcome:
    model = _require_model(config)
    p = config.params
    mapping = mapping_by_name(p.get("mapping", "identity"), model.x0)
    report = clt_check(model, mapping, _schedule(p, "t_schedule"), config.sim, p.get("level", 1e-3))
    return Outcome(
        str(report.verdict),
        tables={"clt.csv": report.to_frame()},
        documents={"clt.json": report.to_dict()},
        message=f"V = {report.limit.V.tolist()}",
    )


def _run_fclt(config: RunConfig) -> Outcome:
    model = _require_model(config)
    p = config.params
    mapping = mapping_by_name(p.get("mapping", "identity"), model.x0)
    report = fclt_check(
        model,
        mapping,
        _schedule(p, "u_schedule"),
        _schedule(p, "t_grid", [0.25, 0.5, 0.75, 1.0]),
        config.sim,
        p.get("level", 1e-3),
    )
    return Outcome(str(report.verdict), {"fclt.csv": report.to_frame()}, {"fclt.json": report.to_dict()})


def _run_bounds(config: RunConfig) -> Outcome:
    p = config.params
    if "c" in p:
        c = float(p["c"])
    elif config.model is not None:
        c = drift_bound_for_model(config.model).c
    else:
        raise ConfigError("'bounds' needs either params.c or a model")
    t_grid = _schedule(p, "t_grid", "1e-6:1e-1:log:20")
    curve = girsanov_bounds(c, t_grid)
    outcome = Outcome("pass", {"bounds.csv": curve.to_frame()})
    ordered = bool(np.all(curve.e_f1 <= 0.5) and np.all(curve.e_f2 >= 0.5))

    inside = [t for t in t_grid if t < min(curve.horizon, 1.0)]
    if inside:
        lower, upper = expansion_error(c, inside)
        outcome.tables["expansion.csv"] = pd.DataFrame({"t": inside, "ratio_lo": lower, "ratio_hi": upper})
    window = [t for t in inside if t <= EXPANSION_WINDOW]
    bounded = expansion_bounded(c, window) if window else True
    outcome.documents["expansion.json"] = {
        "c": c,
        "window": EXPANSION_WINDOW,
        "limit_ratio": expansion_limit_ratio(c),
        "bounded": bounded,
    }

    bracketed = True
    if p.get("bracket", config.model is not None):
        model = _require_model(config)
        results = verify_bracketing(model, t_grid, config.sim, p.get("confidence", 0.99))
        outcome.tables["bracketing.csv"] = bracketing_frame(results)
        outcome.documents["bracketing.json"] = {"c": c, "results": [r.to_dict() for r in results]}
        bracketed = all(r.passed for r in results)
    outcome.verdict = "pass" if ordered and bracketed and bounded else "fail"
    outcome.message = f"c = {c:g}, horizon t* = {curve.horizon:.6g}"
    return outcome


def _load_markets(batch) -> list[Mapping[str, Any]]:
    if isinstance(batch, str | pathlib.Path):
        batch = read_config(batch)
    if isinstance(batch, Mapping):
        batch = batch.get("markets", [])
    if not isinstance(batch, list):
        raise ConfigError("A digital batch must be a list of {S0, K, T, r} objects")
    return batch


def _run_digital(config: RunConfig) -> Outcome:
    model = _require_model(config)
    p = config.params
    if "batch" in p:
        frame = batch_digital(model, _load_markets(p["batch"]), config.sim, p.get("confidence", 0.99))
        return Outcome("pass", {"batch.csv": frame}, message=f"{len(frame)} digitals priced")
    report = atm_digital_limit_check(
        model,
        _schedule(p, "T_schedule"),
        config.sim,
        martingale=bool(p.get("martingale", False)),
        require_clt=bool(p.get("require_clt", True)),
        confidence=p.get("confidence", 0.99),
        discount=p.get("r"),
    )
    last = report.limit_estimate
    return Outcome(
        "pass" if report.passed else "fail",
        {"digital.csv": report.to_frame()},
        {"digital.json": report.to_dict()},
        message=f"P at T={report.T_schedule[-1]:g}: {last.p_hat:.5f} [{last.ci_low:.5f}, {last.ci_high:.5f}]",
    )


def _run_skew(config: RunConfig) -> Outcome:
    model = _require_model(config)
    p = config.params
    sim = None if p.get("analytic", False) else config.sim
    reports_ = [skew_report(model, T, sim, p.get("dK")) for T in _schedule(p, "T_schedule")]
    documents: dict[str, Any] = {"reports": [rep.to_dict() for rep in reports_]}
    passed = all(v != Check.FAIL for rep in reports_ for v in rep.verdicts.values())
    if len(reports_) > 1 and all(rep.in_scope for rep in reports_):
        ratio = width_ratio_check(reports_, p.get("tolerance", 0.1))
        documents["width_ratio"] = {**ratio.__dict__, "passed": ratio.passed}
        passed = passed and ratio.passed
    return Outcome("pass" if passed else "fail", {"skew.csv": skew_frame(reports_)}, {"skew.json": documents})


def _sigma_function(config: RunConfig) -> Callable[[float], float]:
    spec = config.params.get("sigma")
    if spec is not None:
        if isinstance(spec, int | float):
            scale, exponent = float(spec), 0.0
        else:
            scale, exponent = float(spec["scale"]), float(spec.get("exponent", 0.0))
        return lambda u: scale * abs(u) ** exponent
    model = _require_model(config)
    if model.dim != 1:
        raise OutOfScope(f"the rate function is one-dimensional; {model.kind} has dim {model.dim}")
    diffusion = coefficients(model).diffusion
    return lambda u: abs(float(diffusion(0.0, np.array([[u]]))[0, 0, 0]))


def _run_ldp(config: RunConfig) -> Outcome:
    p = config.params
    sigma_fn = _sigma_function(config)
    if "point" in p:
        x0 = float(p["point"])
    elif config.model is not None:
        x0 = config.model.x0[0]
    else:
        raise ConfigError("'ldp' needs params.point or a model")
    times = _schedule(p, "t", [0.1, 0.01])
    rows = []
    for eps in _schedule(p, "eps", [0.01, 0.1, 0.5]):
        rate = ldp_rate(sigma_fn, x0, eps)
        row = {"eps": eps, "rate": rate}
        for t in times:
            row[f"tail@t={t:.12g}"] = math.exp(-rate / t)
        rows.append(row)
    curvature = ldp_second_derivative(sigma_fn, x0, p.get("h", 1e-3))
    expected = 1.0 / sigma_fn(x0) ** 2
    passed = abs(curvature / expected - 1.0) <= LDP_CURVATURE_TOL
    document = {"x0": x0, "second_derivative": curvature, "inverse_variance": expected, "passed": passed}
    return Outcome(
        "pass" if passed else "fail",
        {"ldp.csv": pd.DataFrame(rows)},
        {"ldp.json": document},
        message=f"I''(x0) = {curvature:.8g}, 1/sigma(x0)^2 = {expected:.8g}",
    )


def _run_examples(config: RunConfig) -> Outcome:
    p = {k: v for k, v in config.params.items() if v is not None and k != "expect"}
    name = p.pop("name", "bessel")
    simulate = bool(p.pop("monte_carlo", False))
    confidence = p.pop("confidence", 0.99)
    documents: dict[str, Any] = {}
    tables: dict[str, pd.DataFrame] = {}
    lines = []
    verdict = "pass"
    if simulate:
        mc_params = {**p, "t": _schedule(p, "t") if p.get("t") is not None else None}
        checks = monte_carlo_check(name, config.sim, confidence, **mc_params)
        tables[f"examples_{name}_mc.csv"] = checks
        verdict = "pass" if bool(checks["pass"].all()) else "fail"
        lines.extend(
            f"MC at t={row.t:g}: {row.p_hat:.6f} [{row.ci_low:.6f}, {row.ci_high:.6f}] vs {row.exact:.6f}"
            for row in checks.itertuples()
        )
    if name == "bessel":
        if p.get("delta") is not None:
            prob = bessel_limit_probability(float(p["delta"]))
            documents["delta"] = float(p["delta"])
            documents["probability"] = prob
            lines.append(f"P(R_1 > {float(p['delta']):g}) = {prob:.6f}")
        if p.get("p") is not None:
            choice = bessel_delta_for_probability(float(p.pop("p")))
            documents["choice"] = {**choice.__dict__, "achieved": choice.achieved}
            lines.append(
                f"delta = {choice.delta:.10g} realises p = {choice.p:g} (reflected={choice.reflected})"
            )
    elif name == "poisson" and p.get("t") is not None:
        p["t"] = _schedule(p, "t")
        rate = p.get("rate", 1.0)
        lines.extend(f"P(t - P_t > 0) at t={t:g}: {poisson_exceed_probability(t, rate):.6f}" for t in p["t"])
    elif p.get("t") is not None:
        p["t"] = _schedule(p, "t")
    tables[f"examples_{name}.csv"] = examples_table(name, **p)
    return Outcome(verdict, tables, documents, "\n".join(lines))


HANDLERS: dict[str, Callable[[RunConfig], Outcome]] = {
    "clt-check": _run_clt,
    "fclt-check": _run_fclt,
    "bounds": _run_bounds,
    "digital": _run_digital,
    "skew": _run_skew,
    "ldp": _run_ldp,
    "examples": _run_examples,
}


def verdict_passes(verdict: str, expect: str | None = None) -> bool:
    """A verdict passes when it matches the expectation, or is a positive one when none is set."""
    if expect is not None:
        return verdict == expect
    return verdict in (str(Verdict.CONSISTENT), "pass")


@dataclass(frozen=True)
class RunResult:
    """Exit status of one run with its verdict and written files."""

    exit_code: int
    verdict: str | None
    files: tuple[pathlib.Path, ...] = ()
    message: str = ""


def execute(config: RunConfig) -> RunResult:
    """
    Run one configuration and write its artifacts.

    Nothing is written when the configuration or the model is rejected.
    """
    started = time.perf_counter()
    try:
        outcome = HANDLERS[config.command](config)
    except (ValueError, NotImplementedError, KeyError, TypeError) as e:
        logger.error(f"{config.command}: invalid input: {e}")
        return RunResult(EXIT_INPUT, None, message=str(e))
    except RuntimeError as e:
        logger.error(f"{config.command}: numerical failure: {e}")
        return RunResult(EXIT_INPUT, None, message=str(e))

    config.out_dir.mkdir(parents=True, exist_ok=True)
    files = [reports.write_csv(frame, config.out_dir / name) for name, frame in outcome.tables.items()]
    files += [reports.write_json(doc, config.out_dir / name) for name, doc in outcome.documents.items()]
    passed = verdict_passes(outcome.verdict, config.expect)
    files.append(
        reports.write_manifest(
            config.out_dir, config.to_dict(), outcome.verdict, passed, files, time.perf_counter() - started
        )
    )
    if outcome.message:
        logger.info(outcome.message)
    status = "✓" if passed else "✗"
    expectation = f" (expected {config.expect})" if config.expect else ""
    logger.info(f"{status} {config.command}: {outcome.verdict}{expectation} -> {config.out_dir}")
    return RunResult(EXIT_OK if passed else EXIT_VERDICT, outcome.verdict, tuple(files), outcome.message)


def run(config: RunConfig) -> int:
    """Run one configuration; returns the exit status."""
    return execute(config).exit_code


@dataclass(frozen=True)
class SuiteSummary:
    """Aggregated verdicts of a suite."""

    frame: pd.DataFrame
    exit_code: int
    path: pathlib.Path


SUMMARY_COLUMNS = ["config", "command", "verdict", "expected", "passed", "exit_code"]


def reproduce_all(
    suite,
    out_dir=None,
    overrides: Mapping[str, Any] | None = None,
) -> SuiteSummary:
    """
    Run every ``*.json`` configuration in a suite directory, in name order.

    Each run writes into ``<out_dir>/<config stem>``; verdicts are collected in
    ``<out_dir>/summary.csv``. The exit code is the worst over the suite.

    Args:
        suite: directory of run configurations
        out_dir: root for the artifacts, ``runs/<suite name>`` by default
        overrides: simulation settings applied to every configuration (seed, n_paths, threads, ...)
    """
    suite = pathlib.Path(suite)
    if not suite.is_dir():
        raise ConfigError(f"Suite directory {suite} does not exist")
    out_dir = pathlib.Path(out_dir) if out_dir is not None else pathlib.Path("runs") / suite.name
    rows = []
    for path in sorted(suite.glob("*.json")):
        logger.info("=" * 70)
        logger.info(f"Running {path.name}")
        expected = None
        data = None
        try:
            data = read_config(path)
            if isinstance(data, dict):
                data["out_dir"] = str(out_dir / path.stem)
                if overrides:
                    data["sim"] = {**(data.get("sim") or {}), **overrides}
                expected = (data.get("params") or {}).get("expect")
            config = RunConfig.from_dict(data)
            result = execute(config)
        except ConfigError as e:
            logger.error(f"{path.name}: {e}")
            result = RunResult(EXIT_INPUT, None, message=str(e))
        rows.append(
            {
                "config": path.stem,
                "command": data.get("command") if isinstance(data, dict) else None,
                "verdict": result.verdict,
                "expected": expected,
                "passed": result.exit_code == EXIT_OK,
                "exit_code": result.exit_code,
            }
        )

    frame = pd.DataFrame(rows, columns=SUMMARY_COLUMNS)
    exit_code = int(frame["exit_code"].max()) if len(frame) else EXIT_OK
    out_dir.mkdir(parents=True, exist_ok=True)
    path = reports.write_csv(frame, out_dir / "summary.csv")
    logger.info("=" * 70)
    logger.info(f"Suite {suite.name}: {int(frame['passed'].sum())}/{len(frame)} runs pass")
    logger.info("=" * 70)
    return SuiteSummary(frame, exit_code, path)


# -- argument handling ------------------------------------------------------------------

# Flags that map onto params keys, per command.
COMMAND_PARAMS = {
    "clt-check": ("mapping", "t_schedule", "level"),
    "fclt-check": ("mapping", "u_schedule", "t_grid", "level"),
    "bounds": ("c", "t_grid", "bracket", "confidence"),
    "digital": ("T_schedule", "martingale", "require_clt", "confidence", "batch", "r"),
    "skew": ("T_schedule", "dK", "analytic", "tolerance"),
    "ldp": ("sigma", "point", "eps", "t", "h"),
    "examples": ("name", "delta", "p", "t", "rate", "monte_carlo", "confidence"),
}
SIM_FLAGS = {
    "seed": "seed",
    "paths": "n_paths",
    "threads": "threads",
    "scheme": "scheme",
    "h_max": "h_max",
    "h_fraction": "h_fraction",
    "chunk_size": "chunk_size",
    "antithetic": "antithetic",
}


def _parse_param(text: str) -> tuple[str, float]:
    name, sep, value = text.partition("=")
    if not sep:
        raise argparse.ArgumentTypeError(f"Model parameters look like name=value, got '{text}'")
    try:
        return name.strip(), float(value)
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"Parameter '{name}' needs a number, got '{value}'") from e


def config_from_args(args: argparse.Namespace) -> RunConfig:
    """Merge ``--config`` (if any) with the flags; flags win."""
    data: dict[str, Any] = read_config(args.config) if args.config else {}
    if not isinstance(data, dict):
        raise ConfigError("Run configuration must be a JSON object")
    if data.get("command", args.command) != args.command:
        raise ConfigError(f"{args.config} describes '{data['command']}', not '{args.command}'")
    data["command"] = args.command

    if args.model or args.param or args.x0 is not None or args.dim or args.coords or args.jump:
        model = dict(data.get("model") or {})
        if args.model and model.get("kind") not in (None, args.model):
            model = {}
        if args.model:
            model["kind"] = args.model
        if args.param:
            model["params"] = {**model.get("params", {}), **dict(args.param)}
        if args.x0 is not None:
            model["x0"] = args.x0
        if args.dim:
            model["dim"] = args.dim
        if args.coords:
            model["coords"] = args.coords
        if args.jump:
            model["jump"] = json.loads(args.jump)
        data["model"] = model

    sim = dict(data.get("sim") or {"n_paths": DEFAULT_PATHS})
    for flag, key in SIM_FLAGS.items():
        value = getattr(args, flag)
        if value is not None:
            sim[key] = value
    sim.setdefault("n_paths", DEFAULT_PATHS)
    data["sim"] = sim

    params = dict(data.get("params") or {})
    for key in COMMAND_PARAMS[args.command]:
        value = getattr(args, key, None)
        if value is not None:
            params[key] = value
    if args.expect is not None:
        params["expect"] = args.expect
    data["params"] = params
    if args.out is not None:
        data["out_dir"] = args.out
    return RunConfig.from_dict(data)


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration; flags override its values")
    common.add_argument("--out", help="Output directory (default: runs)")
    common.add_argument("--verbose", "-v", action="store_true", help="Enable verbose debug logging")
    sim = common.add_argument_group("simulation")
    sim.add_argument("--seed", type=int, help="64-bit unsigned seed")
    sim.add_argument("--paths", type=int, help=f"Number of paths (default: {DEFAULT_PATHS})")
    sim.add_argument("--threads", type=int, help="Worker cap (default: SMALLTIME_THREADS or CPU count)")
    sim.add_argument("--scheme", choices=["Exact", "EulerMaruyama"], help="Simulation scheme")
    sim.add_argument("--h-max", dest="h_max", type=float, help="Largest Euler step")
    sim.add_argument("--h-fraction", dest="h_fraction", type=float, help="Default Euler step / horizon")
    sim.add_argument("--chunk-size", dest="chunk_size", type=int, help="Paths per random substream")
    sim.add_argument("--antithetic", action="store_true", default=None, help="Antithetic Gaussian draws")
    model = common.add_argument_group("model")
    model.add_argument("--model", help="Model kind (DriftedBM, GBM, CEV, Heston, SquaredBessel, ...)")
    model.add_argument(
        "--param", action="append", type=_parse_param, help="Model parameter name=value (repeatable)"
    )
    model.add_argument("--x0", type=_grid_arg, help="Initial state, comma separated")
    model.add_argument("--dim", type=int, help="State dimension")
    model.add_argument("--coords", choices=["price", "log"], help="Price or log-price state")
    model.add_argument("--jump", help='Jump description as JSON, e.g. \'{"intensity": 1, "a": 0.5}\'')
    common.add_argument("--expect", help="Expected verdict (e.g. inconsistent, degenerate, fail)")
    return common


def build_parser() -> argparse.ArgumentParser:
    """The full argument parser."""
    parser = argparse.ArgumentParser(
        prog="smalltime",
        description="Small-time central limit experiments for SDE models",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Girsanov-Hoelder bounds on a log grid
  smalltime bounds --c 0.5 --t-grid 1e-6:1e-1:log:20 --out runs/b1

  # CLT for log-GBM down to t = 1e-6
  smalltime clt-check --model GBM --param sigma=0.2 --x0 100 --mapping log \\
                      --t-schedule 1e-2:1e-6:log:5 --paths 100000 --seed 7

  # The counterexample catalog
  smalltime examples --name bessel --delta 2

  # Run a JSON configuration, overriding its seed
  smalltime digital --config heston.json --seed 42

  # The shipped acceptance suite
  smalltime reproduce
        """,
    )
    common = _common_parser()
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("clt-check", parents=[common], help="Test the normalized increments against N(0, V)")
    p.add_argument("--mapping", help="identity, log, log_first, square or project[i]")
    p.add_argument("--t-schedule", dest="t_schedule", type=_grid_arg, help="Times, tested largest first")
    p.add_argument("--level", type=float, help="KS significance level (default: 0.001)")

    p = sub.add_parser("fclt-check", parents=[common], help="Process-level check of the rescaled increments")
    p.add_argument("--mapping", help="identity, log, log_first, square or project[i]")
    p.add_argument("--u-schedule", dest="u_schedule", type=_grid_arg, help="Scale factors in (0, 1]")
    p.add_argument("--t-grid", dest="t_grid", type=_grid_arg, help="Increasing times in (0, 1]")
    p.add_argument("--level", type=float, help="KS significance level (default: 0.001)")

    p = sub.add_parser("bounds", parents=[common], help="Girsanov-Hoelder bounds and bracketing")
    p.add_argument("--c", type=float, help="Bound on |sigma^-1 b| (default: read from --model)")
    p.add_argument("--t-grid", dest="t_grid", type=_grid_arg, help="Times")
    p.add_argument(
        "--bracket", action=argparse.BooleanOptionalAction, default=None, help="Check the model's probability"
    )
    p.add_argument("--confidence", type=float, help="Interval confidence (default: 0.99)")

    p = sub.add_parser("digital", parents=[common], help="ATM digital limit or a batch of digitals")
    p.add_argument("--T-schedule", dest="T_schedule", type=_grid_arg, help="Maturities")
    p.add_argument("--martingale", action="store_true", default=None, help="Compare against x0 + compensator")
    p.add_argument(
        "--no-clt-gate",
        dest="require_clt",
        action="store_false",
        default=None,
        help="Skip the CLT admissibility gate",
    )
    p.add_argument("--confidence", type=float, help="Interval confidence (default: 0.99)")
    p.add_argument("--batch", help="JSON list of {S0, K, T, r} entries to price")
    p.add_argument("--r", type=float, help="Discount rate (default: the model's rate)")

    p = sub.add_parser("skew", parents=[common], help="ATM implied-vol slope against its bounds")
    p.add_argument("--T-schedule", dest="T_schedule", type=_grid_arg, help="Maturities")
    p.add_argument("--dK", type=float, help="Strike step (default: S0 max(1e-3, sigma sqrt(T) / 10))")
    p.add_argument("--analytic", action="store_true", default=None, help="Price GBM with Black-Scholes")
    p.add_argument("--tolerance", type=float, help="Relative tolerance of the width-ratio check")

    p = sub.add_parser("ldp", parents=[common], help="Small-time large deviations rate function")
    p.add_argument("--sigma", type=float, help="Constant volatility (default: the model's diffusion)")
    p.add_argument("--at", dest="point", type=float, help="Starting point (default: the model's x0)")
    p.add_argument("--eps", type=_grid_arg, help="Displacements")
    p.add_argument("--t", type=_grid_arg, help="Times for the tail estimate")
    p.add_argument("--h", type=float, help="Step of the second difference")

    p = sub.add_parser("examples", parents=[common], help="Closed-form counterexamples")
    p.add_argument("--name", choices=["bessel", "poisson", "squared_bm", "quantile_drift"])
    p.add_argument("--delta", type=float, help="Squared Bessel dimension")
    p.add_argument("--p", type=float, help="Target probability")
    p.add_argument("--t", type=_grid_arg, help="Times")
    p.add_argument("--rate", type=float, help="Poisson intensity")
    p.add_argument(
        "--monte-carlo",
        dest="monte_carlo",
        action="store_true",
        default=None,
        help="Also simulate the example and check the closed form against its interval",
    )
    p.add_argument("--confidence", type=float, help="Interval confidence (default: 0.99)")

    p = sub.add_parser("reproduce", help="Run every configuration of a suite directory")
    p.add_argument(
        "suite", nargs="?", default=str(SUITE_DIR), help="Suite directory (default: the shipped suite)"
    )
    p.add_argument("--out", help="Output root (default: runs/<suite name>)")
    p.add_argument("--seed", type=int, help="Override every configuration's seed")
    p.add_argument("--paths", type=int, help="Override every configuration's path count")
    p.add_argument("--threads", type=int, help="Worker cap")
    p.add_argument("--verbose", "-v", action="store_true", help="Enable verbose debug logging")
    return parser


def main(argv: list[str] | None = None):
    """Main entry point for the CLI tool."""
    parser = build_parser()
    args = parser.parse_args(argv)

    logging.basicConfig(level=logging.INFO, format="%(asctime)s - %(levelname)s - %(message)s")
    if args.verbose:
        logging.getLogger("smalltime").setLevel(logging.DEBUG)

    print("=" * 70)
    print(f"smalltime {args.command}")
    print("=" * 70)

    try:
        if args.command == "reproduce":
            overrides = {
                key: value
                for key, value in (("seed", args.seed), ("n_paths", args.paths), ("threads", args.threads))
                if value is not None
            }
            summary = reproduce_all(args.suite, args.out, overrides)
            print(summary.frame.to_string(index=False))
            print(f"\nSummary written to {summary.path}")
            sys.exit(summary.exit_code)

        config = config_from_args(args)
        result = execute(config)
        if result.message:
            print(result.message)
        if result.exit_code == EXIT_OK:
            print(f"\n✓ {config.command}: {result.verdict}")
        elif result.verdict is not None:
            print(f"\n✗ {config.command}: {result.verdict}")
        sys.exit(result.exit_code)

    except KeyboardInterrupt:
        print("\n\nRun cancelled by user")
        sys.exit(130)
    except (ConfigError, ValueError) as e:
        logger.error(f"Invalid configuration: {e}")
        sys.exit(EXIT_INPUT)


if __name__ == "__main__":
    main()
