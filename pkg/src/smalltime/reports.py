"""
Report files.

Tables are written as CSV with 17 significant digits so that identical runs
produce byte-identical files; structured results go to sorted, indented JSON.
Every run also leaves a ``manifest.json`` echoing its configuration.
"""

import json
import logging
import math
import pathlib
import platform
from typing import Any

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

CSV_FLOAT_FORMAT = "%.17g"
MANIFEST_NAME = "manifest.json"


def to_jsonable(value: Any) -> Any:
    """Convert numpy scalars and arrays, enums, paths and non-finite floats to JSON values."""
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, list | tuple):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, float | np.floating):
        value = float(value)
        if math.isnan(value):
            return None
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return value
    if isinstance(value, pathlib.PurePath):
        return str(value)
    if hasattr(value, "to_dict"):
        return to_jsonable(value.to_dict())
    if isinstance(value, str | int | bool) or value is None:
        return value
    return str(value)


def write_csv(frame: pd.DataFrame, path) -> pathlib.Path:
    """Write a table without an index."""
    path = pathlib.Path(path)
    frame.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT)
    logger.debug(f"wrote {path} ({len(frame)} rows)")
    return path


def write_json(payload: Any, path) -> pathlib.Path:
    """Write a JSON document with sorted keys."""
    path = pathlib.Path(path)
    path.write_text(json.dumps(to_jsonable(payload), indent=2, sort_keys=True) + "\n")
    logger.debug(f"wrote {path}")
    return path


def write_manifest(
    out_dir,
    config: dict[str, Any],
    verdict: str,
    passed: bool,
    files: list[pathlib.Path],
    wall_time: float,
) -> pathlib.Path:
    """Write manifest.json: configuration echo, code version, seed, verdict, files and wall time."""
    from . import __version__

    out_dir = pathlib.Path(out_dir)
    manifest = {
        "config": config,
        "version": __version__,
        "python": platform.python_version(),
        "seed": (config.get("sim") or {}).get("seed"),
        "verdict": verdict,
        "passed": passed,
        "files": sorted(p.name for p in files),
        "wall_time_seconds": round(wall_time, 3),
    }
    return write_json(manifest, out_dir / MANIFEST_NAME)
