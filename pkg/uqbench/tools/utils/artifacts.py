"""Output-directory handling and the CSV / JSON / XLSX writers.

Every command writes into its own directory under the output root, next to
the resolved ``config.json``. A directory whose ``config.json`` fingerprint
matches the current config is treated as a cache hit, so reruns skip instead
of silently diverging.
"""
import json
import logging
import os
import shutil
from typing import Any, Dict, Iterable, Optional

import numpy as np
import pandas as pd

from .errors import MissingArtifactError

logger = logging.getLogger(__name__)

CONFIG_FILENAME = "config.json"
# Fixed float rendering keeps CSVs byte-identical across reruns.
FLOAT_FORMAT = "%.10g"


def ensure_dir(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path


def require(path: str, hint: str = "") -> str:
    """Return ``path`` if it exists, else raise MissingArtifactError naming it."""
    if not os.path.exists(path):
        raise MissingArtifactError(path, hint)
    return path


def write_config(directory: str, config) -> str:
    """Write the resolved config (a BenchConfig) plus its fingerprint."""
    ensure_dir(directory)
    path = os.path.join(directory, CONFIG_FILENAME)
    payload = config.to_dict()
    payload["fingerprint"] = config.fingerprint()
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
    return path


def cached_fingerprint(directory: str) -> Optional[str]:
    path = os.path.join(directory, CONFIG_FILENAME)
    if not os.path.exists(path):
        return None
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f).get("fingerprint")
    except (OSError, json.JSONDecodeError) as e:
        logger.warning(f"⚠️ Unreadable cached config at {path}: {e}")
        return None


def is_cached(directory: str, config, outputs: Iterable[str]) -> bool:
    """True when ``directory`` was produced by an identical config and has all outputs."""
    if cached_fingerprint(directory) != config.fingerprint():
        return False
    return all(os.path.exists(os.path.join(directory, name)) for name in outputs)


def write_csv(frame: pd.DataFrame, path: str) -> str:
    ensure_dir(os.path.dirname(os.path.abspath(path)))
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return path


def read_csv(path: str) -> pd.DataFrame:
    return pd.read_csv(require(path))


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value


def write_json(payload: Dict[str, Any], path: str) -> str:
    ensure_dir(os.path.dirname(os.path.abspath(path)))
    with open(path, "w", encoding="utf-8") as f:
        json.dump(_jsonable(payload), f, indent=2, sort_keys=True)
        f.write("\n")
    return path


def read_json(path: str) -> Dict[str, Any]:
    with open(require(path), "r", encoding="utf-8") as f:
        return json.load(f)


def write_workbook(tables: Dict[str, pd.DataFrame], path: str) -> str:
    """Write several tables as sheets of one .xlsx workbook (openpyxl engine)."""
    ensure_dir(os.path.dirname(os.path.abspath(path)))
    with pd.ExcelWriter(path, engine="openpyxl") as writer:
        for sheet, frame in tables.items():
            frame.to_excel(writer, sheet_name=sheet[:31], index=False)
    return path


def clear_directory(directory: str) -> None:
    """Remove a command's output directory (used by --force)."""
    if os.path.exists(directory):
        shutil.rmtree(directory)
        logger.info(f"✅ Cleared {directory}")


__all__ = [
    'CONFIG_FILENAME',
    'FLOAT_FORMAT',
    'ensure_dir',
    'require',
    'write_config',
    'cached_fingerprint',
    'is_cached',
    'write_csv',
    'read_csv',
    'write_json',
    'read_json',
    'write_workbook',
    'clear_directory',
]
