"""Central configuration for benchmark runs.

All commands import ``get_output_root()`` instead of hardcoding paths, and carry
their parameters in a ``BenchConfig``. Environment defaults come from the
process environment or a ``.env`` file:

    UQBENCH_OUTPUT_ROOT  -> default output root (./runs)
    UQBENCH_SEED         -> default root seed (7)
    UQBENCH_WORKERS      -> default worker count for job fan-out (1)
    UQBENCH_LOG_LEVEL    -> logging level name (INFO)
"""
from __future__ import annotations

import copy
import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field
from typing import Any, Dict, List, Tuple

from dotenv import load_dotenv

from .errors import ConfigurationError

load_dotenv()

DEFAULT_OUTPUT_ROOT = "runs"
TRACKS = ("regression", "segmentation", "classification")


def get_output_root() -> str:
    """Return the absolute default output root."""
    return os.path.abspath(os.getenv("UQBENCH_OUTPUT_ROOT", DEFAULT_OUTPUT_ROOT))


def get_default_seed() -> int:
    return int(os.getenv("UQBENCH_SEED", "7"))


def get_default_workers() -> int:
    return max(1, int(os.getenv("UQBENCH_WORKERS", "1")))


def get_log_level() -> str:
    return os.getenv("UQBENCH_LOG_LEVEL", "INFO").upper()


@dataclass
class RegressionSettings:
    alphas: List[float] = field(default_factory=lambda: [0.01, 0.05, 0.10, 0.15, 0.20])
    n_per_axis: int = 200
    strategy: str = "random80_20"           # random80_20 | checkerboard
    size_multipliers: List[int] = field(default_factory=lambda: [1, 4, 16])
    size_study_alpha: float = 0.10
    seeds: int = 1                          # seeds per cell; tables report the median
    cells_per_axis: int = 5
    train_parity: int = 0                   # (i + j) % 2 == train_parity -> train
    methods: List[str] = field(default_factory=lambda: ["mc_dropout", "adf"])
    t_samples: int = 50
    bias_correction: bool = False


@dataclass
class OracleSettings:
    """Dense-sampling oracle.

    ``stencil_scale`` sets the refinement patch half-width to ``stencil_scale * alpha``
    relative to the node; it approximates the spacing of a dense noisy-input grid
    around that node.
    """
    preset: str = "desk"                    # desk | paper | preview | custom
    n_dense: int = 2000
    k_neighbors: int = 200
    lattice: int = 50
    stencil_scale: float = 0.1
    family: str = "power_d2h"               # power_d2h | power_dh
    workers: int = 1


@dataclass
class NetSettings:
    hidden: List[int] = field(default_factory=lambda: [16, 32, 32])
    dropout: float = 0.10
    epochs: int = 60
    batch: int = 64
    step_size: float = 0.01
    momentum: float = 0.9


@dataclass
class SegmentationSettings:
    kinds: List[str] = field(default_factory=lambda: ["gaussian", "poisson", "jitter"])
    levels: List[int] = field(default_factory=lambda: [0, 1, 2, 4, 8])
    level_scale: float = 0.01               # intensity noise: n = level * level_scale
    centered_poisson: bool = True
    scene_size: int = 48
    n_rects: int = 6
    train_scenes: int = 4
    test_scenes: int = 2
    window_radius: int = 2
    hidden: List[int] = field(default_factory=lambda: [16, 16])
    replicates: int = 50
    mc_samples: int = 5000
    bins: int = 50
    estimator: str = "histogram"            # histogram | categorical
    epochs: int = 8
    bnn_epochs: int = 6


@dataclass
class ClassificationSettings:
    k_classes: int = 17
    votes: int = 10
    n_items: int = 3000
    feature_dim: int = 8
    diagonal: float = 0.85
    test_fraction: float = 0.3
    ece_bins: int = 10
    hidden: List[int] = field(default_factory=lambda: [32, 32])
    epochs: int = 40
    seeds: List[int] = field(default_factory=lambda: [1, 2, 3, 4, 5])


@dataclass
class BenchConfig:
    track: str = "regression"
    seed: int = field(default_factory=get_default_seed)
    output_dir: str = field(default_factory=get_output_root)
    workers: int = field(default_factory=get_default_workers)
    regression: RegressionSettings = field(default_factory=RegressionSettings)
    oracle: OracleSettings = field(default_factory=OracleSettings)
    net: NetSettings = field(default_factory=NetSettings)
    segmentation: SegmentationSettings = field(default_factory=SegmentationSettings)
    classification: ClassificationSettings = field(default_factory=ClassificationSettings)

    def validate(self) -> "BenchConfig":
        if self.track not in TRACKS:
            raise ConfigurationError(f"Unknown track '{self.track}'; expected one of {TRACKS}")
        if self.regression.strategy not in ("random80_20", "checkerboard"):
            raise ConfigurationError(f"Unknown split strategy '{self.regression.strategy}'")
        if any(a < 0 for a in self.regression.alphas):
            raise ConfigurationError("Noise levels must be >= 0")
        for m in self.regression.size_multipliers:
            if int(round(m ** 0.5)) ** 2 != m:
                raise ConfigurationError(f"Size multiplier {m} is not a perfect square")
        if self.oracle.preset not in ORACLE_PRESETS and self.oracle.preset != "custom":
            raise ConfigurationError(f"Unknown oracle preset '{self.oracle.preset}'")
        if not 0 <= self.net.dropout < 1:
            raise ConfigurationError(f"Dropout rate must be in [0, 1), got {self.net.dropout}")
        return self

    def resolved_oracle(self) -> OracleSettings:
        """Oracle settings with the preset applied (custom keeps explicit values)."""
        if self.oracle.preset == "custom":
            return self.oracle
        n_dense, k, lattice = ORACLE_PRESETS[self.oracle.preset]
        return dataclasses.replace(self.oracle, n_dense=n_dense, k_neighbors=k, lattice=lattice)

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def fingerprint(self) -> str:
        """Stable hash of the resolved config (output_dir and workers excluded)."""
        data = self.to_dict()
        data.pop("output_dir", None)
        data.pop("workers", None)
        return hashlib.sha256(json.dumps(data, sort_keys=True).encode("utf-8")).hexdigest()[:16]

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "BenchConfig":
        cfg = cls()
        return cfg.with_overrides(_flatten(data))

    @classmethod
    def from_json(cls, path: str) -> "BenchConfig":
        if not os.path.exists(path):
            raise ConfigurationError(f"Config file not found: {path}")
        with open(path, "r", encoding="utf-8") as f:
            return cls.from_dict(json.load(f))

    def with_overrides(self, overrides: Dict[str, Any]) -> "BenchConfig":
        """Return a copy with dotted-path overrides applied, e.g. ``{'net.epochs': 5}``."""
        cfg = _deep_copy(self)
        for dotted, value in overrides.items():
            target = cfg
            parts = dotted.split(".")
            for part in parts[:-1]:
                if not hasattr(target, part):
                    raise ConfigurationError(f"Unknown config section '{part}' in '{dotted}'")
                target = getattr(target, part)
            leaf = parts[-1]
            if not dataclasses.is_dataclass(target) or leaf not in {f.name for f in dataclasses.fields(target)}:
                raise ConfigurationError(f"Unknown config key '{dotted}'")
            setattr(target, leaf, _coerce(getattr(target, leaf), value, dotted))
        return cfg


# preset -> (n_dense per axis, k neighbours, lattice nodes per axis)
ORACLE_PRESETS: Dict[str, Tuple[int, int, int]] = {
    "desk": (2000, 200, 50),
    "preview": (5000, 100, 50),
    "paper": (20000, 800, 50),
}


def _deep_copy(cfg: BenchConfig) -> BenchConfig:
    return copy.deepcopy(cfg)


def _flatten(data: Dict[str, Any], prefix: str = "") -> Dict[str, Any]:
    flat: Dict[str, Any] = {}
    for key, value in data.items():
        dotted = f"{prefix}{key}"
        if isinstance(value, dict):
            flat.update(_flatten(value, dotted + "."))
        else:
            flat[dotted] = value
    return flat


def _coerce(current: Any, value: Any, dotted: str) -> Any:
    """Coerce a JSON or command-line value to the type of the current setting."""
    if isinstance(value, str) and not isinstance(current, str):
        try:
            value = json.loads(value)
        except json.JSONDecodeError as e:
            raise ConfigurationError(f"Cannot parse value for '{dotted}': {value!r}") from e
    try:
        if isinstance(current, bool):
            return bool(value)
        if isinstance(current, int):
            return int(value)
        if isinstance(current, float):
            return float(value)
        if isinstance(current, list):
            items = value if isinstance(value, list) else [value]
            kind = type(current[0]) if current else None
            return [kind(v) for v in items] if kind else list(items)
    except (TypeError, ValueError) as e:
        raise ConfigurationError(f"Bad value for '{dotted}': {value!r}") from e
    return value


__all__ = [
    'BenchConfig',
    'RegressionSettings',
    'OracleSettings',
    'NetSettings',
    'SegmentationSettings',
    'ClassificationSettings',
    'ORACLE_PRESETS',
    'TRACKS',
    'get_output_root',
    'get_default_seed',
    'get_default_workers',
    'get_log_level',
]
