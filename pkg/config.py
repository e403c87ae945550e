"""
config.py — Experiment configuration.

A run is described by one JSON document: either a built-in scenario id
(plus optional constructor params) or an inline/linked model and mixing
measure, followed by whatever parameters the chosen command needs. Anything
missing falls back to the scenario's defaults, then to the module defaults.

    {
      "scenario": "sqrt-decay",
      "n_grid": [10, 50, 200, 400],
      "M": 2000, "R": 10,
      "metric": "wasserstein",
      "seed": 20240501,
      "out": "runs/sqrt"
    }
"""

import json
import logging
import os
from dataclasses import dataclass, field, fields

from workers import MAX_SEED

logger = logging.getLogger(__name__)

METRIC_CHOICES = ("wasserstein", "energy")

# Fields that may hold an inline JSON object or a path to one
LINKED_FIELDS = ("model", "mixing", "reference")


class ConfigError(ValueError):
    """Config file missing, malformed or inconsistent."""


@dataclass
class ExperimentConfig:
    scenario: str | None = None
    scenario_params: dict = field(default_factory=dict)
    model: dict | None = None
    mixing: dict | None = None
    reference: dict | None = None
    grid: list | None = None
    N: int | None = None
    decay_threshold: float = 1e-8
    floor_threshold: float = 1e-6
    n_grid: list[int] | None = None
    M: int | None = None
    R: int | None = None
    metric: str | None = None
    projection: int | list[float] | None = None
    J: int | None = None
    rank_tol: float = 1e-9
    seed: int = 0
    out: str = "lls_out"

    def validate(self):
        """Raise ConfigError naming the first offending field."""
        if (self.scenario is None) == (self.model is None):
            raise ConfigError("Give exactly one of 'scenario' or 'model' + 'mixing'")
        if self.model is not None and self.mixing is None:
            raise ConfigError("'mixing' is required alongside an inline 'model'")
        if not isinstance(self.seed, int) or isinstance(self.seed, bool) \
                or not 0 <= self.seed <= MAX_SEED:
            raise ConfigError(f"'seed' must be an unsigned 64-bit integer, got {self.seed!r}")
        for name in ("decay_threshold", "floor_threshold", "rank_tol"):
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or value <= 0:
                raise ConfigError(f"'{name}' must be positive, got {value!r}")
        for name in ("N", "M", "R", "J"):
            value = getattr(self, name)
            if value is not None and (not isinstance(value, int) or value < 1):
                raise ConfigError(f"'{name}' must be an integer ≥ 1, got {value!r}")
        if self.n_grid is not None:
            if not self.n_grid or not all(isinstance(n, int) and n >= 1 for n in self.n_grid):
                raise ConfigError("'n_grid' must be a non-empty list of positive integers")
            if any(b <= a for a, b in zip(self.n_grid, self.n_grid[1:])):
                raise ConfigError(f"'n_grid' must be strictly ascending, got {self.n_grid}")
        if self.metric is not None and self.metric not in METRIC_CHOICES:
            raise ConfigError(
                f"'metric' must be one of {', '.join(METRIC_CHOICES)}, got {self.metric!r}"
            )
        if not isinstance(self.scenario_params, dict):
            raise ConfigError("'scenario_params' must be an object")

    def thresholds(self) -> dict:
        return {
            "decay_threshold": self.decay_threshold,
            "floor_threshold": self.floor_threshold,
            "rank_tol": self.rank_tol,
        }


def _read_json(path: str, what: str):
    if not os.path.exists(path):
        raise ConfigError(f"{what} not found: {path}")
    with open(path) as f:
        try:
            return json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(
                f"{path}: invalid JSON at line {e.lineno}, column {e.colno}: {e.msg}"
            ) from e


def config_from_dict(doc: dict, base_dir: str = ".") -> ExperimentConfig:
    """Build and validate a config; linked files resolve relative to base_dir."""
    if not isinstance(doc, dict):
        raise ConfigError("Config must be a JSON object")
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = sorted(set(doc) - known)
    if unknown:
        raise ConfigError(f"Unknown config field(s): {', '.join(unknown)}")

    doc = dict(doc)
    for name in LINKED_FIELDS:
        value = doc.get(name)
        if isinstance(value, str):
            path = value if os.path.isabs(value) else os.path.join(base_dir, value)
            doc[name] = _read_json(path, f"'{name}' file")
        elif value is not None and not isinstance(value, dict):
            raise ConfigError(f"'{name}' must be an object or a path, got {type(value).__name__}")

    cfg = ExperimentConfig(**doc)
    cfg.validate()
    return cfg


def load_config(path: str) -> ExperimentConfig:
    """Read and validate the JSON experiment config at path."""
    doc = _read_json(path, "Config file")
    cfg = config_from_dict(doc, os.path.dirname(os.path.abspath(path)))
    logger.debug(f"Loaded config from {path}")
    return cfg
