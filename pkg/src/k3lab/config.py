"""Experiment configuration: schema, defaults, loading, and saving.

Configs are flat key-value mappings; files may be JSON objects or plain
``key = value`` lines (with # comments).  Every field carries a type
and a validity rule, checked on construction so bad values fail with
the field named.  Float output formatting is part of the config so
repeated runs emit byte-identical files.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields
from pathlib import Path

__all__ = ["ExperimentConfig", "load_config", "save_config", "pin_float"]


@dataclass(frozen=True)
class ExperimentConfig:
    """Tolerances, thresholds, and output conventions for experiment runs.

    bg_neighbor_factor is the connectivity used by ball-volume ratio
    experiments; raising it tightens graph distances at quadratic edge
    cost, which funnel-bearing fields cannot afford, so the default
    matches the summary connectivity and relies on fractional ball
    volumes for smoothness.
    """

    mesh_resolution: int = 24
    neighbor_factor: float = 2.6
    bg_neighbor_factor: float = 2.6
    landmarks: int = 64
    cluster_tol: float = 1e-8
    volume_tol: float = 1e-2
    ratio_band: float = 0.02
    annulus_band: float = 0.05
    collapse_volume_bound: float = 0.05
    segment_deviation_bound: float = 0.1
    siegel_bound: float = 5.0
    divergence_threshold: float = 20.0
    variation_bound: float = 0.1
    orbifold_grid: int = 16
    curvature_step: float = 1e-3
    seed: int = 7
    out_dir: str = "out"
    strict: bool = False
    float_format: str = ".17g"

    def __post_init__(self):
        for name in (
            "neighbor_factor",
            "bg_neighbor_factor",
            "cluster_tol",
            "volume_tol",
            "ratio_band",
            "annulus_band",
            "collapse_volume_bound",
            "segment_deviation_bound",
            "divergence_threshold",
            "variation_bound",
            "curvature_step",
        ):
            if not getattr(self, name) > 0:
                raise ValueError(f"config field {name!r} must be positive")
        if not self.siegel_bound >= 0:
            raise ValueError("config field 'siegel_bound' must be nonnegative")
        if self.mesh_resolution < 4:
            raise ValueError("config field 'mesh_resolution' must be at least 4")
        if self.landmarks < 2:
            raise ValueError("config field 'landmarks' must be at least 2")
        if self.orbifold_grid < 4:
            raise ValueError("config field 'orbifold_grid' must be at least 4")
        try:
            format(1.0, self.float_format)
        except (ValueError, TypeError) as exc:
            raise ValueError(
                f"config field 'float_format' is not a float format: "
                f"{self.float_format!r}"
            ) from exc

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


_FIELD_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}


def _coerce(name: str, value):
    kind = _FIELD_TYPES[name]
    if kind == "int":
        if isinstance(value, bool) or (
            isinstance(value, float) and not value.is_integer()
        ):
            raise ValueError(f"config field {name!r} must be an integer")
        return int(value)
    if kind == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ValueError(f"config field {name!r} must be a number")
        return float(value)
    if kind == "bool":
        if isinstance(value, bool):
            return value
        if value in ("true", "false"):
            return value == "true"
        raise ValueError(f"config field {name!r} must be true or false")
    return str(value)


def _from_mapping(raw: dict) -> ExperimentConfig:
    unknown = set(raw) - set(_FIELD_TYPES)
    if unknown:
        raise ValueError(f"unknown config field {sorted(unknown)[0]!r}")
    return ExperimentConfig(**{k: _coerce(k, v) for k, v in raw.items()})


def _parse_keyvalue(text: str) -> dict:
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ValueError(f"line {lineno}: expected 'key = value'")
        key, _, value = stripped.partition("=")
        value = value.strip()
        try:
            out[key.strip()] = json.loads(value)
        except json.JSONDecodeError:
            out[key.strip()] = value
    return out


def load_config(path) -> ExperimentConfig:
    """Read a config file (JSON object or key = value lines).

    Missing keys take defaults; unknown keys and invalid values raise
    with the offending field named.
    """
    text = Path(path).read_text()
    if text.lstrip().startswith("{"):
        raw = json.loads(text)
        if not isinstance(raw, dict):
            raise ValueError("config JSON must be an object")
    else:
        raw = _parse_keyvalue(text)
    return _from_mapping(raw)


def save_config(cfg: ExperimentConfig, path) -> None:
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")


def pin_float(x: float, fmt: str = ".17g") -> float:
    """Round-trip a float through the pinned output format."""
    return float(format(float(x), fmt))
