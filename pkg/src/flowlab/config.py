"""Strict experiment configuration: one JSON document, unknown fields rejected.

Validation walks a declarative schema and reports the dotted path of the
offending field, so misconfigurations fail loudly before any compute starts.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any

from .errors import ConfigError

_REQUIRED = object()


def _check(value, kind, path):
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return int(value)
    if kind is str:
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        return value
    if kind is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected a boolean, got {value!r}")
        return value
    raise AssertionError(kind)


def _check_list(value, kind, path):
    if not isinstance(value, list) or not value:
        raise ConfigError(f"{path}: expected a non-empty list")
    return [_check(v, kind, f"{path}[{i}]") for i, v in enumerate(value)]


def _walk(data, schema, path):
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'}: expected an object")
    unknown = set(data) - set(schema)
    if unknown:
        raise ConfigError(f"{path or 'config'}: unknown field(s) {sorted(unknown)}")
    out = {}
    for key, rule in schema.items():
        sub_path = f"{path}.{key}" if path else key
        if key not in data:
            if rule.get("default", _REQUIRED) is _REQUIRED:
                raise ConfigError(f"{sub_path}: required field missing")
            out[key] = rule["default"]
            continue
        value = data[key]
        if "schema" in rule:
            out[key] = _walk(value, rule["schema"], sub_path)
        elif "list_of" in rule:
            out[key] = _check_list(value, rule["list_of"], sub_path)
        elif "matrix" in rule:
            if not isinstance(value, list) or not all(isinstance(r, list) for r in value):
                raise ConfigError(f"{sub_path}: expected a list of rows")
            out[key] = [
                [_check(v, int, f"{sub_path}[{i}][{j}]") for j, v in enumerate(row)]
                for i, row in enumerate(value)
            ]
        else:
            out[key] = _check(value, rule["type"], sub_path)
    return out


_BASE_MAP = {
    "kind": {"type": str},
    "matrix": {"matrix": True, "default": None},
    "angles": {"list_of": float, "default": None},
}

_GRID = {
    "delta": {"type": float, "default": 0.1},
    "n_values": {"list_of": int},
    "eps_values": {"list_of": float},
    "time_step": {"type": float, "default": 0.1},
    "method": {"type": str, "default": "greedy_cover"},
    "fit_fraction": {"type": float, "default": 0.05},
    "fit_skip_initial": {"type": int, "default": 1},
}

_SAMPLING = {
    "cloud_size": {"type": int, "default": 20000},
    "burn_in": {"type": int, "default": 64},
    "chains": {"type": int, "default": 128},
}

_FIELD = {
    "kind": {"type": str},
    "value": {"type": float, "default": 1.0},
    "chart_radius": {"type": float, "default": 0.2},
    "index": {"type": int, "default": 1},
    "l_scale": {"type": float, "default": 1.0},
    "l_ratio": {"type": float, "default": 0.1},
    "n_shells": {"type": int, "default": 64},
}

_RECURRENCE_SOURCE = {
    "mode": {"type": str, "default": "auto"},  # auto | certified | empirical
    "orbit_length": {"type": int, "default": 100000},
    "index_cap": {"type": int, "default": 12},
}

SCHEMA = {
    "seed": {"type": int},
    "output_dir": {"type": str, "default": "out"},
    "base_map": {"schema": _BASE_MAP},
    "marked_point": {
        "schema": {
            "base": {"list_of": float},
            "height": {"type": float, "default": 0.0},
        },
        "default": None,
    },
    "sampling": {"schema": _SAMPLING, "default": None},
    "grid": {"schema": _GRID, "default": None},
    "flatfn": {
        "schema": {
            "index": {"type": int, "default": 1},
            "l_scale": {"type": float, "default": 1.0},
            "l_ratio": {"type": float, "default": 0.25},
            "n_shells": {"type": int, "default": 64},
            "shell_count": {"type": int, "default": 11},
            "points_per_shell": {"type": int, "default": 100},
            "derivative_orders": {"type": int, "default": 4},
            "recurrence": {"schema": _RECURRENCE_SOURCE, "default": None},
        },
        "default": None,
    },
    "entropy": {
        "schema": {
            "targets": {"list_of": str, "default": ["map", "suspension"]},
            "field": {"schema": _FIELD, "default": None},
            "sub_step": {"type": float, "default": 0.05},
        },
        "default": None,
    },
    "recurrence": {
        "schema": {
            "epsilons": {"list_of": float},
            "grid_resolution_factor": {"type": float, "default": 0.25},
            "horizon": {"type": int, "default": 1000000},
            "ball_check": {"type": bool, "default": True},
            "ball_orbit_length": {"type": int, "default": 1000000},
            "ball_centers": {"type": int, "default": 3},
        },
        "default": None,
    },
    "timechange": {
        "schema": {
            "field": {"schema": _FIELD},
            "cocycle_samples": {"type": int, "default": 200},
            "roundtrip_samples": {"type": int, "default": 50},
            "gamma_samples": {"type": int, "default": 200},
            "density_samples": {"type": int, "default": 65536},
            "time_span": {"type": float, "default": 10.0},
        },
        "default": None,
    },
    "dichotomy": {
        "schema": {
            "flat_indices": {"list_of": int, "default": [1, 2, 3, 4, 5, 6]},
            "horizons": {"list_of": int, "default": [8, 16, 32, 64, 128, 256]},
            "chart_radius_entropy": {"type": float, "default": 0.4},
            "chart_radius_gamma": {"type": float, "default": 0.12},
            "chart_radius_quadratic": {"type": float, "default": 0.2},
            "l_scale": {"type": float, "default": 3.0},
            "l_ratio": {"type": float, "default": 0.1},
            "gamma_samples": {"type": int, "default": 200},
            "entropy_cloud": {"type": int, "default": 8000},
            "reference_cloud": {"type": int, "default": 20000},
            "density_samples": {"type": int, "default": 65536},
            "witness_points": {"type": int, "default": 10},
            "witness_horizon": {"type": float, "default": 20.0},
            "eps_values": {"list_of": float, "default": [0.2, 0.1]},
            "time_step": {"type": float, "default": 0.1},
            "sub_step": {"type": float, "default": 0.05},
            "recurrence": {"schema": _RECURRENCE_SOURCE, "default": None},
        },
        "default": None,
    },
}


@dataclass
class ExperimentConfig:
    """Validated configuration; ``raw`` echoes exactly what determines a run."""

    raw: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        return cls(_walk(data, SCHEMA, ""))

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON (line {exc.lineno}): {exc.msg}") from exc
        return cls.from_dict(data)

    def __getitem__(self, key: str) -> Any:
        return self.raw[key]

    def section(self, key: str) -> dict:
        value = self.raw.get(key)
        if value is None:
            raise ConfigError(f"this command needs a '{key}' config section")
        return value
