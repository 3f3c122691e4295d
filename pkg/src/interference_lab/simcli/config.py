"""Experiment configuration: defaults, file loading, strict validation.

Configs are YAML (JSON is accepted as a mirror since YAML is a superset).
Every scenario has built-in defaults mirroring the published simulation
settings; a config file overrides them. Unknown keys are rejected.
"""

from __future__ import annotations

import copy
import json
from pathlib import Path

import yaml

from ..errors import ConfigError

__all__ = ["SCENARIOS", "SCALE_FACTORS", "load_config", "resolve_config", "effective_reps"]

SCALE_FACTORS = {"full": 1.0, "half": 0.5, "quarter": 0.25}

_SHARED = {
    "seed": (int, 2),
    "out": (str, "results"),
    "scale": (str, "full"),
    "threads": (int, 1),
    "figures": (bool, True),
    "reps": (int, None),  # per-scenario default below
}

# per-scenario keys: name -> (type, default)
_SCHEMAS: dict[str, dict] = {
    "clt-tec": {
        "n": (list, [100, 500, 1000]),
        "n_is": (str, "households"),  # sample sizes count households; "units" sizes the population directly
        "partition_file": (str, None),  # unit,group CSV; overrides the generated households
        "reps": (int, 50_000),
        "design": (dict, {"variant": "two-stage", "p_arm": 0.5, "p_high": 0.9, "p_low": 0.1}),
        "group_min": (int, 2),
        "group_max": (int, 4),
        "map": (str, "self-any-neighbor"),
        "dgp": (dict, {"family": "bernoulli-linear"}),
        "contrast": (dict, {"k": [1, 0], "kprime": [0, 0]}),
        "alpha": (float, 0.05),
        "delta": (float, 0.04),
        "variance_variant": (str, "conservative"),
    },
    "clt-atec": {
        "n": (list, [1000]),
        "reps": (int, 50_000),
        "design": (dict, {"variant": "two-stage", "p_arm": 0.5, "p_high": 0.9, "p_low": 0.1}),
        "group_min": (int, 2),
        "group_max": (str, "cbrt"),  # floor(n^(1/3)); an int fixes it
        "T": (str, "sqrt"),  # floor(sqrt(n)); an int fixes it
        "map": (str, "self-fraction-buckets"),
        "dgp": (dict, {"family": "normal-linear-temporal"}),
        "contrast": (dict, {"k": [1, 3], "kprime": [0, 0]}),
        "alpha": (float, 0.05),
        "delta": (float, 0.04),
        "variance_variant": (str, "as-published"),
    },
    "stability-rmse": {
        "seed": (int, 6),
        "graph_file": (str, None),  # edge-list CSV; overrides the generated network
        "n": (list, [50, 100, 250, 500, 750, 1000]),
        "reps": (int, 100),
        "er_base_p": (float, 0.1),
        "er_base_n": (int, 50),
        "design_p": (float, 0.5),
        "epsilon": (float, 3.0),
        "T": (int, 20),
        "t_target": (int, 20),
        "k_steps": (list, [2, 5]),
        "variance": (str, "upper"),
    },
    "stability-ci": {
        "seed": (int, 6),
        "n": (list, [100]),
        "reps": (int, 1000),
        "networks": (int, 3),
        "er_p": (float, 0.05),
        "design_p": (float, 0.5),
        "epsilon": (float, 3.0),
        "T": (int, 20),
        "t_target": (int, 20),
        "alpha": (float, 0.05),
        "delta_chebyshev": (float, 0.05),
    },
    "epsilon-sensitivity": {
        "seed": (int, 6),
        "n": (list, [50]),
        "reps": (int, 500),
        "er_base_p": (float, 0.1),
        "er_base_n": (int, 50),
        "design_p": (float, 0.5),
        "epsilon": (float, 3.0),
        "T": (int, 20),
        "t_target": (int, 20),
        "k_steps": (list, [2, 5]),
        "multipliers": (list, [1.0, 1.5, 2.0, 2.5, 3.0]),
        "variance": (str, "upper"),
    },
    "group-size": {
        "r": (list, [4, 8]),
        "n": (list, [160, 640, 2560]),
        "reps": (int, 50_000),
        "design_p": (float, 0.5),
        "map": (str, "self-fraction-buckets"),
        "dgp": (dict, {"family": "appendix-group-size"}),
        "contrast": (dict, {"k": [1, 3], "kprime": [0, 0]}),
    },
    "household-mixed": {
        "r": (int, 2),
        "n": (list, [4, 8, 16]),  # household counts
        "reps": (int, 20_000),
        "T": (str, "auto"),  # ceil(n^1.2); an int fixes it
        "design_p": (float, 0.5),
        "dgp": (dict, {"family": "normal-linear"}),
        "mc_check": (bool, True),
    },
}

SCENARIOS = tuple(_SCHEMAS)


def load_config(path) -> dict:
    """Parse a YAML or JSON config file into a plain dict."""
    text = Path(path).read_text()
    try:
        if str(path).endswith(".json"):
            data = json.loads(text)
        else:
            data = yaml.safe_load(text)
    except (yaml.YAMLError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    return data


def _check_type(key, value, expected):
    if expected is float and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if expected is int and isinstance(value, bool):
        raise ConfigError(f"config key {key!r} must be an integer")
    # keys documented as str-or-int sentinels ("sqrt", "cbrt", "auto") accept ints
    if expected is str and isinstance(value, int) and not isinstance(value, bool):
        return value
    if not isinstance(value, expected):
        raise ConfigError(
            f"config key {key!r} must be {expected.__name__}, got {type(value).__name__}"
        )
    return value


def resolve_config(scenario: str, overrides: dict | None = None, **cli_overrides) -> dict:
    """Merge defaults, file overrides and CLI overrides; validate strictly."""
    if scenario not in _SCHEMAS:
        raise ConfigError(
            f"unknown scenario {scenario!r}; choose from {', '.join(SCENARIOS)}"
        )
    schema = {**_SHARED, **_SCHEMAS[scenario]}
    resolved = {key: copy.deepcopy(default) for key, (_, default) in schema.items()}
    merged = dict(overrides or {})
    file_scenario = merged.pop("scenario", None)
    if file_scenario is not None and file_scenario != scenario:
        raise ConfigError(
            f"config file is for scenario {file_scenario!r}, not {scenario!r}"
        )
    for key, value in {**merged, **cli_overrides}.items():
        if value is None:
            continue
        if key not in schema:
            raise ConfigError(f"unknown config key {key!r} for scenario {scenario!r}")
        resolved[key] = _check_type(key, value, schema[key][0])
    if resolved["scale"] not in SCALE_FACTORS:
        raise ConfigError(
            f"scale must be one of {sorted(SCALE_FACTORS)}, got {resolved['scale']!r}"
        )
    if resolved["threads"] < 1:
        raise ConfigError("threads must be >= 1")
    if resolved["reps"] is not None and resolved["reps"] < 1:
        raise ConfigError("reps must be >= 1")
    resolved["scenario"] = scenario
    return resolved


def effective_reps(cfg: dict, floor: int = 50) -> int:
    """Replication count after the scale preset is applied."""
    reps = int(cfg["reps"])
    return max(floor, int(round(reps * SCALE_FACTORS[cfg["scale"]])))
