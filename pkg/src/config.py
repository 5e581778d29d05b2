"""
Run Configuration
Flat key=value (or YAML) run configs turned into validated RunConfig objects
"""

import os
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, Iterable, List, Optional, Tuple

import numpy as np
import yaml
from dotenv import dotenv_values

from src.core import (
    ConfigError,
    NoiseMode,
    ObjectiveRegistryError,
    Params,
    ParamsError,
    Scheme,
    validate_params,
)
from src.objectives import OBJECTIVE_REGISTRY, Objective, registry_get
from src.verify import VerifyConfig


@dataclass(frozen=True)
class RunConfig:
    """One optimization experiment: objective, model constants, stopping rule and outputs."""
    objective: str
    objective_params: Dict[str, float] = field(default_factory=dict)
    dim: int = 2
    n_particles: int = 100
    lam: float = 1.0
    sigma: float = 1.0
    beta: float = 10.0
    h: float = 0.01
    scheme: str = "euler"
    noise_mode: str = "common"
    seed: int = 0
    init_seed: Optional[int] = None
    init_low: Tuple[float, ...] = (-2.0,)
    init_high: Tuple[float, ...] = (2.0,)
    max_steps: int = 1000
    diameter_tol: float = 1e-3
    wall_limit: Optional[float] = None
    record_stride: int = 1
    snapshot_times: Tuple[float, ...] = ()
    success_radius: float = 0.25
    init_draws: int = 10_000
    jobs: int = 1
    out_csv: Optional[str] = None
    out_jsonl: Optional[str] = None
    out_snapshots: Optional[str] = None

    def params(self) -> Params:
        try:
            noise_mode = NoiseMode(self.noise_mode)
        except ValueError:
            raise ConfigError(f"noise_mode must be one of {[m.value for m in NoiseMode]}, got '{self.noise_mode}'",
                              key="noise_mode")
        try:
            scheme = Scheme(self.scheme)
        except ValueError:
            raise ConfigError(f"scheme must be one of {[s.value for s in Scheme]}, got '{self.scheme}'",
                              key="scheme")
        return validate_params(Params(
            lam=self.lam,
            sigma=self.sigma,
            beta=self.beta,
            h=self.h,
            n_particles=self.n_particles,
            dim=self.dim,
            noise_mode=noise_mode,
            scheme=scheme,
        ))

    def build_objective(self) -> Objective:
        return registry_get(self.objective, self.dim, self.objective_params)

    def init_box(self) -> Tuple[np.ndarray, np.ndarray]:
        """Per-component (low, high), scalars broadcast to every component."""
        bounds = []
        for key, values in (("init_low", self.init_low), ("init_high", self.init_high)):
            if len(values) not in (1, self.dim):
                raise ConfigError(f"expected 1 or {self.dim} values, got {len(values)}", key=key)
            bounds.append(np.broadcast_to(np.array(values, dtype=np.float64), (self.dim,)).copy())
        low, high = bounds
        if not np.all(low < high):
            raise ConfigError(f"degenerate initialization box: low={low.tolist()}, high={high.tolist()}",
                              key="init_low")
        return low, high

    def validate(self) -> "RunConfig":
        """Check every cross-field invariant; returns self so calls can chain."""
        self.params()
        self.build_objective()
        self.init_box()
        for key in ("max_steps", "record_stride", "jobs", "init_draws"):
            if getattr(self, key) < 1:
                raise ConfigError(f"must be >= 1, got {getattr(self, key)}", key=key)
        if self.diameter_tol < 0:
            raise ConfigError(f"must be >= 0, got {self.diameter_tol}", key="diameter_tol")
        if self.wall_limit is not None and self.wall_limit <= 0:
            raise ConfigError(f"must be > 0, got {self.wall_limit}", key="wall_limit")
        if self.success_radius < 0:
            raise ConfigError(f"must be >= 0, got {self.success_radius}", key="success_radius")
        if any(t < 0 for t in self.snapshot_times):
            raise ConfigError("snapshot times must be >= 0", key="snapshot_times")
        return self

    def output_paths(self, output_dir: str) -> Dict[str, Optional[str]]:
        stem = f"{self.objective}_{self.scheme}_seed{self.seed}"
        return {
            "csv": self.out_csv or os.path.join(output_dir, f"{stem}.csv"),
            "jsonl": self.out_jsonl or os.path.join(output_dir, f"{stem}.jsonl"),
            "snapshots": self.out_snapshots or (
                os.path.join(output_dir, f"{stem}_snapshots.csv") if self.snapshot_times else None
            ),
        }

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["lambda"] = data.pop("lam")
        return data


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

def _to_int(text: str) -> int:
    value = float(text)
    if not value.is_integer():
        raise ValueError(f"expected an integer, got {text}")
    return int(value)


def _to_optional(convert):
    def parse(text: str):
        if text.strip().lower() in ("", "none", "null"):
            return None
        return convert(text)
    return parse


def _to_floats(text: str) -> Tuple[float, ...]:
    parts = [part.strip() for part in text.split(",") if part.strip()]
    if not parts:
        raise ValueError("expected at least one number")
    return tuple(float(part) for part in parts)


def _to_floats_or_empty(text: str) -> Tuple[float, ...]:
    return tuple(float(part) for part in text.split(",") if part.strip())


def _to_str(text: str) -> str:
    text = text.strip()
    if not text:
        raise ValueError("empty value")
    return text


# config key -> (RunConfig field, converter)
FIELDS: Dict[str, Tuple[str, Any]] = {
    "objective": ("objective", _to_str),
    "dim": ("dim", _to_int),
    "n_particles": ("n_particles", _to_int),
    "lambda": ("lam", float),
    "sigma": ("sigma", float),
    "beta": ("beta", float),
    "h": ("h", float),
    "scheme": ("scheme", _to_str),
    "noise_mode": ("noise_mode", _to_str),
    "seed": ("seed", _to_int),
    "init_seed": ("init_seed", _to_optional(_to_int)),
    "init_low": ("init_low", _to_floats),
    "init_high": ("init_high", _to_floats),
    "max_steps": ("max_steps", _to_int),
    "diameter_tol": ("diameter_tol", float),
    "wall_limit": ("wall_limit", _to_optional(float)),
    "record_stride": ("record_stride", _to_int),
    "snapshot_times": ("snapshot_times", _to_floats_or_empty),
    "success_radius": ("success_radius", float),
    "init_draws": ("init_draws", _to_int),
    "jobs": ("jobs", _to_int),
    "out_csv": ("out_csv", _to_optional(str)),
    "out_jsonl": ("out_jsonl", _to_optional(str)),
    "out_snapshots": ("out_snapshots", _to_optional(str)),
}


def objective_param_keys() -> List[str]:
    keys = set()
    for entry in OBJECTIVE_REGISTRY.values():
        keys.update(entry.required_params)
    return sorted(keys)


def _key_lines(path: str) -> Dict[str, int]:
    """Line of the last assignment of each key in a key=value file; later lines win, as in dotenv."""
    lines: Dict[str, int] = {}
    with open(path, "r", encoding="utf-8") as f:
        for number, raw in enumerate(f, start=1):
            text = raw.strip()
            if not text or text.startswith("#") or "=" not in text:
                continue
            key = text.split("=", 1)[0].strip()
            if key.startswith("export "):
                key = key[len("export "):].strip()
            lines[key] = number
    return lines


def _read_key_value(path: str) -> Tuple[Dict[str, Any], Dict[str, int]]:
    lines = _key_lines(path)
    values = dotenv_values(path, interpolate=False)
    for key, value in values.items():
        if value is None:
            raise ConfigError("expected key=value", key=key, line=lines.get(key))
    return dict(values), lines


def _read_yaml(path: str) -> Tuple[Dict[str, Any], Dict[str, int]]:
    with open(path, "r", encoding="utf-8") as f:
        text = f.read()
    try:
        data = yaml.safe_load(text)
        node = yaml.compose(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        raise ConfigError(f"invalid YAML: {e}", line=mark.line + 1 if mark else None)
    if data is None:
        return {}, {}
    if not isinstance(data, dict):
        raise ConfigError("YAML run config must be a flat mapping")
    lines = {}
    for key_node, value_node in node.value:
        lines[str(key_node.value)] = key_node.start_mark.line + 1
        if not isinstance(value_node, yaml.ScalarNode) and not isinstance(data.get(key_node.value), list):
            raise ConfigError("nested values are not allowed", key=str(key_node.value),
                              line=key_node.start_mark.line + 1)
    values = {}
    for key, value in data.items():
        if isinstance(value, list):
            value = ",".join(str(v) for v in value)
        values[str(key)] = "" if value is None else str(value)
    return values, lines


def read_config_file(path: str) -> Tuple[Dict[str, Any], Dict[str, int]]:
    """Raw string values and their line numbers from a key=value or YAML config file."""
    if not os.path.isfile(path):
        raise FileNotFoundError(f"config file not found: {path}")
    if path.lower().endswith((".yaml", ".yml")):
        return _read_yaml(path)
    return _read_key_value(path)


def parse_overrides(items: Iterable[str]) -> Dict[str, str]:
    """--set key=value items, later ones win."""
    overrides: Dict[str, str] = {}
    for item in items or ():
        if "=" not in item:
            raise ConfigError(f"override '{item}' is not of the form key=value")
        key, value = item.split("=", 1)
        key = key.strip()
        if not key:
            raise ConfigError(f"override '{item}' has an empty key")
        overrides[key] = value.strip()
    return overrides


def build_run_config(
    values: Dict[str, Any],
    lines: Optional[Dict[str, int]] = None
) -> RunConfig:
    """Convert raw string values into a validated RunConfig."""
    lines = lines or {}
    param_keys = set(objective_param_keys())
    kwargs: Dict[str, Any] = {}
    objective_params: Dict[str, float] = {}

    for key, raw in values.items():
        line = lines.get(key)
        if key in param_keys:
            try:
                objective_params[key] = float(raw)
            except (TypeError, ValueError):
                raise ConfigError(f"objective parameter must be numeric, got '{raw}'", key=key, line=line)
            continue
        if key not in FIELDS:
            raise ConfigError("unknown key", key=key, line=line)
        name, convert = FIELDS[key]
        try:
            kwargs[name] = convert(str(raw))
        except (TypeError, ValueError) as e:
            raise ConfigError(f"invalid value '{raw}': {e}", key=key, line=line)

    if "objective" not in kwargs:
        raise ConfigError("missing required key", key="objective")
    name = kwargs["objective"]
    if name not in OBJECTIVE_REGISTRY:
        known = ", ".join(sorted(OBJECTIVE_REGISTRY))
        raise ConfigError(f"unknown objective '{name}'; registered: {known}",
                          key="objective", line=lines.get("objective"))
    entry = OBJECTIVE_REGISTRY[name]
    for key in entry.required_params:
        if key not in objective_params:
            raise ConfigError(f"objective '{name}' requires this parameter", key=key)
    extra = sorted(set(objective_params) - set(entry.required_params))
    if extra:
        raise ConfigError(f"not a parameter of objective '{name}'", key=extra[0], line=lines.get(extra[0]))

    config = RunConfig(objective_params=objective_params, **kwargs)
    try:
        return config.validate()
    except ParamsError as e:
        raise ConfigError(str(e))
    except ObjectiveRegistryError as e:
        raise ConfigError(str(e), key="objective")


def load_config(
    path: Optional[str] = None,
    overrides: Optional[Dict[str, str]] = None,
    defaults: Optional[Dict[str, str]] = None
) -> RunConfig:
    """
    Load a run config: defaults, then the file, then command-line overrides.

    Any source may be empty, but together they must name an objective.
    """
    values: Dict[str, Any] = dict(defaults or {})
    lines: Dict[str, int] = {}
    if path:
        file_values, lines = read_config_file(path)
        values.update(file_values)
    for key, value in (overrides or {}).items():
        values[key] = value
        lines.pop(key, None)
    return build_run_config(values, lines)


# ---------------------------------------------------------------------------
# Verification overrides
# ---------------------------------------------------------------------------

_VERIFY_ALIASES = {"lambda": "lam", "steps": "n_steps"}
_VERIFY_FIXED = ("initial", "objective_params")


def parse_verify_overrides(values: Dict[str, str]) -> Dict[str, Any]:
    """
    Typed VerifyConfig field overrides from raw key=value strings.

    Objective parameter keys (B, C) are collected into objective_params.
    """
    defaults = VerifyConfig()
    param_keys = set(objective_param_keys())
    typed: Dict[str, Any] = {}
    objective_params: Dict[str, float] = {}

    for key, raw in values.items():
        if key in param_keys:
            try:
                objective_params[key] = float(raw)
            except ValueError:
                raise ConfigError(f"objective parameter must be numeric, got '{raw}'", key=key)
            continue
        name = _VERIFY_ALIASES.get(key, key)
        if name in _VERIFY_FIXED or not hasattr(defaults, name):
            raise ConfigError("unknown verification key", key=key)
        default = getattr(defaults, name)
        try:
            if isinstance(default, bool):
                typed[name] = raw.strip().lower() in ("1", "true", "yes", "on")
            elif isinstance(default, int):
                typed[name] = _to_int(raw)
            elif isinstance(default, float):
                typed[name] = float(raw)
            elif isinstance(default, tuple):
                typed[name] = _to_floats(raw)
            else:
                typed[name] = _to_str(raw)
        except ValueError as e:
            raise ConfigError(f"invalid value '{raw}': {e}", key=key)

    if objective_params:
        typed["objective_params"] = tuple(sorted(objective_params.items()))
    return typed
