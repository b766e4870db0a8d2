"""Run configurations for the command line.

A configuration is a YAML mapping::

    command: sweep            # equilibria | simulate | sweep | scan | basins | stats | estimate
    seed: 12345               # optional, used by simulate and estimate (synthetic data)
    workers: 1
    out: results/flip-a
    params: {mu: 4.5, wF: 0.9, wC: 0.1}   # any ModelParams field
    sweep: {axis: mu, lo: 3.0, hi: 15.0, n_points: 1201}

Only the block of the selected command is used, but every block is checked:
unknown keys anywhere raise :class:`ConfigError`.  A run manifest written by
the CLI is itself accepted as a configuration (its ``config`` entry is used).
"""

from __future__ import annotations

import copy
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import yaml

from .core import ModelParams, ParameterError

COMMANDS = ("equilibria", "simulate", "sweep", "scan", "basins", "stats", "estimate")

PRESETS = (
    "flip-a", "flip-b", "basins", "stochastic", "deterministic",
    "flip2-a", "flip2-b", "basins2", "stochastic2", "deterministic2",
)

# defaults of every command block; a key missing here is not allowed
BLOCK_DEFAULTS: dict[str, dict[str, Any]] = {
    "simulate": {
        "init": "P2",
        "init_offset": [0.0, 0.0],
        "horizon": 5650,
        "burn_in": 2000,
        "year_length": 365,
        "e_max": 1e6,
        "n_runs": 1,
    },
    "sweep": {
        "axis": "mu",
        "lo": 3.0,
        "hi": 15.0,
        "n_points": 1201,
        "transient": 2000,
        "samples": 200,
        "offset": [1e-3, 0.0],
    },
    "scan": {
        "axis1": {"name": "mu", "lo": 0.0, "hi": 15.0, "n": 151},
        "axis2": {"name": "wflex_beta", "lo": 0.005, "hi": 0.995, "n": 100},
    },
    "basins": {
        "window": None,
        "nx": 401,
        "ny": 401,
        "t_max": 5000,
        "eps_conv": 1e-6,
        "e_max": 1e6,
        "dwell": 10,
        "rle": False,
    },
    "stats": {"input": None, "column": None, "skip": 0},
    "estimate": {"input": None, "synthetic_n": 64, "hyper": None, "lambda": 1600.0},
}
AXIS_KEYS = ("name", "lo", "hi", "n")
WINDOW_KEYS = ("e_center", "dy_center", "e_half", "dy_half")
TOP_KEYS = ("command", "seed", "workers", "out", "params") + tuple(BLOCK_DEFAULTS)
PARAM_KEYS = tuple(ModelParams.__dataclass_fields__)


class _Loader(yaml.SafeLoader):
    """Safe loader that also reads ``3e-05`` (no decimal point) as a float."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(
        r"""^(?:[-+]?(?:[0-9][0-9_]*)\.[0-9_]*(?:[eE][-+]?[0-9]+)?
        |[-+]?(?:[0-9][0-9_]*)(?:[eE][-+]?[0-9]+)
        |\.[0-9_]+(?:[eE][-+]?[0-9]+)?
        |[-+]?\.(?:inf|Inf|INF)
        |\.(?:nan|NaN|NAN))$""",
        re.X,
    ),
    list("-+0123456789."),
)


class ConfigError(ValueError):
    """Malformed or inconsistent configuration."""


@dataclass
class RunConfig:
    command: str
    params: ModelParams
    blocks: dict[str, dict[str, Any]]
    seed: int | None = None
    workers: int = 1
    out: str = "fxgrowth-out"
    raw: dict[str, Any] = field(default_factory=dict)

    def block(self, name: str | None = None) -> dict[str, Any]:
        return self.blocks[name or self.command]

    def to_dict(self) -> dict[str, Any]:
        """Fully resolved configuration; loading it back gives an equal RunConfig."""
        params = {k: v for k, v in self.params.to_dict().items() if v is not None}
        return {
            "command": self.command,
            "seed": self.seed,
            "workers": self.workers,
            "out": self.out,
            "params": params,
            **copy.deepcopy(self.blocks),
        }


def _reject_unknown(where: str, given: dict, allowed) -> None:
    unknown = sorted(set(given) - set(allowed))
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(map(str, unknown))}")


def _merge_block(name: str, given: Any) -> dict[str, Any]:
    defaults = copy.deepcopy(BLOCK_DEFAULTS[name])
    if given is None:
        return defaults
    if not isinstance(given, dict):
        raise ConfigError(f"{name}: expected a mapping")
    _reject_unknown(name, given, defaults)
    out = defaults
    for key, value in given.items():
        if name == "scan" and key in ("axis1", "axis2"):
            if not isinstance(value, dict):
                raise ConfigError(f"scan.{key}: expected a mapping")
            _reject_unknown(f"scan.{key}", value, AXIS_KEYS)
            out[key] = {**out[key], **value}
        elif name == "basins" and key == "window" and value is not None:
            if not isinstance(value, dict):
                raise ConfigError("basins.window: expected a mapping")
            _reject_unknown("basins.window", value, WINDOW_KEYS)
            missing = [k for k in WINDOW_KEYS if k not in value]
            if missing:
                raise ConfigError(f"basins.window: missing {', '.join(missing)}")
            out[key] = {k: float(value[k]) for k in WINDOW_KEYS}
        else:
            out[key] = value
    return out


def from_mapping(doc: Any) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("configuration must be a mapping")
    if "config" in doc and "command" not in doc:
        # a run manifest
        doc = doc["config"]
        if not isinstance(doc, dict):
            raise ConfigError("manifest has no usable config")
    _reject_unknown("config", doc, TOP_KEYS)
    command = doc.get("command")
    if command not in COMMANDS:
        raise ConfigError(f"command: expected one of {', '.join(COMMANDS)}, got {command!r}")
    params_doc = doc.get("params") or {}
    if not isinstance(params_doc, dict):
        raise ConfigError("params: expected a mapping")
    _reject_unknown("params", params_doc, PARAM_KEYS)
    try:
        params = ModelParams(**params_doc)
    except ParameterError:
        raise
    except TypeError as exc:
        raise ConfigError(f"params: {exc}") from exc
    blocks = {name: _merge_block(name, doc.get(name)) for name in BLOCK_DEFAULTS}
    seed = doc.get("seed")
    if seed is not None and (isinstance(seed, bool) or not isinstance(seed, int) or seed < 0):
        raise ConfigError("seed: expected a non-negative integer")
    workers = doc.get("workers", 1)
    if isinstance(workers, bool) or not isinstance(workers, int) or workers < 1:
        raise ConfigError("workers: expected a positive integer")
    out = str(doc.get("out", "fxgrowth-out"))
    return RunConfig(command, params, blocks, seed, workers, out, raw=copy.deepcopy(doc))


def load_text(text: str) -> RunConfig:
    try:
        doc = yaml.load(text, Loader=_Loader)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse configuration: {exc}") from exc
    return from_mapping(doc)


def load(path: str | Path) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    return load_text(text)


def preset_text(name: str) -> str:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    return resources.files("fxgrowth").joinpath("presets", f"{name}.yaml").read_text(encoding="utf-8")


def load_preset(name: str) -> RunConfig:
    return load_text(preset_text(name))
