"""Run configuration: validated models, named presets, file loading, overrides.

A configuration document is a nested JSON object with sections `problem`,
`net`, `flow`, `train`, `eval` plus top-level `strategy` and `seeds`.
Unknown keys are rejected with the offending dotted path in the message.
Dotted `--set` overrides parse their value as JSON when possible and fall
back to the raw string.
"""

from __future__ import annotations

import copy
import json
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .errors import ConfigError

PROBLEM_NAMES = ("peak2d", "twopeak2d", "linear_hd", "nonlinear_hd")
STRATEGIES = ("uniform", "das_r", "das_g", "rar")


class ProblemCfg(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: str
    dim: int | None = None
    r_c: float | None = None
    box: list[list[float]] | None = None

    @field_validator("name")
    @classmethod
    def _known_name(cls, v: str) -> str:
        if v not in PROBLEM_NAMES:
            raise ValueError(f"unknown problem {v!r}; expected one of {PROBLEM_NAMES}")
        return v


class NetCfg(BaseModel):
    model_config = ConfigDict(extra="forbid")

    hidden: int = Field(6, ge=1)
    width: int = Field(32, ge=1)


class FlowCfg(BaseModel):
    model_config = ConfigDict(extra="forbid")

    layers: int = Field(6, ge=0)
    blocks: int = Field(1, ge=1)
    width: int = Field(24, ge=1)
    delta: float = Field(0.01, gt=0)
    scale: float = Field(2.0, gt=0)
    clamp: float = Field(5.0, gt=0)


class TrainCfg(BaseModel):
    model_config = ConfigDict(extra="forbid")

    n_interior: int = Field(2000, ge=1)
    n_boundary: int = Field(1000, ge=1)
    n_new: int | list[int] | None = None
    batch: int = Field(500, ge=1)
    epochs: int = Field(3000, ge=0)
    adaptive_stages: int = Field(4, ge=1)
    lr: float = Field(1e-4, gt=0)
    # per-stage multiplier on lr; 1.0 keeps a flat schedule
    lr_stage_decay: float = Field(1.0, gt=0, le=1.0)
    gamma_hat: float = Field(1.0, gt=0)
    gamma: float = Field(1.0, gt=0)
    flow_objective: Literal["auto", "ce_is", "reverse_kl"] = "auto"
    flow_epochs: int | None = Field(None, ge=0)
    flow_batch: int | None = Field(None, ge=1)
    flow_lr: float | None = Field(None, gt=0)
    # Monte Carlo pool size for flow fits; None follows the training-set size
    flow_pool: int | None = Field(None, ge=1)
    rar_pool_factor: int = Field(10, ge=1)

    @field_validator("n_new")
    @classmethod
    def _positive_counts(cls, v):
        if isinstance(v, int) and v < 1:
            raise ValueError("n_new must be positive")
        if isinstance(v, list):
            if not v or any(int(x) < 1 for x in v):
                raise ValueError("n_new list entries must be positive")
        return v


class EvalCfg(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["grid", "origin"] = "grid"
    grid_n: int = Field(256, ge=2)
    origin_n: int = Field(9, ge=2)
    origin_halfwidth: float = Field(0.1, gt=0)
    every: int = Field(50, ge=1)
    kl_grid: int = Field(100, ge=0)


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    problem: ProblemCfg
    net: NetCfg = NetCfg()
    flow: FlowCfg = FlowCfg()
    train: TrainCfg = TrainCfg()
    eval: EvalCfg = EvalCfg()
    strategy: Literal["uniform", "das_r", "das_g", "rar"] = "uniform"
    seeds: list[int] = Field(default_factory=lambda: [0])

    @model_validator(mode="after")
    def _cross_checks(self) -> "RunConfig":
        if self.strategy in ("das_g", "rar") and self.train.n_new is None:
            raise ValueError(f"strategy {self.strategy} requires train.n_new")
        if isinstance(self.train.n_new, list) and len(self.train.n_new) != self.train.adaptive_stages:
            raise ValueError("train.n_new list must have one entry per stage")
        if not self.seeds:
            raise ValueError("seeds must be non-empty")
        return self


def stage_sizes(cfg: RunConfig) -> list[int]:
    """Interior points added at each stage for the growing strategies
    (entry 0 is the initial set size)."""
    n_new = cfg.train.n_new
    k = cfg.train.adaptive_stages
    if n_new is None:
        return [cfg.train.n_interior] * k
    if isinstance(n_new, int):
        return [n_new] * k
    return [int(x) for x in n_new]


PRESETS: dict[str, dict] = {
    "peak2d": {
        "problem": {"name": "peak2d", "r_c": 0.5},
        "net": {"hidden": 6, "width": 32},
        "flow": {"layers": 6, "blocks": 1, "width": 24},
        "train": {"n_interior": 2000, "n_boundary": 1000, "n_new": 500, "batch": 500,
                  "epochs": 3000, "adaptive_stages": 4, "lr": 1e-4},
        "eval": {"kind": "grid", "grid_n": 256, "every": 50},
    },
    "twopeak2d": {
        "problem": {"name": "twopeak2d", "r_c": 0.5},
        "net": {"hidden": 6, "width": 64},
        "flow": {"layers": 8, "blocks": 1, "width": 48},
        "train": {"n_interior": 2500, "n_boundary": 1000, "n_new": 500, "batch": 500,
                  "epochs": 5000, "adaptive_stages": 5, "lr": 1e-4},
        "eval": {"kind": "grid", "grid_n": 256, "every": 50},
    },
    "hd": {
        "problem": {"name": "linear_hd", "dim": 5},
        "net": {"hidden": 6, "width": 64},
        "flow": {"layers": 6, "blocks": 3, "width": 64},
        "train": {"n_interior": 20000, "n_boundary": 4000, "n_new": 4000, "batch": 5000,
                  "epochs": 3000, "adaptive_stages": 5, "lr": 1e-4},
        "eval": {"kind": "origin", "origin_n": 9, "origin_halfwidth": 0.1,
                 "every": 50, "kl_grid": 0},
    },
}


def _deep_merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for key, val in extra.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def _parse_override(text: str) -> tuple[list[str], object]:
    if "=" not in text:
        raise ConfigError(f"override {text!r} must look like key.path=value")
    key, raw = text.split("=", 1)
    path = [p for p in key.strip().split(".") if p]
    if not path:
        raise ConfigError(f"override {text!r} has an empty key")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return path, value


def _set_dotted(doc: dict, path: list[str], value) -> None:
    node = doc
    for part in path[:-1]:
        nxt = node.get(part)
        if nxt is None:
            nxt = node[part] = {}
        elif not isinstance(nxt, dict):
            raise ConfigError(f"cannot set {'.'.join(path)}: {part} is not a section")
        node = nxt
    node[path[-1]] = value


def _validation_message(exc: ValidationError) -> str:
    parts = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        if err["type"] == "extra_forbidden":
            parts.append(f"unknown key {loc!r}")
        else:
            parts.append(f"{loc}: {err['msg']}")
    return "; ".join(parts)


def build_config(doc: dict) -> RunConfig:
    try:
        return RunConfig.model_validate(doc)
    except ValidationError as exc:
        raise ConfigError(_validation_message(exc)) from exc


def load_config(path=None, preset: str | None = None, overrides=(),
                strategy: str | None = None, seeds=None) -> RunConfig:
    """Assemble a config from an optional preset, optional JSON file, and
    dotted overrides, then validate. File contents win over the preset,
    overrides win over both."""
    doc: dict = {}
    file_doc: dict = {}
    if path is not None:
        try:
            with open(path) as fh:
                file_doc = json.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}")
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}")
        if not isinstance(file_doc, dict):
            raise ConfigError(f"config file {path} must hold a JSON object")
        preset = file_doc.pop("preset", preset)
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; expected one of {sorted(PRESETS)}")
        doc = copy.deepcopy(PRESETS[preset])
    doc = _deep_merge(doc, file_doc)
    for text in overrides:
        pth, value = _parse_override(text)
        _set_dotted(doc, pth, value)
    if strategy is not None:
        doc["strategy"] = strategy
    if seeds is not None:
        doc["seeds"] = list(seeds)
    if "problem" not in doc:
        raise ConfigError("no problem selected: pass a config file, a preset, or problem.name")
    return build_config(doc)


def config_doc(cfg: RunConfig) -> dict:
    return cfg.model_dump()


def write_config(cfg: RunConfig, path) -> None:
    with open(path, "w", newline="\n") as fh:
        json.dump(config_doc(cfg), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_config_doc(cfg: RunConfig, seed: int, path) -> None:
    """Resolved single-seed config as stored inside a run directory."""
    doc = config_doc(cfg)
    doc["seeds"] = [int(seed)]
    with open(path, "w", newline="\n") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
