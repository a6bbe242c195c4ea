"""Flat YAML experiment configuration with strict schema validation.

Every run is described by one flat mapping; unknown or ill-typed keys are
rejected with a single error listing all offenders, so a typo'd key can
never silently fall back to a default.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, fields
from pathlib import Path

import yaml

from ..errors import ValidationError

CONFIG_VERSION = 1

_METHODS = ("deepjscc", "sing_zero", "sing_inn")
_OPERATORS = ("identity", "mean_pool", "decolorize")


@dataclass
class ExperimentConfig:
    config_version: int = CONFIG_VERSION
    dataset_dir: str = ""
    image_size: int = 64
    channels: int = 3
    bcr: float = 0.0052
    seed: int = 0
    snr_grid: list[float] = field(default_factory=lambda: [-5.0, -3.0, -1.0, 1.0, 3.0, 5.0])
    methods: list[str] = field(default_factory=lambda: ["deepjscc", "sing_zero", "sing_inn"])
    operator_kind: str = "mean_pool"
    operator_scale: int = 2
    split_ratios: list[float] = field(default_factory=lambda: [8.0, 1.0, 1.0])
    t_effective: int | None = None
    zeta: float | None = None
    guidance_through_denoiser: bool = True
    train_snr_low: float = -5.0
    train_snr_high: float = 5.0
    jscc_hidden: int = 32
    jscc_down: int = 2
    jscc_lambda: float = 1.0
    jscc_snr_input: bool = False
    jscc_steps: int = 2000
    jscc_lr: float = 1e-4
    jscc_batch: int = 32
    ddpm_timesteps: int = 1000
    ddpm_width: int = 48
    ddpm_depth: int = 4
    ddpm_steps: int = 2000
    ddpm_lr: float = 1e-4
    ddpm_batch: int = 16
    inn_pairs: int = 4
    inn_blocks: int = 2
    inn_hidden: int = 32
    inn_epochs: int = 4
    inn_lr: float = 5e-5
    inn_batch: int = 32
    inn_pair_images: int = 0  # cap on images used for measurement pairs; 0 = whole train split
    eval_images: int = 8
    jscc_checkpoint: str | None = None
    ddpm_checkpoint: str | None = None
    inn_checkpoint: str | None = None

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _check_type(value, kind: str) -> bool:
    if kind == "int":
        return isinstance(value, int) and not isinstance(value, bool)
    if kind == "float":
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if kind == "str":
        return isinstance(value, str)
    if kind == "bool":
        return isinstance(value, bool)
    if kind.startswith("opt_"):
        return value is None or _check_type(value, kind[4:])
    if kind == "list_float":
        return isinstance(value, list) and all(_check_type(v, "float") for v in value)
    if kind == "list_str":
        return isinstance(value, list) and all(isinstance(v, str) for v in value)
    raise AssertionError(kind)


_FIELD_KINDS = {
    "config_version": "int",
    "dataset_dir": "str",
    "image_size": "int",
    "channels": "int",
    "bcr": "float",
    "seed": "int",
    "snr_grid": "list_float",
    "methods": "list_str",
    "operator_kind": "str",
    "operator_scale": "int",
    "split_ratios": "list_float",
    "t_effective": "opt_int",
    "zeta": "opt_float",
    "guidance_through_denoiser": "bool",
    "train_snr_low": "float",
    "train_snr_high": "float",
    "jscc_hidden": "int",
    "jscc_down": "int",
    "jscc_lambda": "float",
    "jscc_snr_input": "bool",
    "jscc_steps": "int",
    "jscc_lr": "float",
    "jscc_batch": "int",
    "ddpm_timesteps": "int",
    "ddpm_width": "int",
    "ddpm_depth": "int",
    "ddpm_steps": "int",
    "ddpm_lr": "float",
    "ddpm_batch": "int",
    "inn_pairs": "int",
    "inn_blocks": "int",
    "inn_hidden": "int",
    "inn_epochs": "int",
    "inn_lr": "float",
    "inn_batch": "int",
    "inn_pair_images": "int",
    "eval_images": "int",
    "jscc_checkpoint": "opt_str",
    "ddpm_checkpoint": "opt_str",
    "inn_checkpoint": "opt_str",
}


def validate_config(raw: dict) -> ExperimentConfig:
    """Build an :class:`ExperimentConfig` from a raw mapping, or raise listing bad keys."""
    if not isinstance(raw, dict):
        raise ValidationError(f"config must be a mapping, got {type(raw).__name__}")
    problems = []
    for key in sorted(raw):
        if key not in _FIELD_KINDS:
            problems.append(f"unknown key {key!r}")
        elif not _check_type(raw[key], _FIELD_KINDS[key]):
            problems.append(f"key {key!r} expects {_FIELD_KINDS[key]}, got {raw[key]!r}")
    if problems:
        raise ValidationError("invalid config: " + "; ".join(problems))
    cfg = ExperimentConfig(**raw)
    if cfg.config_version != CONFIG_VERSION:
        raise ValidationError(
            f"config_version {cfg.config_version} not supported (this build reads {CONFIG_VERSION})"
        )
    semantic = []
    for m in cfg.methods:
        if m not in _METHODS:
            semantic.append(f"unknown method {m!r} (expected one of {_METHODS})")
    if cfg.operator_kind not in _OPERATORS:
        semantic.append(f"unknown operator_kind {cfg.operator_kind!r} (expected one of {_OPERATORS})")
    if not cfg.snr_grid:
        semantic.append("snr_grid must not be empty")
    if not cfg.methods:
        semantic.append("methods must not be empty")
    if len(cfg.split_ratios) != 3 or any(r <= 0 for r in cfg.split_ratios):
        semantic.append("split_ratios must be three positive numbers")
    if cfg.train_snr_low > cfg.train_snr_high:
        semantic.append("train_snr_low must not exceed train_snr_high")
    if semantic:
        raise ValidationError("invalid config: " + "; ".join(semantic))
    return cfg


def load_config(path: str | Path) -> ExperimentConfig:
    with open(path) as fh:
        raw = yaml.safe_load(fh)
    if raw is None:
        raw = {}
    return validate_config(raw)


def config_hash(cfg: ExperimentConfig) -> str:
    """Stable digest of the full config, stored in checkpoints and manifests."""
    canonical = json.dumps(cfg.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
