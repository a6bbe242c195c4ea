"""Versioned checkpoint files binding weights to the config that produced them."""

from __future__ import annotations

from pathlib import Path

import torch

from ..cond_inn import CondInnModel
from ..deepjscc import JsccConfig, JsccModel
from ..diffusion import Denoiser, NoiseSchedule
from ..errors import DependencyError
from .config import ExperimentConfig, config_hash, validate_config

FORMAT_VERSION = 1

STAGE_HINTS = {
    "jscc": "diffjscc train jscc",
    "ddpm": "diffjscc train ddpm",
    "inn": "diffjscc train inn",
}


def save_checkpoint(path: str | Path, kind: str, cfg: ExperimentConfig,
                    state_dict: dict, meta: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(
        {
            "format_version": FORMAT_VERSION,
            "kind": kind,
            "config": cfg.to_dict(),
            "config_hash": config_hash(cfg),
            "state_dict": state_dict,
            "meta": meta,
        },
        path,
    )
    return path


def load_payload(path: str | Path, kind: str) -> dict:
    path = Path(path)
    if not path.is_file():
        hint = STAGE_HINTS.get(kind, f"diffjscc train {kind}")
        raise DependencyError(
            f"the {kind!r} stage has not produced {path}; run '{hint}' first"
        )
    payload = torch.load(path, weights_only=True)
    if payload.get("format_version") != FORMAT_VERSION:
        raise DependencyError(
            f"checkpoint {path} has format_version {payload.get('format_version')}, "
            f"expected {FORMAT_VERSION}"
        )
    if payload.get("kind") != kind:
        raise DependencyError(f"checkpoint {path} holds a {payload.get('kind')!r} stage, expected {kind!r}")
    return payload


def jscc_config_from(cfg: ExperimentConfig) -> JsccConfig:
    return JsccConfig(
        height=cfg.image_size,
        width=cfg.image_size,
        channels=cfg.channels,
        bcr=cfg.bcr,
        hidden=cfg.jscc_hidden,
        num_down=cfg.jscc_down,
        lambda_perceptual=cfg.jscc_lambda,
        snr_input=cfg.jscc_snr_input,
    )


def load_jscc(path: str | Path) -> tuple[JsccModel, dict]:
    payload = load_payload(path, "jscc")
    cfg = validate_config(payload["config"])
    model = JsccModel(jscc_config_from(cfg))
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model, payload


def load_ddpm(path: str | Path) -> tuple[Denoiser, dict]:
    payload = load_payload(path, "ddpm")
    cfg = validate_config(payload["config"])
    model = Denoiser(
        channels=cfg.channels,
        width=cfg.ddpm_width,
        depth=cfg.ddpm_depth,
        schedule=NoiseSchedule.linear(cfg.ddpm_timesteps),
    )
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model, payload


def load_inn(path: str | Path) -> tuple[CondInnModel, dict]:
    payload = load_payload(path, "inn")
    cfg = validate_config(payload["config"])
    model = CondInnModel(
        channels=cfg.channels,
        scale=cfg.operator_scale,
        num_pairs=cfg.inn_pairs,
        blocks_per_net=cfg.inn_blocks,
        hidden=cfg.inn_hidden,
        snr_range=(cfg.train_snr_low, cfg.train_snr_high),
    )
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model, payload
