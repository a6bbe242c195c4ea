"""Pipeline stages: ingest, per-stage training, and the evaluation sweep.

Every stochastic step derives its seed from the config seed plus stable
labels, so reruns with the same config are byte-identical in their logs,
metrics, and aggregates. Wall-clock time lives only in the manifest.
"""

from __future__ import annotations

import csv
import json
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import torch

from .. import __version__
from ..channel import awgn, snr_to_sigma_sq
from ..cond_inn import CondInnModel, train_inn
from ..deepjscc import JsccModel, train_jscc
from ..degradation import LinearDegradation, make_operator
from ..diffusion import Denoiser, NoiseSchedule, to_diffusion_domain, train_ddpm
from ..errors import ConfigurationError, DependencyError
from ..metrics import MetricsRecord, RandomFeatureBackend, psnr
from ..seeding import make_generator, stable_seed
from ..sing_inn import SingInnConfig, restore_inn
from ..sing_zero import SingZeroConfig, restore
from .checkpoints import (
    jscc_config_from,
    load_ddpm,
    load_inn,
    load_jscc,
    save_checkpoint,
)
from .config import ExperimentConfig, config_hash
from .data import ingest, load_split

MANIFEST_VERSION = 1
CONSISTENCY_TOL = 1e-4
STAGES = ("jscc", "ddpm", "inn")


def build_operator(cfg: ExperimentConfig) -> LinearDegradation:
    scale = cfg.operator_scale if cfg.operator_kind == "mean_pool" else 1
    return make_operator(cfg.operator_kind, scale)


def checkpoint_path(cfg: ExperimentConfig, out_dir: str | Path, stage: str) -> Path:
    """Config override if set, else the stage's default slot under ``out_dir``."""
    override = getattr(cfg, f"{stage}_checkpoint")
    if override:
        return Path(override)
    return Path(out_dir) / "checkpoints" / f"{stage}.pt"


def _write_loss_csv(path: Path, columns: list[str], rows: list[list]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else str(v) for v in row])


def run_ingest(cfg: ExperimentConfig, out_dir: str | Path) -> dict[str, int]:
    return ingest(cfg.dataset_dir, out_dir, cfg.image_size,
                  tuple(cfg.split_ratios), seed=cfg.seed)


def _train_jscc_stage(cfg: ExperimentConfig, out_dir: Path) -> tuple[dict, dict]:
    images = load_split(out_dir, "train", cfg.image_size)
    model = JsccModel(jscc_config_from(cfg), seed=stable_seed(cfg.seed, "jscc-init"))
    history = train_jscc(
        model, images, cfg.jscc_steps, batch_size=cfg.jscc_batch, lr=cfg.jscc_lr,
        snr_range=(cfg.train_snr_low, cfg.train_snr_high),
        seed=stable_seed(cfg.seed, "jscc-train"),
    )
    rows = [[i, history["loss"][i], history["snr_db"][i], history["sigma_sq"][i]]
            for i in range(len(history["loss"]))]
    _write_loss_csv(out_dir / "logs" / "loss_jscc.csv", ["step", "loss", "snr_db", "sigma_sq"], rows)
    meta = {"steps": cfg.jscc_steps, "final_loss": history["loss"][-1]}
    return model.state_dict(), meta


def _train_ddpm_stage(cfg: ExperimentConfig, out_dir: Path) -> tuple[dict, dict]:
    images = load_split(out_dir, "train", cfg.image_size)
    model = Denoiser(
        channels=cfg.channels, width=cfg.ddpm_width, depth=cfg.ddpm_depth,
        schedule=NoiseSchedule.linear(cfg.ddpm_timesteps),
        seed=stable_seed(cfg.seed, "ddpm-init"),
    )
    losses = train_ddpm(model, images, cfg.ddpm_steps, batch_size=cfg.ddpm_batch,
                        lr=cfg.ddpm_lr, seed=stable_seed(cfg.seed, "ddpm-train"))
    rows = [[i, v] for i, v in enumerate(losses)]
    _write_loss_csv(out_dir / "logs" / "loss_ddpm.csv", ["step", "loss"], rows)
    meta = {"steps": cfg.ddpm_steps, "final_loss": losses[-1]}
    return model.state_dict(), meta


def _decoder_measurements(jscc: JsccModel, op: LinearDegradation, images: torch.Tensor,
                          snr_lo: float, snr_hi: float, seed: int):
    """Draw per-image SNRs, run the channel, and measure the decoder outputs.

    Returns chain-domain (images, measurements, snr_db) suitable for INN fitting.
    """
    g = make_generator(seed)
    n = images.shape[0]
    snr = snr_lo + (snr_hi - snr_lo) * torch.rand(n, generator=g)
    with torch.no_grad():
        z = jscc.encode(images)
        decoded = []
        for i in range(n):
            sigma_sq = snr_to_sigma_sq(float(snr[i]), jscc.config.avg_power)
            z_hat = awgn(z[i : i + 1], sigma_sq, g)
            decoded.append(jscc.decode(z_hat, snr_db=float(snr[i])))
        y = op.apply(torch.cat(decoded))
    return to_diffusion_domain(images), to_diffusion_domain(y), snr


def _train_inn_stage(cfg: ExperimentConfig, out_dir: Path) -> tuple[dict, dict]:
    jscc, jscc_payload = load_jscc(checkpoint_path(cfg, out_dir, "jscc"))
    limit = cfg.inn_pair_images if cfg.inn_pair_images > 0 else None
    images = load_split(out_dir, "train", cfg.image_size, limit=limit)
    op = build_operator(cfg)
    if cfg.operator_kind != "mean_pool":
        raise ConfigurationError(
            "the INN stage needs a mean_pool operator so the coarse branch matches the measurement shape"
        )
    model = CondInnModel(
        channels=cfg.channels, scale=cfg.operator_scale, num_pairs=cfg.inn_pairs,
        blocks_per_net=cfg.inn_blocks, hidden=cfg.inn_hidden,
        snr_range=(cfg.train_snr_low, cfg.train_snr_high),
        seed=stable_seed(cfg.seed, "inn-init"),
    )

    def resample(epoch: int):
        return _decoder_measurements(
            jscc, op, images, cfg.train_snr_low, cfg.train_snr_high,
            stable_seed(cfg.seed, "inn-pairs", epoch),
        )

    x0, y0, snr0 = resample(0)
    losses = train_inn(model, x0, y0, snr0, epochs=cfg.inn_epochs, batch_size=cfg.inn_batch,
                       lr=cfg.inn_lr, seed=stable_seed(cfg.seed, "inn-train"), resample=resample)
    rows = [[i, v] for i, v in enumerate(losses)]
    _write_loss_csv(out_dir / "logs" / "loss_inn.csv", ["epoch", "loss"], rows)
    meta = {"epochs": cfg.inn_epochs, "final_loss": losses[-1],
            "jscc_config_hash": jscc_payload["config_hash"]}
    return model.state_dict(), meta


def run_train(cfg: ExperimentConfig, out_dir: str | Path, stage: str) -> Path:
    """Train one stage and write its checkpoint; returns the checkpoint path."""
    if stage not in STAGES:
        raise ConfigurationError(f"unknown stage {stage!r}; expected one of {STAGES}")
    out_dir = Path(out_dir)
    trainers = {"jscc": _train_jscc_stage, "ddpm": _train_ddpm_stage, "inn": _train_inn_stage}
    state_dict, meta = trainers[stage](cfg, out_dir)
    return save_checkpoint(checkpoint_path(cfg, out_dir, stage), stage, cfg, state_dict, meta)


@dataclass
class RunManifest:
    manifest_version: int
    software_version: str
    config: dict
    config_hash: str
    checkpoints: dict
    counts: dict
    warnings: list[str]
    wall_clock_s: float
    outputs: dict = field(default_factory=dict)

    def write(self, path: str | Path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.__dict__, indent=2) + "\n")
        return path


def _restore_cell(method: str, x_dec: torch.Tensor, y: torch.Tensor, cfg: ExperimentConfig,
                  op: LinearDegradation, ddpm, inn, snr_db: float, cell_seed: int,
                  caught: list[str]) -> torch.Tensor:
    if method == "deepjscc":
        return x_dec
    if method == "sing_zero":
        out = restore(y, ddpm, op, SingZeroConfig(t_effective=cfg.t_effective, seed=cell_seed))
        gap = float((op.apply(out) - y).abs().max())
        if gap > CONSISTENCY_TOL:
            raise RuntimeError(
                f"sing_zero consistency violated: max |A(x) - y| = {gap:.3e} > {CONSISTENCY_TOL}"
            )
        return out
    if method == "sing_inn":
        scfg = SingInnConfig(
            snr_db=snr_db, zeta=cfg.zeta, t_effective=cfg.t_effective, seed=cell_seed,
            grad_through_denoiser=cfg.guidance_through_denoiser,
        )
        with warnings.catch_warnings(record=True) as logged:
            warnings.simplefilter("always")
            out = restore_inn(y, ddpm, inn, op, scfg)
        caught.extend(str(w.message) for w in logged)
        return out
    raise ConfigurationError(f"unknown method {method!r}")


def _aggregate(records: list[MetricsRecord]) -> list[list]:
    keys = sorted({(r.method, r.snr_db) for r in records}, key=lambda k: (k[0], k[1]))
    rows = []
    for method, snr in keys:
        cell = [r for r in records if r.method == method and r.snr_db == snr]
        mean_psnr = sum(r.psnr_db for r in cell) / len(cell)
        mean_perc = sum(r.perceptual for r in cell) / len(cell)
        rows.append([method, snr, len(cell), mean_psnr, mean_perc])
    return rows


def _plot_aggregates(rows: list[list], out_dir: Path) -> dict[str, str]:
    plots_dir = out_dir / "plots"
    plots_dir.mkdir(parents=True, exist_ok=True)
    by_method: dict[str, list] = {}
    for method, snr, _, mean_psnr, mean_perc in rows:
        by_method.setdefault(method, []).append((snr, mean_psnr, mean_perc))
    out = {}
    for col, ylabel, fname in [(1, "PSNR (dB)", "psnr_vs_snr.png"),
                               (2, "perceptual distance", "perceptual_vs_snr.png")]:
        fig, ax = plt.subplots(figsize=(5, 3.5))
        for method, triples in sorted(by_method.items()):
            triples = sorted(triples)
            ax.plot([p[0] for p in triples], [p[col] for p in triples], marker="o", label=method)
        ax.set_xlabel("SNR (dB)")
        ax.set_ylabel(ylabel)
        ax.legend()
        fig.tight_layout()
        fig.savefig(plots_dir / fname, dpi=120)
        plt.close(fig)
        out[fname] = str(plots_dir / fname)
    return out


def run_evaluate(cfg: ExperimentConfig, out_dir: str | Path) -> RunManifest:
    """Sweep (image, SNR, method) cells; write metrics, aggregates, plots, manifest."""
    started = time.monotonic()
    out_dir = Path(out_dir)
    op = build_operator(cfg)
    needs_ddpm = bool({"sing_zero", "sing_inn"} & set(cfg.methods))
    needs_inn = "sing_inn" in cfg.methods

    jscc, jscc_payload = load_jscc(checkpoint_path(cfg, out_dir, "jscc"))
    ckpt_info = {"jscc": jscc_payload["config_hash"]}
    ddpm = inn = None
    if needs_ddpm:
        ddpm, ddpm_payload = load_ddpm(checkpoint_path(cfg, out_dir, "ddpm"))
        ckpt_info["ddpm"] = ddpm_payload["config_hash"]
    if needs_inn:
        inn, inn_payload = load_inn(checkpoint_path(cfg, out_dir, "inn"))
        ckpt_info["inn"] = inn_payload["config_hash"]

    images = load_split(out_dir, "test", cfg.image_size, limit=cfg.eval_images)
    backend = RandomFeatureBackend(channels=cfg.channels, seed=0)
    records: list[MetricsRecord] = []
    caught: list[str] = []
    for i in range(images.shape[0]):
        x = images[i]
        image_id = f"test_{i:04d}"
        for snr_db in cfg.snr_grid:
            sigma_sq = snr_to_sigma_sq(snr_db, jscc.config.avg_power)
            with torch.no_grad():
                x_dec = jscc.transmit(x, snr_db, stable_seed(cfg.seed, "tx", image_id, snr_db))
                y = op.apply(x_dec)
            for method in cfg.methods:
                cell_seed = stable_seed(cfg.seed, "cell", method, image_id, snr_db)
                x_out = _restore_cell(method, x_dec, y, cfg, op, ddpm, inn, snr_db, cell_seed, caught)
                x_score = x_out.clamp(0.0, 1.0)
                records.append(
                    MetricsRecord(
                        method=method, image_id=image_id, snr_db=snr_db, sigma_sq=sigma_sq,
                        bcr=cfg.bcr, seed=cell_seed,
                        psnr_db=psnr(x_score, x), perceptual=float(backend.distance(x_score, x)),
                    )
                )

    out_dir.mkdir(parents=True, exist_ok=True)
    metrics_path = out_dir / "metrics.csv"
    _write_loss_csv(metrics_path, MetricsRecord.columns(),
                    [[getattr(r, c) for c in MetricsRecord.columns()] for r in records])
    agg_rows = _aggregate(records)
    agg_path = out_dir / "aggregates.csv"
    _write_loss_csv(agg_path, ["method", "snr_db", "n", "mean_psnr_db", "mean_perceptual"], agg_rows)
    plots = _plot_aggregates(agg_rows, out_dir)

    manifest = RunManifest(
        manifest_version=MANIFEST_VERSION,
        software_version=__version__,
        config=cfg.to_dict(),
        config_hash=config_hash(cfg),
        checkpoints=ckpt_info,
        counts={"images": images.shape[0], "snr_points": len(cfg.snr_grid),
                "methods": len(cfg.methods), "cells": len(records)},
        warnings=sorted(set(caught)),
        wall_clock_s=time.monotonic() - started,
        outputs={"metrics_csv": str(metrics_path), "aggregates_csv": str(agg_path), **plots},
    )
    manifest.write(out_dir / "manifest.json")
    return manifest
