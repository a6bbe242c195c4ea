"""Dataset ingestion, split management, and a synthetic image generator.

Ingestion scans a directory of images, verifies every file decodes, and
writes deterministic train/val/test index files. Loading resizes the short
side and center-crops to a square, mapping pixels to float32 in [0, 1].
"""

from __future__ import annotations

import json
import random
from pathlib import Path

import numpy as np
import torch
from PIL import Image, ImageDraw, ImageOps

from ..errors import IngestionError

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp"}
SPLITS = ("train", "val", "test")


def ingest(dataset_dir: str | Path, out_dir: str | Path, image_size: int,
           ratios: tuple[float, float, float] = (8.0, 1.0, 1.0), seed: int = 0) -> dict[str, int]:
    """Scan, verify, shuffle, and split a directory of images.

    Writes ``splits/{train,val,test}.txt`` plus ``splits/ingest.json`` under
    ``out_dir`` and returns the split sizes. Undecodable files are all
    reported in one :class:`IngestionError`.
    """
    dataset_dir = Path(dataset_dir)
    if not dataset_dir.is_dir():
        raise IngestionError(f"dataset directory {dataset_dir} does not exist")
    paths = sorted(p for p in dataset_dir.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    if not paths:
        raise IngestionError(f"no images with suffixes {sorted(IMAGE_SUFFIXES)} in {dataset_dir}")
    bad = []
    for p in paths:
        try:
            with Image.open(p) as img:
                img.convert("RGB")
        except Exception:
            bad.append(p.name)
    if bad:
        raise IngestionError(f"{len(bad)} undecodable file(s) in {dataset_dir}: {', '.join(bad)}")

    order = list(range(len(paths)))
    random.Random(seed).shuffle(order)
    total = sum(ratios)
    n = len(paths)
    n_train = int(n * ratios[0] / total)
    n_val = int(n * ratios[1] / total)
    groups = {
        "train": order[:n_train],
        "val": order[n_train : n_train + n_val],
        "test": order[n_train + n_val :],
    }
    split_dir = Path(out_dir) / "splits"
    split_dir.mkdir(parents=True, exist_ok=True)
    for name, idx in groups.items():
        (split_dir / f"{name}.txt").write_text(
            "".join(str(paths[i].resolve()) + "\n" for i in idx)
        )
    meta = {
        "dataset_dir": str(dataset_dir.resolve()),
        "image_size": image_size,
        "ratios": list(ratios),
        "seed": seed,
        "counts": {k: len(v) for k, v in groups.items()},
    }
    (split_dir / "ingest.json").write_text(json.dumps(meta, indent=2) + "\n")
    return meta["counts"]


def load_image(path: str | Path, image_size: int) -> torch.Tensor:
    """One file to a float32 ``(3, S, S)`` tensor in [0, 1] (resize + center crop)."""
    with Image.open(path) as img:
        fitted = ImageOps.fit(img.convert("RGB"), (image_size, image_size), Image.BICUBIC)
    arr = np.asarray(fitted, dtype=np.float32) / 255.0
    return torch.from_numpy(arr).permute(2, 0, 1).contiguous()


def load_split(out_dir: str | Path, split: str, image_size: int,
               limit: int | None = None) -> torch.Tensor:
    """Load one split as a ``(N, 3, S, S)`` stack; raises if ingest has not run."""
    if split not in SPLITS:
        raise ValueError(f"split must be one of {SPLITS}, got {split!r}")
    index = Path(out_dir) / "splits" / f"{split}.txt"
    if not index.is_file():
        raise IngestionError(f"split index {index} not found; run ingest first")
    lines = [ln for ln in index.read_text().splitlines() if ln.strip()]
    if limit is not None:
        lines = lines[:limit]
    if not lines:
        raise IngestionError(f"split {split!r} in {out_dir} is empty")
    return torch.stack([load_image(ln, image_size) for ln in lines])


def synth_dataset(out_dir: str | Path, count: int, image_size: int = 64, seed: int = 0) -> list[Path]:
    """Write deterministic synthetic PNGs (smooth gradients plus random shapes).

    Handy for demos and end-to-end tests when no photo corpus is at hand.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    written = []
    for i in range(count):
        yy, xx = np.mgrid[0:image_size, 0:image_size].astype(np.float64) / image_size
        theta = rng.uniform(0, 2 * np.pi)
        ramp = np.cos(theta) * xx + np.sin(theta) * yy
        base = rng.uniform(0.15, 0.85, size=3)
        tilt = rng.uniform(-0.4, 0.4, size=3)
        arr = np.clip(base[None, None, :] + ramp[:, :, None] * tilt[None, None, :], 0, 1)
        img = Image.fromarray((arr * 255).astype(np.uint8))
        draw = ImageDraw.Draw(img)
        for _ in range(int(rng.integers(2, 5))):
            x0, y0 = rng.integers(0, image_size - 8, size=2)
            w, h = rng.integers(6, image_size // 2, size=2)
            color = tuple(int(c) for c in rng.integers(0, 256, size=3))
            if rng.random() < 0.5:
                draw.rectangle([int(x0), int(y0), int(x0 + w), int(y0 + h)], fill=color)
            else:
                draw.ellipse([int(x0), int(y0), int(x0 + w), int(y0 + h)], fill=color)
        path = out_dir / f"synth_{i:05d}.png"
        img.save(path)
        written.append(path)
    return written
