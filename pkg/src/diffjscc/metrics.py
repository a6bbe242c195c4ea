"""Distortion and perceptual metrics plus the per-cell record schema.

The perceptual metric follows the learned-feature-distance recipe: push both
images through a fixed feature extractor, unit-normalize each layer's
features across channels, and average the squared differences over layers
and positions. The default extractor is a frozen randomly initialized conv
pyramid; random features are a standard stand-in when pretrained perceptual
weights are unavailable, and anything exposing ``distance(x, y)`` (e.g. a
wrapper around a pretrained perceptual network) can be dropped in instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import torch
from torch import nn
from torch.nn import functional as F

from .seeding import reseed_module


def psnr(x: torch.Tensor, y: torch.Tensor, max_val: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB; identical inputs give ``math.inf``."""
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {tuple(x.shape)} vs {tuple(y.shape)}")
    mse = float(torch.mean((x.double() - y.double()) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(max_val**2 / mse)


class PerceptualBackend(nn.Module):
    """Interface for perceptual metrics: ``distance(x, y)`` -> 0-dim tensor."""

    def distance(self, x: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
        raise NotImplementedError


class RandomFeatureBackend(PerceptualBackend):
    """Frozen random conv pyramid with channel-normalized feature distances.

    Deterministic for a fixed seed, symmetric, differentiable, and exactly
    zero for identical inputs. Stages downsample by 2, so inputs must be at
    least ``2 ** (len(widths) - 1)`` on each side.
    """

    def __init__(self, channels: int = 3, widths: tuple[int, ...] = (16, 32, 64), seed: int = 0):
        super().__init__()
        self.convs = nn.ModuleList()
        prev = channels
        for w in widths:
            self.convs.append(nn.Conv2d(prev, w, 3, padding=1))
            prev = w
        reseed_module(self, seed)
        for p in self.parameters():
            p.requires_grad_(False)

    @staticmethod
    def _unit_normalize(f: torch.Tensor) -> torch.Tensor:
        return f / torch.sqrt(torch.sum(f**2, dim=1, keepdim=True) + 1e-10)

    def distance(self, x: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
        if x.shape != y.shape:
            raise ValueError(f"shape mismatch: {tuple(x.shape)} vs {tuple(y.shape)}")
        if x.ndim == 3:
            x, y = x[None], y[None]
        total = x.new_zeros(())
        hx, hy = x, y
        for i, conv in enumerate(self.convs):
            hx = F.relu(conv(hx))
            hy = F.relu(conv(hy))
            diff = self._unit_normalize(hx) - self._unit_normalize(hy)
            total = total + torch.mean(diff**2)
            if i + 1 < len(self.convs):
                hx = F.avg_pool2d(hx, 2)
                hy = F.avg_pool2d(hy, 2)
        return total


def perceptual_distance(backend: PerceptualBackend, x: torch.Tensor, y: torch.Tensor) -> float:
    return float(backend.distance(x, y))


@dataclass
class MetricsRecord:
    """One evaluation cell: a (method, image, SNR) triple and its scores."""

    method: str
    image_id: str
    snr_db: float
    sigma_sq: float
    bcr: float
    seed: int
    psnr_db: float
    perceptual: float

    @classmethod
    def columns(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def to_row(self) -> list[str]:
        out = []
        for f in fields(self):
            v = getattr(self, f.name)
            out.append(repr(v) if isinstance(v, float) else str(v))
        return out
