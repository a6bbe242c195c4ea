"""SNR-conditioned invertible network over a space-to-depth split.

The wavelet-style lifting scheme alternates two conditional residual nets:

    d <- d - PNet(c, snr)        (predict details from the coarse part)
    c <- c + UNet(d, snr)        (update the coarse part from the residue)

Both updates are additive, so the inverse is exact in closed form by walking
the pairs backwards with flipped signs; no net needs to be inverted. The
coarse branch has the same shape as a mean-pool measurement, and training
pulls it toward the actual measurement at the conditioning SNR, so the
detail branch learns to carry exactly what the measurement misses.
"""

from __future__ import annotations

import torch
from torch import nn
from torch.nn import functional as F

from .errors import ConfigurationError
from .seeding import make_generator, reseed_module


def space_to_depth(x: torch.Tensor, scale: int) -> torch.Tensor:
    """Fold ``(B, C, H, W)`` into ``(B, C * scale^2, H/s, W/s)``, offset-major.

    Channel blocks are ordered by the (di, dj) offset within each s x s
    block, so the first C channels are the top-left subsample of every
    image channel (the same shape as a pooled measurement).
    """
    b, c, h, w = x.shape
    s = scale
    if h % s or w % s:
        raise ConfigurationError(f"spatial size {h}x{w} not divisible by {s}")
    x = x.reshape(b, c, h // s, s, w // s, s)
    x = x.permute(0, 3, 5, 1, 2, 4)
    return x.reshape(b, c * s * s, h // s, w // s)


def depth_to_space(x: torch.Tensor, scale: int) -> torch.Tensor:
    """Exact inverse of :func:`space_to_depth`."""
    b, cs, h, w = x.shape
    s = scale
    if cs % (s * s):
        raise ConfigurationError(f"channel count {cs} not divisible by {s * s}")
    c = cs // (s * s)
    x = x.reshape(b, s, s, c, h, w)
    x = x.permute(0, 3, 4, 1, 5, 2)
    return x.reshape(b, c, h * s, w * s)


class CondBlock(nn.Module):
    """Residual conv block gated channel-wise by a learned function of the SNR.

    out = x + Conv2(relu(Conv1(x))) * alpha(snr), with alpha produced by a
    single linear map of the normalized SNR. alpha initializes to 1 so the
    gate starts neutral.
    """

    def __init__(self, channels: int):
        super().__init__()
        self.conv1 = nn.Conv2d(channels, channels, 3, padding=1)
        self.conv2 = nn.Conv2d(channels, channels, 3, padding=1)
        self.gate = nn.Linear(1, channels)

    def reset_parameters(self):
        nn.init.zeros_(self.gate.weight)
        nn.init.ones_(self.gate.bias)

    def forward(self, x: torch.Tensor, snr: torch.Tensor) -> torch.Tensor:
        alpha = self.gate(snr).reshape(x.shape[0], -1, 1, 1)
        h = self.conv2(F.relu(self.conv1(x)))
        return x + h * alpha


class CouplingNet(nn.Module):
    """PNet/UNet body: channel projection in, conditional blocks, zero-init projection out.

    The zero-initialized output conv makes an untrained coupling a no-op, so
    a freshly built model is already exactly invertible.
    """

    def __init__(self, in_channels: int, out_channels: int, hidden: int, blocks: int):
        super().__init__()
        self.proj_in = nn.Conv2d(in_channels, hidden, 3, padding=1)
        self.blocks = nn.ModuleList(CondBlock(hidden) for _ in range(blocks))
        self.proj_out = nn.Conv2d(hidden, out_channels, 3, padding=1)

    def reset_parameters(self):
        nn.init.zeros_(self.proj_out.weight)
        nn.init.zeros_(self.proj_out.bias)

    def forward(self, x: torch.Tensor, snr: torch.Tensor) -> torch.Tensor:
        h = self.proj_in(x)
        for block in self.blocks:
            h = block(h, snr)
        return self.proj_out(h)


class CondInnModel(nn.Module):
    """Invertible split of an image into a measurement-shaped coarse part and details."""

    def __init__(self, channels: int = 3, scale: int = 2, num_pairs: int = 4,
                 blocks_per_net: int = 2, hidden: int = 32,
                 snr_range: tuple[float, float] = (-5.0, 5.0), seed: int = 0):
        super().__init__()
        if scale < 2:
            raise ConfigurationError("the invertible split needs a pool factor >= 2 (details would be empty)")
        self.channels = channels
        self.scale = scale
        self.snr_range = tuple(snr_range)
        coarse = channels
        detail = channels * (scale * scale - 1)
        self.pnets = nn.ModuleList(
            CouplingNet(coarse, detail, hidden, blocks_per_net) for _ in range(num_pairs)
        )
        self.unets = nn.ModuleList(
            CouplingNet(detail, coarse, hidden, blocks_per_net) for _ in range(num_pairs)
        )
        reseed_module(self, seed)

    def _snr_tensor(self, snr_db, batch: int, dtype: torch.dtype) -> torch.Tensor:
        snr = torch.as_tensor(snr_db, dtype=dtype)
        if snr.ndim == 0:
            snr = snr.expand(batch)
        if snr.shape != (batch,):
            raise ConfigurationError(f"snr_db must be a scalar or shape ({batch},), got {tuple(snr.shape)}")
        return snr.reshape(batch, 1) / 10.0

    def _split(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        folded = space_to_depth(x, self.scale)
        return folded[:, : self.channels], folded[:, self.channels :]

    def forward(self, x: torch.Tensor, snr_db) -> tuple[torch.Tensor, torch.Tensor]:
        """Image to (coarse, detail); accepts ``(C, H, W)`` or ``(B, C, H, W)``."""
        batched = x.ndim == 4
        xb = x if batched else x[None]
        if xb.shape[1] != self.channels:
            raise ConfigurationError(f"expected {self.channels} channels, got {xb.shape[1]}")
        snr = self._snr_tensor(snr_db, xb.shape[0], xb.dtype)
        c, d = self._split(xb)
        for pnet, unet in zip(self.pnets, self.unets):
            d = d - pnet(c, snr)
            c = c + unet(d, snr)
        return (c, d) if batched else (c[0], d[0])

    def inverse(self, c: torch.Tensor, d: torch.Tensor, snr_db) -> torch.Tensor:
        """Exact inverse of :meth:`forward`."""
        batched = c.ndim == 4
        cb, db = (c, d) if batched else (c[None], d[None])
        if cb.shape[1] != self.channels or db.shape[1] != self.channels * (self.scale**2 - 1):
            raise ConfigurationError(
                f"coarse/detail channel mismatch: got {cb.shape[1]} and {db.shape[1]} "
                f"for channels={self.channels}, scale={self.scale}"
            )
        if cb.shape[-2:] != db.shape[-2:] or cb.shape[0] != db.shape[0]:
            raise ConfigurationError(
                f"coarse/detail shapes incompatible: {tuple(cb.shape)} vs {tuple(db.shape)}"
            )
        snr = self._snr_tensor(snr_db, cb.shape[0], cb.dtype)
        for pnet, unet in zip(reversed(self.pnets), reversed(self.unets)):
            cb = cb - unet(db, snr)
            db = db + pnet(cb, snr)
        x = depth_to_space(torch.cat([cb, db], dim=1), self.scale)
        return x if batched else x[0]


def inn_loss(c: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
    """Per-sample squared L2 distance between coarse branch and measurement, batch-averaged."""
    if c.shape != y.shape:
        raise ValueError(f"shape mismatch: {tuple(c.shape)} vs {tuple(y.shape)}")
    return ((c - y) ** 2).flatten(1).sum(dim=1).mean()


def train_inn(model: CondInnModel, x: torch.Tensor, y: torch.Tensor, snr_db: torch.Tensor,
              epochs: int, batch_size: int = 32, lr: float = 5e-5, seed: int = 0,
              resample=None) -> list[float]:
    """Fit the coarse branch to measurements; returns per-epoch mean losses.

    ``x`` are chain-domain images, ``y`` the matching measurements, and
    ``snr_db`` a per-sample vector (or scalar) of conditioning SNRs. If
    ``resample`` is given it is called as ``resample(epoch)`` before each
    epoch and must return fresh ``(x, y, snr_db)``, so noisy measurement
    pairs can be redrawn rather than memorized.
    """
    g = make_generator(seed)
    optimizer = torch.optim.Adam(model.parameters(), lr=lr)
    history = []
    for epoch in range(epochs):
        if resample is not None:
            x, y, snr_db = resample(epoch)
        snr = torch.as_tensor(snr_db, dtype=torch.float32)
        if snr.ndim == 0:
            snr = snr.expand(x.shape[0])
        perm = torch.randperm(x.shape[0], generator=g)
        losses = []
        for start in range(0, x.shape[0], batch_size):
            idx = perm[start : start + batch_size]
            c, _ = model(x[idx], snr[idx])
            loss = inn_loss(c, y[idx])
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            losses.append(float(loss.detach()))
        history.append(sum(losses) / len(losses))
    return history
