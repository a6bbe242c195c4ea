"""Learned joint source-channel coding autoencoder.

The encoder maps an image straight to k complex channel symbols (no separate
compression/coding stages), the symbols are power-normalized, pass through
the AWGN channel, and the decoder maps them back to pixels. The symbol
budget is set by the bandwidth compression ratio rho = k / (H * W * C).

Training minimizes MSE plus a weighted perceptual feature distance, with the
SNR redrawn uniformly per batch so one model covers a range of channel
conditions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
from torch import nn
from torch.nn import functional as F

from .channel import awgn, normalize_power, pack_complex, snr_to_sigma_sq, unpack_complex
from .errors import ConfigurationError
from .metrics import PerceptualBackend, RandomFeatureBackend
from .seeding import make_generator, reseed_module


@dataclass(frozen=True)
class JsccConfig:
    height: int = 64
    width: int = 64
    channels: int = 3
    bcr: float = 0.0052
    hidden: int = 32
    num_down: int = 2
    lambda_perceptual: float = 1.0
    snr_input: bool = False
    avg_power: float = 1.0

    def __post_init__(self):
        if self.bcr <= 0:
            raise ConfigurationError(f"bcr must be positive, got {self.bcr}")
        if self.channel_uses < 1:
            raise ConfigurationError(
                f"bcr {self.bcr} on a {self.height}x{self.width}x{self.channels} image "
                "yields zero channel uses"
            )
        factor = 2**self.num_down
        if self.height % factor or self.width % factor:
            raise ConfigurationError(
                f"image size {self.height}x{self.width} not divisible by 2^{self.num_down}"
            )
        if self.avg_power <= 0:
            raise ConfigurationError(f"avg_power must be positive, got {self.avg_power}")

    @property
    def source_dim(self) -> int:
        return self.height * self.width * self.channels

    @property
    def channel_uses(self) -> int:
        """k = floor(bcr * H * W * C)."""
        return int(self.bcr * self.source_dim)


class GDN(nn.Module):
    """Generalized divisive normalization (multiplicative when ``inverse``).

    y_c = x_c / sqrt(beta_c + sum_j gamma_cj x_j^2); beta and gamma are
    reparameterized (softplus resp. square) to stay positive.
    """

    def __init__(self, channels: int, inverse: bool = False):
        super().__init__()
        self.channels = channels
        self.inverse = inverse
        self.beta_raw = nn.Parameter(torch.empty(channels))
        self.gamma_raw = nn.Parameter(torch.empty(channels, channels))
        self.reset_parameters()

    def reset_parameters(self):
        with torch.no_grad():
            self.beta_raw.fill_(math.log(math.e - 1.0))  # softplus -> 1
            self.gamma_raw.copy_(math.sqrt(0.1) * torch.eye(self.channels))

    def forward(self, x):
        beta = F.softplus(self.beta_raw) + 1e-6
        gamma = (self.gamma_raw**2).reshape(self.channels, self.channels, 1, 1)
        norm = torch.sqrt(F.conv2d(x**2, gamma, beta))
        return x * norm if self.inverse else x / norm


class _Encoder(nn.Module):
    def __init__(self, cfg: JsccConfig):
        super().__init__()
        layers = []
        prev = cfg.channels
        for _ in range(cfg.num_down):
            layers += [nn.Conv2d(prev, cfg.hidden, 5, stride=2, padding=2), GDN(cfg.hidden)]
            prev = cfg.hidden
        self.features = nn.Sequential(*layers)
        h = cfg.height // 2**cfg.num_down
        w = cfg.width // 2**cfg.num_down
        self.project = nn.Linear(cfg.hidden * h * w, 2 * cfg.channel_uses)

    def forward(self, x):
        h = self.features(x)
        return self.project(h.flatten(1))


class _Decoder(nn.Module):
    def __init__(self, cfg: JsccConfig):
        super().__init__()
        self.h = cfg.height // 2**cfg.num_down
        self.w = cfg.width // 2**cfg.num_down
        self.hidden = cfg.hidden
        in_dim = 2 * cfg.channel_uses + (1 if cfg.snr_input else 0)
        self.project = nn.Linear(in_dim, cfg.hidden * self.h * self.w)
        layers = []
        for _ in range(cfg.num_down - 1):
            layers += [
                nn.ConvTranspose2d(cfg.hidden, cfg.hidden, 5, stride=2, padding=2, output_padding=1),
                GDN(cfg.hidden, inverse=True),
            ]
        layers += [nn.ConvTranspose2d(cfg.hidden, cfg.channels, 5, stride=2, padding=2, output_padding=1)]
        self.features = nn.Sequential(*layers)

    def forward(self, v):
        h = self.project(v).reshape(-1, self.hidden, self.h, self.w)
        return torch.sigmoid(self.features(h))


class JsccModel(nn.Module):
    """Encoder/decoder pair around the complex AWGN channel."""

    def __init__(self, config: JsccConfig, seed: int = 0):
        super().__init__()
        self.config = config
        self.encoder = _Encoder(config)
        self.decoder = _Decoder(config)
        reseed_module(self, seed)

    def _check_image(self, x: torch.Tensor) -> torch.Tensor:
        cfg = self.config
        expected = (cfg.channels, cfg.height, cfg.width)
        if tuple(x.shape[-3:]) != expected or x.ndim not in (3, 4):
            raise ConfigurationError(f"expected image shaped {expected}, got {tuple(x.shape)}")
        return x[None] if x.ndim == 3 else x

    def encode(self, x: torch.Tensor) -> torch.Tensor:
        """Image(s) in [0, 1] to power-normalized complex symbols ``(..., k)``."""
        batched = x.ndim == 4
        xb = self._check_image(x)
        z = normalize_power(pack_complex(self.encoder(xb)), self.config.avg_power)
        return z if batched else z[0]

    def decode(self, z_hat: torch.Tensor, snr_db: float | None = None) -> torch.Tensor:
        """Received complex symbols back to an image in [0, 1]."""
        cfg = self.config
        if z_hat.shape[-1] != cfg.channel_uses or not z_hat.is_complex():
            raise ConfigurationError(
                f"expected complex symbols with last dim {cfg.channel_uses}, got {tuple(z_hat.shape)}"
            )
        batched = z_hat.ndim == 2
        v = unpack_complex(z_hat if batched else z_hat[None])
        if cfg.snr_input:
            if snr_db is None:
                raise ConfigurationError("this model was built with snr_input=True; pass snr_db")
            side = torch.full((v.shape[0], 1), snr_db / 10.0, dtype=v.dtype)
            v = torch.cat([v, side], dim=-1)
        x = self.decoder(v)
        return x if batched else x[0]

    @torch.no_grad()
    def transmit(self, x: torch.Tensor, snr_db: float, seed: int | torch.Generator) -> torch.Tensor:
        """Full inference chain: encode, add channel noise at ``snr_db``, decode."""
        sigma_sq = snr_to_sigma_sq(snr_db, self.config.avg_power)
        z_hat = awgn(self.encode(x), sigma_sq, seed)
        return self.decode(z_hat, snr_db=snr_db)


def composite_loss(x_hat: torch.Tensor, x: torch.Tensor, lam: float,
                   backend: PerceptualBackend | None = None) -> torch.Tensor:
    """MSE plus ``lam`` times the perceptual feature distance (0-dim tensor)."""
    if x_hat.shape != x.shape:
        raise ValueError(f"shape mismatch: {tuple(x_hat.shape)} vs {tuple(x.shape)}")
    loss = F.mse_loss(x_hat, x)
    if lam != 0.0:
        if backend is None:
            raise ValueError("lam != 0 requires a perceptual backend")
        loss = loss + lam * backend.distance(x_hat, x)
    return loss


def train_jscc(model: JsccModel, images: torch.Tensor, steps: int, batch_size: int = 32,
               lr: float = 1e-4, snr_range: tuple[float, float] = (-5.0, 5.0),
               backend: PerceptualBackend | None = None, seed: int = 0) -> dict[str, list[float]]:
    """Train end to end through the channel with per-batch uniform SNR.

    Returns a history dict with per-step ``loss``, ``snr_db``, ``sigma_sq``.
    """
    cfg = model.config
    if backend is None and cfg.lambda_perceptual != 0.0:
        backend = RandomFeatureBackend(channels=cfg.channels)
    g = make_generator(seed)
    optimizer = torch.optim.Adam(model.parameters(), lr=lr)
    history: dict[str, list[float]] = {"loss": [], "snr_db": [], "sigma_sq": []}
    lo, hi = snr_range
    n = images.shape[0]
    for _ in range(steps):
        idx = torch.randint(0, n, (min(batch_size, n),), generator=g)
        x = images[idx]
        snr_db = lo + (hi - lo) * float(torch.rand((), generator=g))
        sigma_sq = snr_to_sigma_sq(snr_db, cfg.avg_power)
        z_hat = awgn(model.encode(x), sigma_sq, g)
        x_hat = model.decode(z_hat, snr_db=snr_db)
        loss = composite_loss(x_hat, x, cfg.lambda_perceptual, backend)
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()
        history["loss"].append(float(loss.detach()))
        history["snr_db"].append(snr_db)
        history["sigma_sq"].append(sigma_sq)
    return history
