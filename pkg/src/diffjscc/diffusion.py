"""Gaussian diffusion: noise schedule, forward process, and a small denoiser.

The chain runs in the [-1, 1] image domain; callers convert with
:func:`to_diffusion_domain` / :func:`from_diffusion_domain` at the boundary.

Schedule bookkeeping uses float64 tensors of length T + 1 with index 0 as
the t = 0 sentinel (beta_0 = 0, alpha_bar_0 = 1), so formulas indexing
``t - 1`` read naturally for t = 1..T.
"""

from __future__ import annotations

import math

import torch
from torch import nn
from torch.nn import functional as F

from .seeding import make_generator, reseed_module


def to_diffusion_domain(x: torch.Tensor) -> torch.Tensor:
    """Map [0, 1] image values to the [-1, 1] chain domain."""
    return 2.0 * x - 1.0


def from_diffusion_domain(x: torch.Tensor) -> torch.Tensor:
    """Map [-1, 1] chain values back to the [0, 1] image domain (no clamping)."""
    return (x + 1.0) / 2.0


class NoiseSchedule:
    """Variance schedule beta_1..beta_T and the quantities derived from it.

    Attributes are float64 tensors of length T + 1, indexed by timestep:
    ``beta``, ``alpha`` (= 1 - beta), ``alpha_bar`` (cumulative product, with
    alpha_bar[0] = 1), and ``sigma`` (posterior noise scale,
    sigma_t = sqrt((1 - alpha_bar_{t-1}) / (1 - alpha_bar_t) * beta_t),
    which is 0 at t = 1).
    """

    def __init__(self, betas):
        b = torch.as_tensor(betas, dtype=torch.float64).reshape(-1)
        if b.numel() == 0:
            raise ValueError("schedule needs at least one step")
        if not bool(torch.all((b > 0) & (b < 1))):
            raise ValueError("all betas must lie strictly in (0, 1)")
        self.T = int(b.numel())
        self.beta = torch.cat([torch.zeros(1, dtype=torch.float64), b])
        self.alpha = 1.0 - self.beta
        self.alpha_bar = torch.cumprod(self.alpha, dim=0)
        sigma = torch.zeros(self.T + 1, dtype=torch.float64)
        sigma[1:] = torch.sqrt(
            (1.0 - self.alpha_bar[:-1]) / (1.0 - self.alpha_bar[1:]) * self.beta[1:]
        )
        self.sigma = sigma

    @classmethod
    def linear(cls, timesteps: int = 1000, beta_start: float = 1e-4, beta_end: float = 0.02) -> "NoiseSchedule":
        return cls(torch.linspace(beta_start, beta_end, timesteps, dtype=torch.float64))

    def _check_t(self, t: int) -> None:
        if not 1 <= t <= self.T:
            raise IndexError(f"timestep {t} outside 1..{self.T}")

    def posterior_coeffs(self, t: int) -> tuple[float, float]:
        """Affine weights (c1 on x_t, c2 on x0_hat) of the reverse-step mean.

        c1 = sqrt(alpha_t) (1 - alpha_bar_{t-1}) / (1 - alpha_bar_t)
        c2 = sqrt(alpha_bar_{t-1}) beta_t / (1 - alpha_bar_t)

        They satisfy c1 * sqrt(alpha_bar_t) + c2 = sqrt(alpha_bar_{t-1})
        exactly, so the mean is consistent with the forward marginals; at
        t = 1 this reduces to (c1, c2) = (0, 1).
        """
        self._check_t(t)
        denom = 1.0 - self.alpha_bar[t]
        c1 = torch.sqrt(self.alpha[t]) * (1.0 - self.alpha_bar[t - 1]) / denom
        c2 = torch.sqrt(self.alpha_bar[t - 1]) * self.beta[t] / denom
        return float(c1), float(c2)


def _gather(values: torch.Tensor, t: torch.Tensor, ndim: int) -> torch.Tensor:
    """Index a per-timestep vector with a batch of timesteps and shape for broadcast."""
    out = values.to(torch.float64)[t]
    return out.reshape(t.shape[0], *([1] * (ndim - 1)))


def _as_batch_t(t, batch: int) -> torch.Tensor:
    if isinstance(t, int):
        return torch.full((batch,), t, dtype=torch.long)
    t = torch.as_tensor(t, dtype=torch.long)
    if t.ndim == 0:
        return t.reshape(1).expand(batch)
    return t


def forward_sample(x0: torch.Tensor, t, eps: torch.Tensor, schedule: NoiseSchedule) -> torch.Tensor:
    """Closed-form forward jump: x_t = sqrt(ab_t) x0 + sqrt(1 - ab_t) eps."""
    tb = _as_batch_t(t, x0.shape[0])
    if bool(torch.any((tb < 1) | (tb > schedule.T))):
        raise IndexError(f"timestep outside 1..{schedule.T}")
    ab = _gather(schedule.alpha_bar, tb, x0.ndim)
    return (torch.sqrt(ab) * x0.to(torch.float64) + torch.sqrt(1.0 - ab) * eps.to(torch.float64)).to(x0.dtype)


def predict_x0(model: nn.Module, x_t: torch.Tensor, t: int, schedule: NoiseSchedule,
               detach_eps: bool = False) -> torch.Tensor:
    """Invert the forward jump at the model's noise estimate.

    x0_hat = (x_t - sqrt(1 - ab_t) eps_theta(x_t, t)) / sqrt(ab_t)

    ``detach_eps`` blocks gradient flow through the network output while
    keeping the direct x_t path differentiable.
    """
    schedule._check_t(t)
    eps = model(x_t, _as_batch_t(t, x_t.shape[0]))
    if detach_eps:
        eps = eps.detach()
    ab = float(schedule.alpha_bar[t])
    return (x_t - math.sqrt(1.0 - ab) * eps) / math.sqrt(ab)


def posterior_step(x_t: torch.Tensor, x0_hat: torch.Tensor, t: int, z: torch.Tensor,
                   schedule: NoiseSchedule) -> torch.Tensor:
    """One reverse step: c1 x_t + c2 x0_hat + sigma_t z (caller passes z = 0 at t = 1)."""
    c1, c2 = schedule.posterior_coeffs(t)
    return c1 * x_t + c2 * x0_hat + float(schedule.sigma[t]) * z


def sinusoidal_embedding(t: torch.Tensor, dim: int, dtype=torch.float32) -> torch.Tensor:
    """Classic log-spaced sin/cos embedding of the integer timestep."""
    if dim % 2 != 0:
        raise ValueError("embedding dim must be even")
    half = dim // 2
    freqs = torch.exp(-math.log(10000.0) * torch.arange(half, dtype=dtype) / max(half - 1, 1))
    args = t.to(dtype)[:, None] * freqs[None, :]
    return torch.cat([torch.sin(args), torch.cos(args)], dim=-1)


class _ResBlock(nn.Module):
    def __init__(self, width: int, emb_dim: int):
        super().__init__()
        self.norm1 = nn.GroupNorm(1, width)
        self.conv1 = nn.Conv2d(width, width, 3, padding=1)
        self.emb = nn.Linear(emb_dim, width)
        self.norm2 = nn.GroupNorm(1, width)
        self.conv2 = nn.Conv2d(width, width, 3, padding=1)

    def forward(self, h, emb):
        r = self.conv1(F.silu(self.norm1(h)))
        r = r + self.emb(emb)[:, :, None, None]
        r = self.conv2(F.silu(self.norm2(r)))
        return h + r


class Denoiser(nn.Module):
    """Small residual CNN predicting the noise eps added at step t.

    Carries its :class:`NoiseSchedule` so samplers can be handed one object.
    The final conv is zero-initialized, making the initial prediction the
    stem/blocks residual path only; this keeps early training stable.
    """

    def __init__(self, channels: int = 3, width: int = 48, depth: int = 4,
                 schedule: NoiseSchedule | None = None, seed: int = 0):
        super().__init__()
        self.channels = channels
        self.width = width
        emb_dim = width * 2
        self.time_mlp = nn.Sequential(
            nn.Linear(width, emb_dim),
            nn.SiLU(),
            nn.Linear(emb_dim, emb_dim),
        )
        self.stem = nn.Conv2d(channels, width, 3, padding=1)
        self.blocks = nn.ModuleList(_ResBlock(width, emb_dim) for _ in range(depth))
        self.head_norm = nn.GroupNorm(1, width)
        self.head = nn.Conv2d(width, channels, 3, padding=1)
        self.schedule = schedule if schedule is not None else NoiseSchedule.linear()
        reseed_module(self, seed)
        nn.init.zeros_(self.head.weight)
        nn.init.zeros_(self.head.bias)

    def forward(self, x: torch.Tensor, t: torch.Tensor) -> torch.Tensor:
        tb = _as_batch_t(t, x.shape[0])
        emb = self.time_mlp(sinusoidal_embedding(tb, self.width, x.dtype))
        h = self.stem(x)
        for block in self.blocks:
            h = block(h, emb)
        return self.head(F.silu(self.head_norm(h)))


def train_step(model: Denoiser, optimizer: torch.optim.Optimizer, x0: torch.Tensor,
               generator: torch.Generator) -> float:
    """One eps-matching step on a batch of [0, 1] images; returns the loss value."""
    schedule = model.schedule
    x0c = to_diffusion_domain(x0)
    t = torch.randint(1, schedule.T + 1, (x0.shape[0],), generator=generator)
    eps = torch.randn(x0.shape, generator=generator, dtype=x0.dtype)
    x_t = forward_sample(x0c, t, eps, schedule)
    loss = F.mse_loss(model(x_t, t), eps)
    optimizer.zero_grad()
    loss.backward()
    optimizer.step()
    return float(loss.detach())


def train_ddpm(model: Denoiser, images: torch.Tensor, steps: int, batch_size: int = 16,
               lr: float = 1e-4, seed: int = 0) -> list[float]:
    """Train on a stack of [0, 1] images; returns the per-step loss history."""
    g = make_generator(seed)
    optimizer = torch.optim.Adam(model.parameters(), lr=lr)
    history = []
    n = images.shape[0]
    for _ in range(steps):
        idx = torch.randint(0, n, (min(batch_size, n),), generator=g)
        history.append(train_step(model, optimizer, images[idx], g))
    return history


def sample(model: Denoiser, shape: tuple[int, ...], seed: int = 0,
           t_start: int | None = None) -> torch.Tensor:
    """Unconditional ancestral sampling; returns [0, 1]-domain images (unclamped)."""
    schedule = model.schedule
    t_start = schedule.T if t_start is None else t_start
    schedule._check_t(t_start)
    g = make_generator(seed)
    x = torch.randn(shape, generator=g)
    with torch.no_grad():
        for t in range(t_start, 0, -1):
            z = torch.randn(shape, generator=g) if t > 1 else torch.zeros(shape)
            x0_hat = predict_x0(model, x, t, schedule)
            x = posterior_step(x, x0_hat, t, z, schedule)
    return from_diffusion_domain(x)
