"""Zero-shot diffusion restoration constrained to agree with a measurement.

Each reverse step forms the plain posterior estimate x0 of the clean image,
then overwrites its measured (range) component with the actual measurement
before stepping:

    x0      = (x_t - sqrt(1 - ab_t) eps_theta(x_t, t)) / sqrt(ab_t)
    x0_rect = x0 - A+(A x0 - y)
    x_{t-1} = c1 x_t + c2 x0_rect + sigma_t z      (z = 0 at t = 1)

Because A A+ = I, the final step (which returns x0_rect itself) satisfies
A x_hat = y up to float roundoff; the diffusion prior only ever fills in the
null component that the measurement cannot see.

The sampler runs in the [-1, 1] chain domain. The operators here average or
copy pixels (their rows sum to 1), so measuring commutes with the affine
[0, 1] <-> [-1, 1] maps and y can be converted independently of x.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

from .degradation import LinearDegradation, rectify
from .diffusion import Denoiser, from_diffusion_domain, posterior_step, predict_x0, to_diffusion_domain
from .errors import ConfigurationError
from .seeding import make_generator


@dataclass(frozen=True)
class SingZeroConfig:
    """``t_effective`` truncates the chain: start at that step from pure noise."""

    t_effective: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.t_effective is not None and self.t_effective < 1:
            raise ConfigurationError(f"t_effective must be >= 1, got {self.t_effective}")


def _prepare(y: torch.Tensor, model: Denoiser, op: LinearDegradation):
    """Validate shapes and return (batched y, y in chain domain, x shape, was_batched)."""
    if y.ndim not in (3, 4):
        raise ConfigurationError(f"measurement must be (C, H, W) or (B, C, H, W), got {tuple(y.shape)}")
    batched = y.ndim == 4
    yb = y if batched else y[None]
    x_probe = op.pinv_apply(yb)
    if op.apply(x_probe).shape != yb.shape:
        raise ConfigurationError(
            f"operator does not round-trip measurement shape {tuple(yb.shape)}"
        )
    if x_probe.shape[1] != model.channels:
        raise ConfigurationError(
            f"operator implies {x_probe.shape[1]} image channels but the denoiser has {model.channels}"
        )
    return yb, to_diffusion_domain(yb), x_probe.shape, batched


def _resolve_t_start(t_effective: int | None, schedule) -> int:
    t_start = schedule.T if t_effective is None else t_effective
    if not 1 <= t_start <= schedule.T:
        raise ConfigurationError(f"t_effective {t_start} outside 1..{schedule.T}")
    return t_start


def restore(y: torch.Tensor, model: Denoiser, op: LinearDegradation,
            cfg: SingZeroConfig | None = None, on_step=None) -> torch.Tensor:
    """Restore an image from measurement ``y`` (values in [0, 1]).

    Returns the [0, 1]-domain estimate without clamping, so the exact
    measurement-consistency identity A x_hat = y is preserved in the return
    value; clamp for display or scoring.
    """
    cfg = cfg or SingZeroConfig()
    _, y_chain, x_shape, batched = _prepare(y, model, op)
    schedule = model.schedule
    t_start = _resolve_t_start(cfg.t_effective, schedule)
    g = make_generator(cfg.seed)
    x = torch.randn(x_shape, generator=g)
    with torch.no_grad():
        for t in range(t_start, 0, -1):
            z = torch.randn(x_shape, generator=g) if t > 1 else torch.zeros(x_shape)
            x0_hat = predict_x0(model, x, t, schedule)
            x0_rect = rectify(x0_hat, y_chain, op)
            x = posterior_step(x, x0_rect, t, z, schedule)
            if on_step is not None:
                on_step(t, {"x0_hat": x0_hat, "x0_rect": x0_rect, "x_next": x})
    out = from_diffusion_domain(x)
    return out if batched else out[0]
