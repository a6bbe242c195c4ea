"""Complex AWGN channel with average-power normalization.

Symbol vectors are complex tensors of shape ``(..., k)``. The transmit side
scales each vector onto the power sphere ``(1/k) * ||z||^2 = avg_power`` and
the channel adds circularly symmetric complex Gaussian noise whose variance
is set by the SNR in dB: ``sigma^2 = avg_power * 10**(-snr_db / 10)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch

from .errors import DegenerateInputError
from .seeding import make_generator


def pack_complex(v: torch.Tensor) -> torch.Tensor:
    """Fold a real vector ``(..., 2k)`` into a complex one ``(..., k)``.

    The first half of the last axis becomes the real parts, the second half
    the imaginary parts.
    """
    if v.shape[-1] % 2 != 0:
        raise ValueError(f"last dimension must be even, got {v.shape[-1]}")
    k = v.shape[-1] // 2
    return torch.complex(v[..., :k], v[..., k:])


def unpack_complex(z: torch.Tensor) -> torch.Tensor:
    """Inverse of :func:`pack_complex`: ``(..., k)`` complex to ``(..., 2k)`` real."""
    return torch.cat([z.real, z.imag], dim=-1)


def normalize_power(z_tilde: torch.Tensor, avg_power: float = 1.0) -> torch.Tensor:
    """Project each symbol vector onto the sphere ``(1/k) * ||z||^2 = avg_power``.

    z = sqrt(k * avg_power) * z_tilde / ||z_tilde||, applied along the last
    axis. The scale factor is computed in float64 so the constraint holds to
    ~1e-6 even for float32 inputs. Zero-norm vectors have no well-defined
    direction and raise :class:`DegenerateInputError`.
    """
    if avg_power <= 0:
        raise ValueError(f"avg_power must be positive, got {avg_power}")
    k = z_tilde.shape[-1]
    z64 = z_tilde.to(torch.complex128 if z_tilde.is_complex() else torch.float64)
    norm = torch.linalg.vector_norm(z64, dim=-1, keepdim=True)
    if not bool(torch.all(norm > 0)):
        raise DegenerateInputError("cannot power-normalize a zero-norm symbol vector")
    z = math.sqrt(k * avg_power) * z64 / norm
    return z.to(z_tilde.dtype)


def snr_to_sigma_sq(snr_db: float, avg_power: float = 1.0) -> float:
    """Noise variance for a given SNR: sigma^2 = avg_power * 10**(-snr_db / 10)."""
    if avg_power <= 0:
        raise ValueError(f"avg_power must be positive, got {avg_power}")
    return avg_power * 10.0 ** (-snr_db / 10.0)


def awgn(z: torch.Tensor, sigma_sq: float, seed: int | torch.Generator) -> torch.Tensor:
    """Add circularly symmetric complex Gaussian noise with total variance sigma^2.

    Each of the real and imaginary components gets variance sigma^2 / 2.
    With ``sigma_sq == 0`` the input is returned unchanged (the noise draw
    still advances the generator so call sequences stay aligned).
    """
    if not z.is_complex():
        raise ValueError("awgn expects a complex symbol tensor; use pack_complex first")
    if sigma_sq < 0:
        raise ValueError(f"sigma_sq must be non-negative, got {sigma_sq}")
    g = make_generator(seed)
    real_dtype = torch.float64 if z.dtype == torch.complex128 else torch.float32
    std = math.sqrt(sigma_sq / 2.0)
    re = torch.randn(z.shape, generator=g, dtype=real_dtype)
    im = torch.randn(z.shape, generator=g, dtype=real_dtype)
    if sigma_sq == 0:
        return z
    return z + torch.complex(re, im).to(z.dtype) * std


@dataclass(frozen=True)
class ChannelParams:
    """Channel operating point; ``sigma_sq`` is derived, never stored independently."""

    avg_power: float = 1.0
    snr_db: float = 0.0

    def __post_init__(self):
        if self.avg_power <= 0:
            raise ValueError(f"avg_power must be positive, got {self.avg_power}")

    @property
    def sigma_sq(self) -> float:
        return snr_to_sigma_sq(self.snr_db, self.avg_power)
