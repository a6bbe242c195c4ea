"""Learned image transmission over AWGN with diffusion-based receivers."""

__version__ = "0.1.0"

from .channel import ChannelParams, awgn, normalize_power, pack_complex, snr_to_sigma_sq, unpack_complex
from .cond_inn import CondInnModel, train_inn
from .deepjscc import JsccConfig, JsccModel, composite_loss, train_jscc
from .degradation import LinearDegradation, make_operator, range_null_project, rectify
from .diffusion import Denoiser, NoiseSchedule, forward_sample, posterior_step, predict_x0, train_ddpm
from .errors import (
    ConfigurationError,
    DegenerateInputError,
    DependencyError,
    IngestionError,
    ValidationError,
)
from .metrics import MetricsRecord, PerceptualBackend, RandomFeatureBackend, psnr
from .sing_inn import SingInnConfig, restore_inn, zeta_schedule
from .sing_zero import SingZeroConfig, restore

__all__ = [
    "ChannelParams",
    "CondInnModel",
    "ConfigurationError",
    "DegenerateInputError",
    "Denoiser",
    "DependencyError",
    "IngestionError",
    "JsccConfig",
    "JsccModel",
    "LinearDegradation",
    "MetricsRecord",
    "NoiseSchedule",
    "PerceptualBackend",
    "RandomFeatureBackend",
    "SingInnConfig",
    "SingZeroConfig",
    "ValidationError",
    "awgn",
    "composite_loss",
    "forward_sample",
    "make_operator",
    "normalize_power",
    "pack_complex",
    "posterior_step",
    "predict_x0",
    "psnr",
    "range_null_project",
    "rectify",
    "restore",
    "restore_inn",
    "snr_to_sigma_sq",
    "train_ddpm",
    "train_inn",
    "train_jscc",
    "unpack_complex",
    "zeta_schedule",
]
