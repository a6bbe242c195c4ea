"""Experiment harness: config, data, checkpoints, pipeline runner, CLI."""

from .config import ExperimentConfig, config_hash, load_config, validate_config
from .runner import RunManifest, run_evaluate, run_ingest, run_train

__all__ = [
    "ExperimentConfig",
    "RunManifest",
    "config_hash",
    "load_config",
    "run_evaluate",
    "run_ingest",
    "run_train",
    "validate_config",
]
