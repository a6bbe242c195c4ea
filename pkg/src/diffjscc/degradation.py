"""Linear degradation operators with exact pseudo-inverses.

Each operator A comes with a matrix-free ``apply`` and a pseudo-inverse
``pinv_apply`` satisfying A A+ = I on the measurement space, which makes
A+ A an orthogonal-style projection onto the range component. That identity
is what lets a sampler overwrite the range component of an estimate with
measured data while leaving the null component free:

    rectify(x0, y) = x0 - A+(A x0 - y)   =>   A rectify(x0, y) = y.

Supported kinds:

* ``identity``      A = I on any shape.
* ``mean_pool``     block-average with factor s; images pool the last two
                    axes, 1-D vectors pool the last axis. A+ replicates each
                    measurement back over its block.
* ``decolorize``    RGB to luminance by channel mean; A+ replicates the gray
                    channel back to three.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .errors import ConfigurationError

KINDS = ("identity", "mean_pool", "decolorize")


def _check_divisible(size: int, scale: int, axis: str) -> None:
    if size % scale != 0:
        raise ConfigurationError(f"{axis} size {size} is not divisible by pool factor {scale}")


@dataclass(frozen=True)
class LinearDegradation:
    """A linear measurement operator and its exact pseudo-inverse."""

    kind: str
    scale: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown degradation kind {self.kind!r}; expected one of {KINDS}")
        if self.scale < 1:
            raise ConfigurationError(f"pool factor must be >= 1, got {self.scale}")
        if self.kind != "mean_pool" and self.scale != 1:
            raise ConfigurationError(f"kind {self.kind!r} takes no pool factor")

    def apply(self, x: torch.Tensor) -> torch.Tensor:
        """Measure: A x."""
        if self.kind == "identity":
            return x
        if self.kind == "decolorize":
            if x.ndim < 3 or x.shape[-3] != 3:
                raise ConfigurationError(f"decolorize expects a 3-channel image, got shape {tuple(x.shape)}")
            return x.mean(dim=-3, keepdim=True)
        s = self.scale
        if s == 1:
            return x
        if x.ndim == 1:
            _check_divisible(x.shape[0], s, "vector")
            return x.reshape(-1, s).mean(dim=-1)
        _check_divisible(x.shape[-2], s, "height")
        _check_divisible(x.shape[-1], s, "width")
        h, w = x.shape[-2] // s, x.shape[-1] // s
        blocks = x.reshape(*x.shape[:-2], h, s, w, s)
        return blocks.mean(dim=(-3, -1))

    def pinv_apply(self, y: torch.Tensor) -> torch.Tensor:
        """Lift a measurement back: A+ y, with A A+ = I."""
        if self.kind == "identity":
            return y
        if self.kind == "decolorize":
            if y.ndim < 3 or y.shape[-3] != 1:
                raise ConfigurationError(f"decolorize pinv expects a 1-channel image, got shape {tuple(y.shape)}")
            return y.expand(*y.shape[:-3], 3, *y.shape[-2:]).clone()
        s = self.scale
        if s == 1:
            return y
        if y.ndim == 1:
            return y.repeat_interleave(s, dim=-1)
        return y.repeat_interleave(s, dim=-2).repeat_interleave(s, dim=-1)


def make_operator(kind: str, scale: int = 1) -> LinearDegradation:
    return LinearDegradation(kind=kind, scale=scale)


def rectify(x0: torch.Tensor, y: torch.Tensor, op: LinearDegradation) -> torch.Tensor:
    """Overwrite the measured component of ``x0`` with ``y``: x0 - A+(A x0 - y)."""
    return x0 - op.pinv_apply(op.apply(x0) - y)


def range_null_project(x: torch.Tensor, op: LinearDegradation) -> tuple[torch.Tensor, torch.Tensor]:
    """Split ``x`` into (A+ A x, x - A+ A x); the parts always sum back to ``x``."""
    range_part = op.pinv_apply(op.apply(x))
    return range_part, x - range_part


def dense_matrices(op: LinearDegradation, input_shape: tuple[int, ...]) -> tuple[np.ndarray, np.ndarray]:
    """Materialize (A, A+) as float64 arrays by probing with basis vectors.

    Intended for small oracle problems only; cost is one operator apply per
    input dimension.
    """
    m = int(np.prod(input_shape))
    cols = []
    for j in range(m):
        e = torch.zeros(m, dtype=torch.float64)
        e[j] = 1.0
        cols.append(op.apply(e.reshape(input_shape)).reshape(-1).numpy())
    a = np.stack(cols, axis=1)
    d = a.shape[0]
    out_shape = op.apply(torch.zeros(input_shape, dtype=torch.float64)).shape
    pinv_cols = []
    for j in range(d):
        e = torch.zeros(d, dtype=torch.float64)
        e[j] = 1.0
        pinv_cols.append(op.pinv_apply(e.reshape(out_shape)).reshape(-1).numpy())
    a_pinv = np.stack(pinv_cols, axis=1)
    return a, a_pinv
