"""Deterministic RNG helpers.

Everything stochastic in this package is driven either by an explicit
``torch.Generator`` or by an integer seed that is converted into one here.
Ambient global RNG state is never read or written outside ``fork_rng`` guards,
so two runs with the same seeds are bit-identical.
"""

from __future__ import annotations

import hashlib

import torch


def make_generator(seed: int | torch.Generator) -> torch.Generator:
    """Return a CPU generator; integers are used as seeds, generators pass through."""
    if isinstance(seed, torch.Generator):
        return seed
    g = torch.Generator()
    g.manual_seed(int(seed))
    return g


def reseed_module(module: torch.nn.Module, seed: int) -> torch.nn.Module:
    """Re-run every submodule's parameter init under a fixed seed.

    Resets run children-first, so a parent whose ``reset_parameters``
    overrides a child's default (e.g. zeroing an output conv) gets the last
    word. Uses ``fork_rng`` so the ambient global RNG state is untouched.
    """
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        for m in reversed(list(module.modules())):
            if hasattr(m, "reset_parameters"):
                m.reset_parameters()
    return module


def randomize_module(module: torch.nn.Module, seed: int, std: float = 0.1) -> torch.nn.Module:
    """Fill every parameter with N(0, std^2) draws from a seeded generator.

    Used by property tests that quantify over random (untrained) weights;
    unlike ``reseed_module`` it also perturbs parameters whose default init
    is zero, so identity-preserving inits do not mask bugs. The modest
    default scale keeps activations O(1), which matters for tolerance
    checks run in single precision.
    """
    g = make_generator(seed)
    with torch.no_grad():
        for p in module.parameters():
            p.copy_(torch.randn(p.shape, generator=g, dtype=p.dtype) * std)
    return module


def stable_seed(*parts: object) -> int:
    """Derive a 63-bit seed from a tuple of labels, stable across runs and platforms."""
    text = "\x1f".join(str(p) for p in parts)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1
