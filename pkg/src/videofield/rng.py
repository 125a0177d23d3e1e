"""Deterministic random streams.

All randomness flows through numpy's Philox counter-based generator, with
independent substreams derived from a root seed plus a tag path via
SeedSequence spawn keys. The generator name is recorded in checkpoint
metadata so files declare how their tensors were produced.
"""

from __future__ import annotations

import zlib

import numpy as np

PRNG_NAME = "philox4x64/seedseq-streams"


def _tag_to_int(tag) -> int:
    if isinstance(tag, (int, np.integer)):
        if tag < 0:
            raise ValueError(f"stream tag must be non-negative, got {tag}")
        return int(tag)
    if isinstance(tag, str):
        return zlib.crc32(tag.encode("utf-8"))
    raise TypeError(f"stream tag must be int or str, got {type(tag).__name__}")


def stream(seed: int, *tags) -> np.random.Generator:
    """Independent Philox stream for (seed, tag path). Identical arguments
    produce bit-identical streams on every platform."""
    key = tuple(_tag_to_int(t) for t in tags)
    ss = np.random.SeedSequence(int(seed), spawn_key=key)
    return np.random.Generator(np.random.Philox(ss))


def uniform_fan_in(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    """He-style uniform init: U(-sqrt(6/fan_in), +sqrt(6/fan_in))."""
    if fan_in <= 0:
        raise ValueError(f"fan_in must be positive, got {fan_in}")
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


def gaussian(rng: np.random.Generator, shape, sigma: float) -> np.ndarray:
    if sigma < 0:
        raise ValueError(f"sigma must be non-negative, got {sigma}")
    if sigma == 0.0:
        return np.zeros(shape, dtype=np.float64)
    return rng.normal(0.0, sigma, size=shape)


def seeded_init(shape, scheme: str, seed: int, *, sigma: float = 1.0,
                fan_in: int | None = None) -> np.ndarray:
    """Seeded tensor initialization.

    scheme "uniform-fan-in" draws U(+-sqrt(6/fan_in)) with fan_in
    defaulting to shape[0]; scheme "gaussian" draws N(0, sigma^2).
    Identical (shape, scheme, seed) arguments give bit-identical tensors.
    """
    shape = tuple(int(s) for s in shape)
    if any(s <= 0 for s in shape):
        raise ValueError(f"extents must be positive, got {shape}")
    rng = stream(seed, "seeded-init", scheme)
    if scheme == "uniform-fan-in":
        return uniform_fan_in(rng, shape, fan_in if fan_in is not None else shape[0])
    if scheme == "gaussian":
        return gaussian(rng, shape, sigma)
    raise ValueError(f"unknown init scheme {scheme!r}")
