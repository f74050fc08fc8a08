"""Seed handling shared by every random artifact in the package.

All randomness flows from integer seeds. Child seeds are derived with a
SHA-256 hash of the parent seed and a tuple of keys, so adding keys (more
trials, more grid points) never perturbs streams that already exist.
"""

from __future__ import annotations

import hashlib

import numpy as np

_SEED_MASK = (1 << 63) - 1


def derive_seed(seed: int, *keys: object) -> int:
    """Return a 63-bit child seed for ``seed`` and ``keys``.

    The child seed is the first 8 bytes (big endian) of
    ``sha256("<seed>:<key1>:<key2>...")`` masked to 63 bits.
    """
    text = ":".join(str(k) for k in (int(seed),) + keys)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") & _SEED_MASK


def make_rng(seed: int, *keys: object) -> np.random.Generator:
    if keys:
        seed = derive_seed(seed, *keys)
    return np.random.Generator(np.random.SFC64(np.random.SeedSequence(int(seed))))


# Number of measurement matrices drawn per seeded block. Part of the
# ensemble definition: changing it changes every ensemble.
BLOCK = 64


def gaussian_block(seed: int, tag: str, block: int, count: int, shape: tuple[int, ...]) -> np.ndarray:
    """Standard normal array of shape ``(count, *shape)`` for one block."""
    rng = make_rng(seed, tag, block)
    return rng.standard_normal((count,) + tuple(shape))
