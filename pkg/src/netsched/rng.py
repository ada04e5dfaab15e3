"""Seeded random streams.

All randomness goes through numpy's PCG64 bit generator, seeded by a
``SeedSequence`` built from ``(seed, crc32(tag), index)``. Both the bit
generator and the seed-sequence hashing are platform independent, so a
given ``(seed, tag, index)`` triple yields the same stream everywhere and
distinct trials get statistically independent streams.
"""

import zlib

import numpy as np


def stream_key(seed: int, tag: str, index: int = 0) -> list[int]:
    if seed < 0 or index < 0:
        raise ValueError("seed and index must be non-negative")
    return [int(seed), zlib.crc32(tag.encode("utf-8")), int(index)]


def derive_rng(seed: int, tag: str, index: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(stream_key(seed, tag, index))))
