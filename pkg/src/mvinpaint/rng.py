"""Seeded random sub-streams derived by stable hashing."""

import zlib

import numpy as np


def derive_rng(seed: int, purpose: str, *index: int) -> np.random.Generator:
    """Independent generator for ``(seed, purpose, index...)``.

    The purpose string is hashed with CRC-32, so streams are stable across
    processes and Python versions.  The index count is part of the key because
    SeedSequence ignores trailing zero words.
    """
    key = [int(seed) & 0xFFFFFFFF, zlib.crc32(purpose.encode()), len(index)]
    key += [int(i) & 0xFFFFFFFF for i in index]
    return np.random.default_rng(np.random.SeedSequence(key))
