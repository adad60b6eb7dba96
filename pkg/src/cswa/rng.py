"""Deterministic named random streams.

Every random draw in the package flows from one 64-bit master seed through
named sub-streams, so independent pieces of the pipeline (field synthesis,
coverage, noise, each chain's walk) cannot perturb each other's draws and
any piece can be replayed in isolation.
"""

from __future__ import annotations

import zlib

import numpy as np

_MASK64 = (1 << 64) - 1


def substream(seed: int, *tags: int | str) -> np.random.Generator:
    """Return the generator for the sub-stream named by ``tags`` under ``seed``.

    String tags are hashed with CRC-32, which is stable across platforms and
    interpreter runs (the built-in ``hash`` is salted and is not). Integer
    tags are used as-is, masked to 64 bits. The same (seed, tags) pair always
    yields an identically seeded, freshly constructed generator.
    """
    words = [int(seed) & _MASK64]
    for tag in tags:
        if isinstance(tag, str):
            words.append(zlib.crc32(tag.encode("utf-8")))
        else:
            words.append(int(tag) & _MASK64)
    return np.random.default_rng(np.random.SeedSequence(words))
