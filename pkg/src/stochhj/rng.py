"""Counter-based random streams keyed by (master seed, tag, index, substream).

Every stochastic consumer derives its generator from this module, so adding
realizations or reordering work never perturbs existing draws.
"""
from __future__ import annotations

import zlib

import numpy as np

FIELD_STREAM = 0
PATH_STREAM = 1
AUX_STREAM = 2


def tag_key(tag: str) -> int:
    return zlib.crc32(tag.encode("utf-8"))


def stream(master_seed: int, index: int, substream: int, tag: str = "env") -> np.random.Generator:
    """Return an independent Philox generator for one (seed, tag, index, substream)."""
    if master_seed < 0 or index < 0 or substream < 0:
        raise ValueError("seeds, indices and substreams must be non-negative")
    seq = np.random.SeedSequence(
        entropy=int(master_seed) & 0xFFFFFFFFFFFFFFFF,
        spawn_key=(tag_key(tag), int(index), int(substream)),
    )
    return np.random.Generator(np.random.Philox(seq))
