"""Deterministic random-stream derivation.

Every stochastic stage draws from a generator derived from the global seed,
a stage name and an index, so changing one stage's inputs never perturbs
another stage's stream.
"""

from __future__ import annotations

import zlib

import numpy as np


def rng_for(seed: int, stage: str, index: int = 0) -> np.random.Generator:
    tag = zlib.crc32(stage.encode("utf-8"))
    ss = np.random.SeedSequence(
        entropy=int(seed) & 0xFFFFFFFFFFFF, spawn_key=(tag, int(index) & 0xFFFFFFFF)
    )
    return np.random.default_rng(ss)
