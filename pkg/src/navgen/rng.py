"""Seed derivation.

All randomness uses numpy's PCG64 bit generator. Child seeds are derived
from a parent seed and string labels with BLAKE2b, so a scene's stream
depends only on (pipeline seed, scene id, stage) and never on the order in
which scenes are processed.
"""
from __future__ import annotations

import hashlib

import numpy as np

MASK64 = (1 << 64) - 1


def derive_seed(parent: int, *labels) -> int:
    h = hashlib.blake2b(digest_size=8)
    h.update(int(parent & MASK64).to_bytes(8, "little"))
    for label in labels:
        h.update(b"\x1f")
        h.update(str(label).encode("utf-8"))
    return int.from_bytes(h.digest(), "little")


def make_rng(seed: int, *labels) -> np.random.Generator:
    if labels:
        seed = derive_seed(seed, *labels)
    return np.random.Generator(np.random.PCG64(int(seed) & MASK64))
