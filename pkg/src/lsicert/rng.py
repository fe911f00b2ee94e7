"""Named random sub-streams derived from one root seed."""

from __future__ import annotations

import zlib

import numpy as np


def _name_key(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


def seed_sequence(seed: int, name: str, *index: int) -> np.random.SeedSequence:
    """SeedSequence for sub-stream ``name`` (plus integer indices) of ``seed``.

    Streams with different names never overlap, so adding a new consumer does
    not perturb the draws of an existing one.
    """
    return np.random.SeedSequence(entropy=int(seed), spawn_key=(_name_key(name), *map(int, index)))


def substream(seed: int, name: str, *index: int) -> np.random.Generator:
    return np.random.default_rng(seed_sequence(seed, name, *index))


def derived_seed(seed: int, name: str, *index: int) -> int:
    """A 63-bit integer seed for APIs that take plain integers."""
    return int(seed_sequence(seed, name, *index).generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))
