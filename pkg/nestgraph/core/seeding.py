"""Seed derivation: every random stream is a pure function of its keys"""

import zlib
from typing import Union

import numpy as np

Key = Union[int, str]


def _as_entropy(key: Key) -> int:
    if isinstance(key, str):
        return zlib.crc32(key.encode())
    return int(key) % (2 ** 63)


def derive_seed(*keys: Key) -> int:
    """Mix keys (ints or labels) into one 63-bit seed"""
    state = np.random.SeedSequence([_as_entropy(k) for k in keys]).generate_state(2, dtype=np.uint32)
    return int(state[0]) << 31 | int(state[1]) >> 1


def rng_for(*keys: Key) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([_as_entropy(k) for k in keys]))
