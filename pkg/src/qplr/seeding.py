"""Named, splittable seeds.

Every random consumer asks for a stream by name (and optionally by a
sample key), so results do not depend on evaluation order.
"""
import hashlib

import numpy as np


def _digest(*parts) -> bytes:
    h = hashlib.blake2b(digest_size=8)
    for part in parts:
        if isinstance(part, (bytes, bytearray, memoryview)):
            h.update(b"b:" + bytes(part))
        else:
            h.update(b"s:" + str(part).encode())
        h.update(b"\x1f")
    return h.digest()


def derive_seed(master: int, *keys) -> int:
    """Deterministic 64-bit child seed of ``master`` for the given key path."""
    return int.from_bytes(_digest(int(master), *keys), "little")


def make_rng(master: int, *keys) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(derive_seed(master, *keys)))


def content_key(array) -> str:
    """Hex digest of an array's bytes; identical inputs share a key."""
    arr = np.ascontiguousarray(np.asarray(array, dtype=np.float64))
    return _digest(arr.shape, arr.tobytes()).hex()
