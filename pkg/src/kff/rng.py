"""Named, counter-based random streams derived from a single 64-bit seed."""

import hashlib

import numpy as np


def _key(name) -> int:
    return int.from_bytes(hashlib.sha256(str(name).encode()).digest()[:8], "little")


def generator(seed: int, *names) -> np.random.Generator:
    """Philox stream keyed by ``seed`` and a path of names.

    The same ``(seed, names)`` always yields the same stream, independent of
    thread scheduling or call order elsewhere.
    """
    if not 0 <= int(seed) < 2**64:
        raise ValueError("seed must be a 64-bit unsigned integer")
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(_key(n) for n in names))
    return np.random.Generator(np.random.Philox(ss))
