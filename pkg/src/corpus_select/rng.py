"""Seeded, platform-stable random number streams.

All randomness in the package flows through Philox, a counter-based
generator whose output depends only on its 128-bit key, so identical seeds
reproduce identical streams across platforms and numpy builds. Independent
stages (projection, clustering init, pair sampling, baseline shuffles)
derive separate keys by hashing a context label into the seed, which keeps
them from sharing state when a user reuses one seed everywhere.
"""

from __future__ import annotations

import hashlib

import numpy as np


def subseed(seed: int, *context) -> int:
    """Derive a stable 128-bit key from a seed and a context tuple."""
    digest = hashlib.sha256(repr((int(seed),) + context).encode("utf-8")).digest()
    return int.from_bytes(digest[:16], "little")


def generator(seed: int, *context) -> np.random.Generator:
    """Philox generator keyed by `seed`, stream-separated by `context`."""
    key = subseed(seed, *context) if context else int(seed)
    return np.random.Generator(np.random.Philox(key=key))
