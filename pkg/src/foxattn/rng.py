"""Deterministic random streams.

All randomness in the package flows from one integer seed. Independent
streams are derived by hashing (seed, label) into a Philox key, so stream
identity is stable across processes and does not depend on call order.
"""

from __future__ import annotations

import hashlib

import numpy as np


def rng_stream(seed: int, label: str) -> np.random.Generator:
    """Return a generator for the stream identified by (seed, label)."""
    digest = hashlib.sha256(f"{seed}:{label}".encode()).digest()
    key = int.from_bytes(digest[:16], "little")
    return np.random.Generator(np.random.Philox(key=key))
