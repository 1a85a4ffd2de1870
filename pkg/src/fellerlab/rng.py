"""Deterministic random streams derived from a single experiment seed.

Every consumer asks for a stream by label; the (seed, label) pair is hashed
into a Philox key, so streams are stateless, reproducible, and independent
of call order.
"""
from __future__ import annotations

import hashlib

import numpy as np

__all__ = ["stream"]


def stream(seed: int, label: str) -> np.random.Generator:
    """Counter-based generator keyed by (seed, label)."""
    digest = hashlib.sha256(f"{int(seed)}:{label}".encode("utf-8")).digest()
    key = int.from_bytes(digest[:16], "big")
    return np.random.Generator(np.random.Philox(key=key))
