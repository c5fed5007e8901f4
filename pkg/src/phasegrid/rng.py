"""Deterministic random streams.

Every random draw in the package flows from a single 64-bit seed through
named substreams backed by the counter-based Philox generator.  A stream is
identified by (purpose string, seed): the purpose string is hashed with
BLAKE2 (stable across processes and platforms, unlike Python's ``hash``),
and the digest plus the seed key the generator.  Streams with different
purposes are statistically independent; the same (purpose, seed) pair
always yields the same sequence, regardless of worker count or call order
elsewhere in the program.
"""

from __future__ import annotations

import hashlib

import numpy as np

__all__ = ["stream", "purpose_key"]


def purpose_key(purpose: str) -> int:
    """Stable 64-bit key for a purpose string."""
    digest = hashlib.blake2b(purpose.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def stream(purpose: str, seed: int) -> np.random.Generator:
    """Independent generator for the given purpose under the given seed.

    Args:
        purpose: name of the consumer, e.g. ``"train/shuffle/epoch3"``.
        seed: the run's root seed (any Python int; folded to 64 bits).

    Returns:
        A ``numpy.random.Generator`` over a Philox counter-based stream.
    """
    if not isinstance(seed, (int, np.integer)):
        raise TypeError(f"seed must be an integer, got {type(seed).__name__}")
    root = np.random.SeedSequence(
        entropy=int(seed) & 0xFFFFFFFFFFFFFFFF,
        spawn_key=(purpose_key(purpose),),
    )
    return np.random.Generator(np.random.Philox(root))
