"""Deterministic RNG plumbing.

All randomness in the package flows from a single 64-bit experiment seed
through named sub-streams, so any component (weight init, gate noise, data
generation, injected label noise, shuffling) can be reproduced in isolation.
Stream names are hashed with SHA-256, not Python's ``hash``, so streams are
stable across interpreter runs.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def _name_key(name: str) -> int:
    return int.from_bytes(hashlib.sha256(name.encode("utf-8")).digest()[:8], "little")


def substream(seed: int, *names: str) -> np.random.Generator:
    """Generator for the sub-stream identified by ``names`` under ``seed``.

    Different name tuples yield statistically independent streams; the same
    (seed, names) pair always yields the same stream.
    """
    entropy = [seed & _MASK64] + [_name_key(n) for n in names]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def spawn_seed(seed: int, *names: str) -> int:
    """A derived 64-bit seed, for handing to components that seed themselves."""
    return int(substream(seed, *names).integers(0, _MASK64, dtype=np.uint64))
