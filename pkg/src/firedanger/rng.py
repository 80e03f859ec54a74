"""Named, seedable random streams.

Every consumer (weight init, dropout, shuffling, negative sampling, ...) asks
for its own stream by name. Streams are Philox counter-based generators keyed
by ``(seed, *names)``, so the values one consumer sees never depend on how many
draws another consumer made before it.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _name_words(names: tuple[object, ...]) -> list[int]:
    digest = hashlib.sha256("\x1f".join(str(n) for n in names).encode("utf-8")).digest()
    return [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]


def stream(seed: int, *names: object) -> np.random.Generator:
    """Return an independent generator for the consumer identified by ``names``."""
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=_name_words(names))
    return np.random.Generator(np.random.Philox(ss))


def substream_seed(seed: int, *names: object) -> int:
    """Derive a 63-bit integer seed for a named child (e.g. one tree of a forest)."""
    return int(stream(seed, "seed-derivation", *names).integers(0, 2**63 - 1))
