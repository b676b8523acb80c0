"""Named, counter-based random streams.

A stream is keyed by ``(master seed, name)``: the seed (as 8 little-endian
bytes) and the UTF-8 name are hashed with BLAKE2b into a 128-bit Philox
key.  Philox is counter based, so the draws depend on nothing but the key
and are identical across platforms and process layouts.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

SEED_BITS = 64


def _key(seed: int, name: str) -> int:
    if not (0 <= seed < 2 ** SEED_BITS):
        raise ValueError(f"master seed must be an unsigned 64-bit integer, got {seed}")
    h = hashlib.blake2b(digest_size=16, person=b"hardspheres-rng")
    h.update(int(seed).to_bytes(8, "little"))
    h.update(name.encode("utf-8"))
    return int.from_bytes(h.digest(), "little")


@dataclass(frozen=True)
class RngStream:
    """Deterministic stream for ``(seed, name)``; names are ``/``-joined paths."""

    seed: int
    name: str

    def generator(self) -> np.random.Generator:
        """A fresh generator positioned at the start of the stream."""
        return np.random.Generator(np.random.Philox(key=_key(self.seed, self.name)))

    def child(self, *labels) -> "RngStream":
        suffix = "/".join(str(x) for x in labels)
        return RngStream(self.seed, f"{self.name}/{suffix}" if self.name else suffix)


def derive_stream(seed: int, name: str) -> RngStream:
    return RngStream(int(seed), str(name))
