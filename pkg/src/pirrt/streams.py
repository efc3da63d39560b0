"""Seeded random streams keyed by (trial, cycle, role, index)."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

MAX_SEED = 2**64


def key_part(value: str | int | float) -> int:
    """Map one key component to a non-negative integer.

    Integers are used as-is; strings and floats are hashed so that e.g. the
    alpha value 0.25 and the role "bundle" get stable, platform-free keys.
    """
    if isinstance(value, bool):
        raise ValueError(f"stream key component cannot be a bool: {value!r}")
    if isinstance(value, (int, np.integer)):
        if value < 0:
            raise ValueError(f"stream key component must be non-negative, got {value}")
        return int(value)
    if isinstance(value, float):
        value = repr(value)
    digest = hashlib.sha256(str(value).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


@dataclass(frozen=True, slots=True)
class Streams:
    """A node in the tree of derived random streams.

    Every consumer (a trial, a replan cycle, one steering call, one bundle
    member) asks for its own child, so the numbers it sees depend only on its
    key path and never on how many draws some other consumer made.
    """

    seed: int
    key: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if not 0 <= self.seed < MAX_SEED:
            raise ValueError(f"master seed must be a 64-bit unsigned integer, got {self.seed}")

    def child(self, *parts: str | int | float) -> Streams:
        return Streams(self.seed, self.key + tuple(key_part(part) for part in parts))

    def generator(self, *parts: str | int | float) -> np.random.Generator:
        node = self.child(*parts)
        sequence = np.random.SeedSequence(node.seed, spawn_key=node.key)
        return np.random.Generator(np.random.Philox(sequence))

    @property
    def tag(self) -> tuple[int, ...]:
        return (self.seed, *self.key)
