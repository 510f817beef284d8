"""
Seed Models - hierarchical random streams

A SeedSpec names one random stream: a master seed plus a path of
non-negative integers. Streams are built on numpy's counter-based Philox
generator keyed by SeedSequence(master_seed, spawn_key=path), so a stream
depends only on its name and never on the order in which streams are used.
"""

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from src.errors import DomainError


MAX_SEED = 2**64 - 1


@dataclass(frozen=True)
class SeedSpec:
    """
    Random stream identifier

    Identical (master_seed, stream_path) pairs yield bit-identical draw
    sequences; distinct paths under one master seed are independent.
    """
    master_seed: int
    stream_path: Tuple[int, ...] = ()

    def __post_init__(self):
        if not 0 <= int(self.master_seed) <= MAX_SEED:
            raise DomainError(
                f"master_seed must be a 64-bit unsigned integer, got {self.master_seed}"
            )
        path = tuple(int(p) for p in self.stream_path)
        if any(p < 0 for p in path):
            raise DomainError(f"stream_path entries must be non-negative, got {path}")
        object.__setattr__(self, "master_seed", int(self.master_seed))
        object.__setattr__(self, "stream_path", path)

    def child(self, *path: int) -> "SeedSpec":
        """Sub-stream below this one"""
        return SeedSpec(self.master_seed, self.stream_path + tuple(path))

    def sequence(self) -> np.random.SeedSequence:
        return np.random.SeedSequence(self.master_seed, spawn_key=self.stream_path)

    def generator(self) -> np.random.Generator:
        """Fresh Philox generator positioned at the start of the stream"""
        return np.random.Generator(np.random.Philox(self.sequence()))

    def __str__(self) -> str:
        path = "/".join(str(p) for p in self.stream_path)
        return f"{self.master_seed}:{path}" if path else str(self.master_seed)


# Reserved path components, disjoint from replication indices
DESIGN_STREAM = 1_000_001
PREPASS_STREAM = 1_000_002
TABLE_STREAM = 1_000_003
POOL_STREAM = 1_000_004
