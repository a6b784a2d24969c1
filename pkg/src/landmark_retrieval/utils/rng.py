"""
Named random streams derived from a single root seed.

Every component asks for a generator by name ("scene/3",
"train/epoch/0/step/7", ...). The same root seed and name always produce the
same stream, independently of which other streams were drawn before, which
is what makes resumed training bitwise identical to an uninterrupted run.
"""

import zlib

import numpy as np


def _name_key(name: str) -> list[int]:
    # crc32 is stable across processes, unlike hash()
    return [zlib.crc32(part.encode("utf-8")) for part in name.split("/")]


class SeedStreams:
    """Factory of independent ``numpy.random.Generator`` streams."""

    def __init__(self, root_seed: int):
        if root_seed < 0:
            raise ValueError(f"Root seed must be non-negative: {root_seed}")
        self.root_seed = int(root_seed)

    def seed_sequence(self, name: str) -> np.random.SeedSequence:
        return np.random.SeedSequence(entropy=self.root_seed, spawn_key=_name_key(name))

    def generator(self, name: str) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(self.seed_sequence(name)))

    def integer_seed(self, name: str) -> int:
        """A 32-bit integer seed, for APIs that take plain ints."""
        return int(self.seed_sequence(name).generate_state(1, dtype=np.uint32)[0])

    def __repr__(self) -> str:
        return f"SeedStreams(root_seed={self.root_seed})"


def as_generator(seed: int | np.random.Generator | None) -> np.random.Generator:
    """Accept either a seed or an existing generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)
