from .parallel import ordered_map
from .rng import SeedStreams, as_generator

__all__ = ["SeedStreams", "as_generator", "ordered_map"]
