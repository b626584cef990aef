"""Counter-based random streams for reproducible block-parallel Monte Carlo."""

from __future__ import annotations

from typing import Iterator, Optional

import numpy as np

from ..config import settings


def block_generator(seed: int, block: int, stream: int = 0) -> np.random.Generator:
    """
    Philox generator keyed by (seed, stream) with the block index in the
    high counter word, so block b always sees the same numbers however
    the blocks are scheduled.
    """
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, stream & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64)
    counter = np.array([0, 0, 0, block], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


def path_blocks(n_paths: int, block_size: Optional[int] = None) -> Iterator[tuple[int, int, int]]:
    """(block index, first path, path count) covering n_paths in fixed-size blocks."""
    block_size = block_size or settings.mc_block_size
    for block, start in enumerate(range(0, n_paths, block_size)):
        yield block, start, min(block_size, n_paths - start)
