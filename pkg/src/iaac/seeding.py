"""Named random substreams derived from one root seed."""

import zlib

import numpy as np


def substream(seed: int, name: str) -> np.random.Generator:
    """Generator for component ``name``; independent of how other streams are consumed."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), zlib.crc32(name.encode())]))


def substream_seed(seed: int, name: str) -> int:
    return int(np.random.SeedSequence([int(seed), zlib.crc32(name.encode())]).generate_state(1)[0])
