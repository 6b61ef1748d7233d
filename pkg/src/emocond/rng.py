"""Named random streams derived from a single integer seed.

Each consumer asks for a stream by name (``"corpus"``, ``"init"``,
``"batching"``, ``"eval"`` ...). Streams are independent of each other, so
changing how many draws one stage makes never shifts another stage.
"""

import zlib

import numpy as np

STREAMS = ("corpus", "split", "init", "batching", "tokens", "eval")


def stream(seed: int, name: str) -> np.random.Generator:
    if seed < 0 or seed >= 2**64:
        raise ValueError(f"seed must be a u64, got {seed}")
    key = zlib.crc32(name.encode("utf-8"))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(key,))))
