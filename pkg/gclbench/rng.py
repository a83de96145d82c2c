"""
Named deterministic random streams.

The stream for purpose P in run R under global seed s is seeded by the first
8 bytes (little endian) of SHA-256 over the UTF-8 text "s|R|P". Streams for
different purposes never share state, so adding draws to one stage leaves
every other stage unchanged.
"""

import hashlib

import numpy as np


def stream_seed(seed: int, purpose: str, run: str = "") -> int:
    """Stable 64-bit seed for (global seed, run, purpose)."""
    key = f"{int(seed)}|{run}|{purpose}"
    return int.from_bytes(hashlib.sha256(key.encode("utf-8")).digest()[:8], "little")


def stream(seed: int, purpose: str, run: str = "") -> np.random.Generator:
    """Fresh PCG64 generator for one purpose within one run."""
    return np.random.Generator(np.random.PCG64(stream_seed(seed, purpose, run)))
