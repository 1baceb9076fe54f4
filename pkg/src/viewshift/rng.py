"""Counter-based RNG derivation.

Every random draw in the pipeline comes from a generator derived by hashing
a (master seed, path...) tuple. Streams are therefore independent of each
other and of execution order, which is what makes parallel augmentation and
re-runs byte-reproducible.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(master_seed: int, *path) -> int:
    """Hash (master_seed, *path) into a 64-bit seed."""
    key = "\x1f".join([str(int(master_seed))] + [str(p) for p in path])
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def derive_rng(master_seed: int, *path) -> np.random.Generator:
    """Independent generator for the stream named by `path`."""
    return np.random.Generator(np.random.PCG64(derive_seed(master_seed, *path)))
