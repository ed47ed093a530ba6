"""Named RNG substreams so one scenario seed reproduces every run exactly."""

import zlib

import numpy as np


def substream(root_seed: int, name: str) -> np.random.Generator:
    """Derive an independent generator for `name` from the root seed.

    The spawn key is a stable hash of the name, so streams neither depend
    on creation order nor collide across differently named consumers.
    """
    key = zlib.crc32(name.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence(entropy=root_seed, spawn_key=(key,)))
