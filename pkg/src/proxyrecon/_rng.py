"""Seed derivation for reproducible substreams.

Every stochastic job gets its own generator derived from the master seed and
a tuple of integer keys (block index, replicate index, chain, ...). Results
therefore do not depend on the order in which jobs run.
"""
import numpy as np


def substream(seed, *keys):
    """Independent generator for ``(seed, *keys)``."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, keys)]))


def derive_seed(seed, *keys):
    """Integer seed for ``(seed, *keys)``; usable wherever an int seed is taken."""
    ss = np.random.SeedSequence([int(seed), *map(int, keys)])
    return int(ss.generate_state(1, np.uint64)[0])
