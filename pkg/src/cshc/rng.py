"""Seed handling: one 64-bit run seed, keyed substreams everywhere else."""

import numpy as np

_MASK = (1 << 64) - 1


def substream(*keys):
    """Independent generator derived from a tuple of integer keys.

    (seed, tree_index), (seed, sample_index) and similar tuples give
    reproducible, order-independent streams.
    """
    return np.random.default_rng([int(k) & _MASK for k in keys])
