"""Seeded random streams.

Every random draw in the toolkit comes from ``make_rng(seed, *stream)``,
a PCG64 generator keyed by a :class:`numpy.random.SeedSequence` whose
``spawn_key`` is the stream path. Stream roots per module:

=====================  =========================================
``FEATURES``  (1,)     frequency sampling
``PROBES``    (2,)     probe-point choice for leverage scores
``RESAMPLE``  (3,)     importance resampling of a pool
``SOLVER``    (4,)     sample order of the stochastic solver
``DATA``      (5,)     synthetic data generation
``SPLIT``     (6,)     train/validation shuffles
``BANDWIDTH`` (7,)     subsample for the bandwidth heuristic
=====================  =========================================

The harness appends cell coordinates (repeat index, feature count, ...)
after the root, so every cell is reproducible in isolation.
"""

import numpy as np

FEATURES = 1
PROBES = 2
RESAMPLE = 3
SOLVER = 4
DATA = 5
SPLIT = 6
BANDWIDTH = 7

_MASK64 = (1 << 64) - 1


def make_rng(seed, *stream):
    seed = int(seed) & _MASK64
    key = tuple(int(s) & _MASK64 for s in stream)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


def derive_seed(seed, *stream):
    """A 63-bit integer seed for a sub-stream, for recording in manifests."""
    seed = int(seed) & _MASK64
    key = tuple(int(s) & _MASK64 for s in stream)
    return int(np.random.SeedSequence(seed, spawn_key=key).generate_state(1, np.uint64)[0] >> np.uint64(1))
