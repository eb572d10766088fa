"""Splittable, counter-based random streams.

Every consumer of randomness in this package draws from a Philox generator
keyed by (master seed, stream tag, *extra tags).  Philox is counter-based, so
streams derived from distinct tag tuples are statistically independent and
can be created in any order, which makes trajectory generation embarrassingly
parallel while staying bit-reproducible.

Conventions:

* one child stream per trajectory index (tags ``(stream, trial, traj)``),
* grid-search validation streams are keyed by the *values* of the grid cell
  (bit patterns of lambda and sigma), so duplicated cells replay identically.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

# Stream tags.  Never reuse a value; append only.
STREAM_TRAIN = 1
STREAM_EVAL = 2
STREAM_PARTITION = 3
STREAM_GRID_VAL = 4
STREAM_SUBSET = 5

_U64 = (1 << 64) - 1


def float_key(x: float) -> int:
    """Stable unsigned-integer key for a float (its IEEE-754 bit pattern)."""
    return struct.unpack("<Q", struct.pack("<d", float(x)))[0]


def make_stream(master_seed: int, *tags: int) -> np.random.Generator:
    """Philox generator keyed by the master seed and a tag tuple."""
    entropy = (int(master_seed) & _U64,) + tuple(int(t) & _U64 for t in tags)
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


@dataclass(frozen=True)
class StreamFamily:
    """A keyed family of independent generators, one per integer index.

    ``family.child(i)`` always returns a fresh generator positioned at the
    start of stream ``(master, *tags, i)``; calling it twice replays the
    stream.
    """

    master_seed: int
    tags: tuple[int, ...]

    def child(self, index: int) -> np.random.Generator:
        return make_stream(self.master_seed, *self.tags, index)


def train_streams(master_seed: int, trial: int) -> StreamFamily:
    return StreamFamily(master_seed, (STREAM_TRAIN, trial))


def eval_streams(master_seed: int, trial: int) -> StreamFamily:
    return StreamFamily(master_seed, (STREAM_EVAL, trial))


def grid_val_streams(master_seed: int, lam: float, sigma: float) -> StreamFamily:
    """Validation-cohort streams for one grid cell, keyed by the cell values."""
    return StreamFamily(master_seed, (STREAM_GRID_VAL, float_key(lam), float_key(sigma)))


def partition_stream(master_seed: int, trial: int) -> np.random.Generator:
    return make_stream(master_seed, STREAM_PARTITION, trial)


def subset_stream(master_seed: int, trial: int) -> np.random.Generator:
    return make_stream(master_seed, STREAM_SUBSET, trial)
