"""Counter-based random substreams.

Every stochastic routine in the package draws from a Philox generator keyed
by (seed, stream id).  Trial t of a Monte Carlo run uses key (seed, t), so
results are independent of chunking, execution order and worker count.
"""
from __future__ import annotations

import zlib

import numpy as np

_MASK64 = (1 << 64) - 1


def _stream_id(label) -> int:
    if isinstance(label, int):
        return label & _MASK64
    return zlib.crc32(str(label).encode()) & _MASK64


def substream(seed: int, label=0) -> np.random.Generator:
    """Generator for one named/indexed substream of ``seed``."""
    return np.random.Generator(np.random.Philox(key=[seed & _MASK64, _stream_id(label)]))


def uniform_table(seed: int, first_trial: int, n_trials: int, n_draws: int) -> np.ndarray:
    """(n_trials, n_draws) uniforms; row i belongs to trial first_trial + i."""
    out = np.empty((n_trials, n_draws))
    for i in range(n_trials):
        out[i] = substream(seed, first_trial + i).random(n_draws)
    return out
