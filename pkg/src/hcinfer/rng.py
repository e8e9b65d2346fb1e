"""Keyed, counter-based random substreams.

Every random draw in the package comes from a Philox generator whose key is
derived from ``(seed, purpose, *indices)``.  Two callers asking for the same
key get the same numbers no matter what else was drawn before, which is what
makes the objective a deterministic function of the parameters (common random
numbers) and lets independent work run in any order.
"""

from __future__ import annotations

import numpy as np

# purpose codes; values are part of the stream key and must never change
ARC = 1
SYMPTOM = 2
SPLIT = 3
BOOTSTRAP = 4
SYNTH = 5
GRAPH = 6
CLASSIFIER = 7
REPLICATE = 8
TRUTH = 9
SIMULATED = 10
TUNING = 11
REPORT = 12


def substream(seed: int, purpose: int, *indices: int) -> np.random.Generator:
    """Return the generator for key ``(seed, purpose, *indices)``."""
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    key = (int(purpose),) + tuple(int(i) for i in indices)
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=key)
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(seed: int, purpose: int, *indices: int) -> int:
    """A 63-bit child seed, for handing a fresh root seed to a sub-task."""
    return int(substream(seed, purpose, *indices).integers(0, 2**63 - 1))


def uniform_block(seed: int, purpose: int, index: int, rows: int, cols: int) -> np.ndarray:
    """Uniforms on [0, 1) of shape (rows, cols) for block ``index``.

    Row ``n`` holds the draws for run ``n`` of the block; prefixes are stable,
    so asking for more rows never changes the earlier ones.
    """
    return substream(seed, purpose, index).random((rows, cols))
