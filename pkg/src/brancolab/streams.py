"""Deterministic per-replicate random streams.

Every stochastic routine takes an explicit ``numpy.random.Generator``.
Ensembles derive one counter-based Philox stream per replicate from
(master_seed, stream_id), so results are independent of replicate
execution order, chunking, and thread count.
"""

from __future__ import annotations

import numpy as np

__all__ = ["substream", "replicate_stream"]

_MASK64 = (1 << 64) - 1

# Disjoint stream-id blocks for the sub-ensembles of one experiment.
COMPONENT_STRIDE = 1 << 32


def substream(master_seed: int, stream_id: int) -> np.random.Generator:
    """Philox generator keyed directly by (master_seed, stream_id)."""
    key = np.array([master_seed & _MASK64, stream_id & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def replicate_stream(master_seed: int, component: int, replicate: int) -> np.random.Generator:
    """Stream for one replicate of one sub-ensemble of an experiment."""
    return substream(master_seed, component * COMPONENT_STRIDE + replicate)
