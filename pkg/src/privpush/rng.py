"""Deterministic per-node, per-purpose random streams.

Every stochastic ingredient of a run (sample picks, compression dither or
coordinate choices, privacy noise) draws from its own PCG64 stream keyed by
(master_seed, node_id, purpose).  Streams never interleave, so any two
implementations that consume the same draws per iteration see identical
randomness no matter how they order work across nodes.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PURPOSE_SAMPLING = 0
PURPOSE_COMPRESSION = 1
PURPOSE_NOISE = 2


def node_stream(master_seed: int, node_id: int, purpose: int) -> np.random.Generator:
    seq = np.random.SeedSequence([int(master_seed), int(node_id), int(purpose)])
    return np.random.Generator(np.random.PCG64(seq))


@dataclass
class NodeStreams:
    sampling: np.random.Generator
    compression: np.random.Generator
    noise: np.random.Generator


def make_node_streams(master_seed: int, n: int) -> list[NodeStreams]:
    return [
        NodeStreams(
            sampling=node_stream(master_seed, i, PURPOSE_SAMPLING),
            compression=node_stream(master_seed, i, PURPOSE_COMPRESSION),
            noise=node_stream(master_seed, i, PURPOSE_NOISE),
        )
        for i in range(n)
    ]
