"""Deterministic per-path random streams.

Every stochastic routine derives its randomness from a counter-based Philox
generator keyed by (master_seed, domain, index). Path index i always maps to
the same stream no matter how paths are batched or sharded across workers,
which is what makes ensemble output independent of the thread count.
"""

from __future__ import annotations

import numpy as np

DOMAIN_PATHS = 1        # ensemble / trajectory noise
DOMAIN_COUPLED = 2      # shared-noise coupled pairs
DOMAIN_PROBES = 3       # probe-point and direction draws
DOMAIN_VALIDATE = 4     # assumption validators
DOMAIN_MEASURE = 5      # invariant-measure chains


def path_stream(master_seed: int, domain: int, index: int = 0) -> np.random.Generator:
    """Generator for one path; bit-reproducible given (seed, domain, index)."""
    ss = np.random.SeedSequence(int(master_seed) & 0xFFFFFFFFFFFFFFFF,
                                spawn_key=(int(domain), int(index)))
    return np.random.Generator(np.random.Philox(ss))


def block_streams(master_seed: int, domain: int, start: int, count: int):
    """Streams for a contiguous block of path indices."""
    return [path_stream(master_seed, domain, start + i) for i in range(count)]
