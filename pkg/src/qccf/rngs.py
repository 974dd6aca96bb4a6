"""Named, splittable random substreams on top of a counter-based generator.

Every stochastic component of a run (data partition, per-round channels,
per-client local updates, per-client quantization, the per-round GA) pulls
from its own named substream derived from the single experiment seed, so
policies can be compared under identical randomness and results do not
depend on evaluation order or worker count.
"""

from __future__ import annotations

import numpy as np

__all__ = ["substream"]


def substream(root_seed: int, name: str) -> np.random.Generator:
    """Return an independent generator for the (seed, name) pair.

    The stream name is folded into the seed material byte-by-byte, so any
    distinct name yields a statistically independent Philox stream and the
    mapping is stable across processes and platforms.
    """
    entropy = [int(root_seed) & 0xFFFFFFFF] + list(name.encode("utf-8"))
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))
