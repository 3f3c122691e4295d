"""Counter-based random streams for reproducible parallel replication.

Every replication batch gets a Philox generator keyed by (master seed,
purpose tag, counter), so results are independent of worker scheduling and
thread count.
"""

from __future__ import annotations

import numpy as np

__all__ = ["stream", "BATCH_SIZE"]

BATCH_SIZE = 512

_TAGS = {
    "structure": 1,
    "outcomes": 2,
    "replications": 3,
    "mc-probs": 4,
    "shocks": 5,
}


def stream(seed: int, tag: str, *counters: int) -> np.random.Generator:
    """Generator keyed by (seed, tag, counters...); same key, same stream."""
    entropy = (int(seed), _TAGS[tag], *[int(c) for c in counters])
    key = np.random.SeedSequence(entropy).generate_state(2, np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
