"""Counter-based random streams keyed by (root seed, stream id).

Each path draws from its own Philox generator whose key is derived from the
root seed and the path index, so results never depend on how paths are
scheduled across workers.  There is no global RNG state.
"""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Stream:
    """Handle for one independent random stream.

    ``generator()`` returns a fresh generator positioned at the start of the
    stream, so two calls give identical draws.  A generator must not be
    shared between threads.
    """

    root_seed: int
    stream_id: int = 0

    def __post_init__(self):
        if self.root_seed < 0 or self.stream_id < 0:
            raise ValueError("seed and stream id must be non-negative")

    def generator(self):
        seq = np.random.SeedSequence(self.root_seed, spawn_key=(self.stream_id,))
        return np.random.Generator(np.random.Philox(seq))


def streams(root_seed, count, start=0):
    """``count`` consecutive streams under ``root_seed``."""
    return [Stream(root_seed, start + k) for k in range(count)]
