"""Named-stream seeded random number generators.

Every stochastic component draws from its own stream derived from
(seed, name), so adding a consumer never perturbs the draws of another.
"""

from __future__ import annotations

import hashlib

import numpy as np


def stream_rng(seed: int, name: str) -> np.random.Generator:
    """Return a Generator for the stream `name` under the master `seed`."""
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    stream_key = int.from_bytes(digest[:8], "little")
    return np.random.default_rng(np.random.SeedSequence([seed, stream_key]))
