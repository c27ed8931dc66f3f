"""Named, reproducible random substreams derived from one master seed."""

from __future__ import annotations

import hashlib

import numpy as np


def substream(seed: int, *tags: object) -> np.random.Generator:
    """Return a Generator keyed by (seed, *tags).

    The same (seed, tags) pair yields the same stream on every platform,
    so components (data-gen, init, batching, dropout, ...) can draw from
    independent streams that are individually reproducible.
    """
    h = hashlib.sha256()
    h.update(str(int(seed)).encode())
    for tag in tags:
        h.update(b"/")
        h.update(str(tag).encode())
    entropy = int.from_bytes(h.digest()[:16], "little")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))
