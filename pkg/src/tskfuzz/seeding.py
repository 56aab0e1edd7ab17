"""Named sub-streams derived from one master seed.

Every randomized stage (split, synth, k-means, sigma draws, batch shuffling,
...) pulls its own generator via `rng(master_seed, "stage-name", ...)`, so
changing one stage's parameters never perturbs another stage's draws.
"""

from __future__ import annotations

import hashlib

import numpy as np


def substream_seed(master_seed: int, *names: object) -> int:
    """Derive a stable 64-bit seed for the sub-stream identified by `names`."""
    tag = ":".join([str(int(master_seed))] + [str(n) for n in names])
    digest = hashlib.blake2s(tag.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def rng(master_seed: int, *names: object) -> np.random.Generator:
    """Generator for the named sub-stream of `master_seed`."""
    return np.random.default_rng(substream_seed(master_seed, *names))
