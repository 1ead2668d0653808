"""Deterministic RNG stream splitting.

All randomness in a run flows from one master seed.  Independent purposes
(weight init, data split, per-epoch shuffling, per-image sampling noise,
...) get independent numpy Generators derived via ``numpy.random.SeedSequence``
spawn keys, so adding a consumer to one stream can never perturb another.

The spawn key is ``(PURPOSES[purpose], *extra)``: a fixed small integer per
purpose followed by caller-supplied indices such as the epoch number or the
image index.
"""

from __future__ import annotations

import numpy as np

PURPOSES = {
    "model-init": 0,
    "data-split": 1,
    "epoch-shuffle": 2,
    "diffusion-train": 3,
    "sample-image": 4,
    "pairing": 5,
    "mix-lambda": 6,
    "corpus": 7,
}


def stream(master_seed: int, purpose: str, *extra: int) -> np.random.Generator:
    """Return the Generator for (seed, purpose, extra...); always the same one."""
    if purpose not in PURPOSES:
        raise KeyError(f"unknown rng purpose {purpose!r}; known: {sorted(PURPOSES)}")
    key = (PURPOSES[purpose],) + tuple(int(e) for e in extra)
    seq = np.random.SeedSequence(entropy=int(master_seed), spawn_key=key)
    return np.random.Generator(np.random.PCG64(seq))
