"""Deterministic named random substreams.

Every consumer of randomness derives its own counter-based generator from
(seed, stream name), so adding or removing one consumer never perturbs the
draws of another, and any step of a run can be reproduced statelessly:
stream(seed, name, step) always returns a generator in the same state.
"""

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1

# one step never consumes anywhere near this many draws from one stream
_STEP_STRIDE = 1 << 24


def _name_word(name):
    digest = hashlib.blake2b(name.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def stream(seed, name, step=0):
    """Generator for substream `name` of `seed`, positioned at `step`."""
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    if step < 0:
        raise ValueError(f"step must be non-negative, got {step}")
    key = np.array([seed & _MASK64, _name_word(name)], dtype=np.uint64)
    bg = np.random.Philox(key=key)
    if step:
        bg.advance(step * _STEP_STRIDE)
    return np.random.Generator(bg)
