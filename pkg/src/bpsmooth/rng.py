"""Counter-based random streams keyed by (seed, stream tag, trial index).

Each trial owns a fixed-size block of the Philox counter space, so a trial's
draws are a pure function of (seed, tag, trial_index) regardless of execution
order, and a contiguous batch of trials can be generated in one vectorized
call that is bit-identical to generating the trials one by one.
"""

from __future__ import annotations

import hashlib

import numpy as np

_WORDS_PER_COUNTER = 4  # Philox-4x64 emits four 64-bit words per counter tick
_DOUBLE_SCALE = 2.0 ** -53


def stream_key(seed: int, tag: str) -> int:
    """Derive a 128-bit Philox key from a user seed and a stream tag."""
    digest = hashlib.blake2b(tag.encode("utf-8"), digest_size=8).digest()
    tag_bits = int.from_bytes(digest, "little")
    return (seed & 0xFFFFFFFFFFFFFFFF) | (tag_bits << 64)


def _blocks(count: int) -> int:
    return max(1, -(-count // _WORDS_PER_COUNTER))


def raw_block(seed: int, tag: str, first_trial: int, n_trials: int,
              words_per_trial: int) -> np.ndarray:
    """Raw 64-bit words for trials [first_trial, first_trial + n_trials),
    shape (n_trials, words_per_trial)."""
    blocks = _blocks(words_per_trial)
    bitgen = np.random.Philox(key=stream_key(seed, tag),
                              counter=first_trial * blocks)
    raw = bitgen.random_raw(n_trials * blocks * _WORDS_PER_COUNTER)
    raw = raw.reshape(n_trials, blocks * _WORDS_PER_COUNTER)
    return raw[:, :words_per_trial]


def uniforms_batch(seed: int, tag: str, first_trial: int, n_trials: int,
                   count: int) -> np.ndarray:
    """Per-trial uniforms in [0, 1), shape (n_trials, count)."""
    raw = raw_block(seed, tag, first_trial, n_trials, count)
    return (raw >> 11) * _DOUBLE_SCALE


def uniforms(seed: int, tag: str, trial: int, count: int) -> np.ndarray:
    """Uniforms in [0, 1) for a single trial; equals the matching row of
    ``uniforms_batch``."""
    return uniforms_batch(seed, tag, trial, 1, count)[0]


def trial_counter(tag_draws: int, trial: int) -> int:
    """The Philox counter at which a trial's block starts (recorded per
    trial so any record can be replayed in isolation)."""
    return trial * _blocks(tag_draws)


def generator(seed: int, tag: str, trial: int) -> np.random.Generator:
    """Sequential generator for samplers with a variable number of draws.

    Each trial gets 2^16 counters (262144 words) of headroom, far beyond any
    sampler's appetite here.
    """
    bitgen = np.random.Philox(key=stream_key(seed, tag), counter=trial << 16)
    return np.random.Generator(bitgen)
