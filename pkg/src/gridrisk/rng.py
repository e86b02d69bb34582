"""Deterministic random substreams.

Every stochastic component draws from a stream derived from the run's master
seed plus a tuple of identifying tokens (channel name, trial, customer id,
year). Substreams are independent of each other and of evaluation order, so
trials can run on any number of workers and still reproduce bit-identical
results.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _token_entropy(token: int | str) -> int:
    if isinstance(token, str):
        digest = hashlib.sha256(token.encode("utf-8")).digest()
        return int.from_bytes(digest[:8], "little")
    value = int(token)
    if value < 0:
        raise ValueError(f"seed tokens must be nonnegative, got {value}")
    return value


def substream(*tokens: int | str) -> np.random.Generator:
    """Generator seeded by a deterministic hash of the token tuple."""
    if not tokens:
        raise ValueError("at least one seed token is required")
    entropy = [_token_entropy(tok) for tok in tokens]
    return np.random.default_rng(np.random.SeedSequence(entropy))
