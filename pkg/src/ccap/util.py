"""Seed derivation and small shared helpers.

All stochastic stages derive their generators through ``spawn_rng`` so that
results are independent of scheduling and thread count: every (stage, index)
pair owns a disjoint, reproducible stream.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _token_to_int(token: int | str) -> int:
    if isinstance(token, (int, np.integer)):
        return int(token) & 0xFFFFFFFFFFFFFFFF
    digest = hashlib.sha256(str(token).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def spawn_rng(seed: int, *path: int | str) -> np.random.Generator:
    """Deterministic generator for a (seed, path) pair.

    Distinct paths yield statistically independent streams, so parallel
    tasks seeded this way produce results independent of execution order.
    """
    entropy = [_token_to_int(seed)] + [_token_to_int(p) for p in path]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def spawn_seed(seed: int, *path: int | str) -> int:
    """64-bit child seed for a (seed, path) pair."""
    entropy = [_token_to_int(seed)] + [_token_to_int(p) for p in path]
    return int(np.random.SeedSequence(entropy).generate_state(1, np.uint64)[0])


def check_finite(a: np.ndarray, what: str) -> None:
    if not np.isfinite(a).all():
        raise ValueError(f"{what} contains non-finite entries")
