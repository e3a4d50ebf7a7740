"""Deterministic stream derivation for the seed-based perturbation protocol.

Every random stream in the system is a counter-based Philox generator keyed
by a tuple of non-negative integers, so any component (a worker perturbation,
a task mini-batch, an adaptation batch draw) can be regenerated from its key
alone. Distinct key tuples give statistically independent streams.
"""

from __future__ import annotations

import numpy as np


def seed_sequence(*key: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(tuple(int(k) for k in key))


def generator(*key: int) -> np.random.Generator:
    """Counter-based generator uniquely keyed by the integer tuple."""
    return np.random.Generator(np.random.Philox(seed_sequence(*key)))


def derive_seed(*key: int) -> int:
    """A 64-bit child seed derived from an integer key tuple."""
    return int(seed_sequence(*key).generate_state(1, np.uint64)[0])
