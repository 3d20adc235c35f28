"""Seed derivation: every record gets its own stream, independent of execution order."""
from __future__ import annotations

import numpy as np


def record_seed(global_seed: int, record_id: int) -> int:
    """64-bit seed mixed from (global seed, record id) with numpy's SeedSequence hash."""
    state = np.random.SeedSequence(int(global_seed), spawn_key=(int(record_id),)).generate_state(1, np.uint64)
    return int(state[0])


def record_rng(global_seed: int, record_id: int) -> np.random.Generator:
    return np.random.default_rng(record_seed(global_seed, record_id))
