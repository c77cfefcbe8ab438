"""Seed derivation for reproducible parallel work."""

from __future__ import annotations

import numpy as np


def task_seed(seed: int, *keys: int) -> int:
    """Independent 32-bit seed for the task identified by ``keys``.

    Also maps 64-bit run seeds into the range scikit-learn accepts for
    ``random_state``.
    """
    return int(np.random.SeedSequence([seed, *keys]).generate_state(1)[0])
