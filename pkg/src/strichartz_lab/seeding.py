"""Deterministic per-cell seed derivation.

Cell seeds come from the splitmix64 finalizer applied to
``global_seed + cell_index * GOLDEN``, all in uint64 arithmetic.  The
finalizer is a bijection on 64-bit words, so distinct cell indices under
one global seed can never collide, and the derivation involves no
platform-dependent state.
"""

from __future__ import annotations

import numpy as np

__all__ = ["derive_cell_seed", "derive_cell_seeds"]

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


def derive_cell_seeds(global_seed: int, cell_indices) -> np.ndarray:
    """Vectorized splitmix64 finalizer; returns uint64 seeds."""
    with np.errstate(over="ignore"):
        z = np.uint64(global_seed) + np.asarray(cell_indices, dtype=np.uint64) * _GOLDEN
        z ^= z >> np.uint64(30)
        z *= _MIX1
        z ^= z >> np.uint64(27)
        z *= _MIX2
        z ^= z >> np.uint64(31)
    return z


def derive_cell_seed(global_seed: int, cell_index: int) -> int:
    """Seed for one experiment cell; pure and platform-independent."""
    return int(derive_cell_seeds(global_seed, [cell_index])[0])
