"""Reproducible Brownian increments from a counter-based generator.

Each increment Delta B_k at step j is drawn from a fresh Philox stream whose
key/counter encode (seed, path_id, k, step), so any single draw can be
regenerated bit-exactly without replaying the path and distinct keys give
independent streams. Workers may therefore integrate paths in any order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class BrownianIncrements:
    """Gaussian increments Delta B_k^j ~ N(0, dt), keyed by (seed, path_id, k, step)."""

    seed: int
    path_id: int
    dt: float

    def increment(self, k: int, step: int) -> float:
        bg = np.random.Philox(key=[self.seed & 0xFFFFFFFFFFFFFFFF, self.path_id],
                              counter=[0, 0, step, k])
        return float(np.random.Generator(bg).standard_normal() * np.sqrt(self.dt))

    def step_increments(self, step: int, n: int) -> np.ndarray:
        """Delta B_k for k = 1..n at the given step, shape (n,)."""
        return np.array([self.increment(k, step) for k in range(1, n + 1)])
