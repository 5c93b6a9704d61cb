"""Action spaces."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Discrete:
    n: int

    @property
    def is_discrete(self) -> bool:
        return True

    def canonicalize(self, action) -> int:
        a = int(action)
        if not 0 <= a < self.n:
            raise ValueError(f"action {action!r} outside Discrete({self.n})")
        return a


@dataclass(frozen=True)
class Box:
    """Continuous actions; the environment consumes binary32 values."""

    dim: int
    low: float = -1.0
    high: float = 1.0

    @property
    def is_discrete(self) -> bool:
        return False

    def canonicalize(self, action) -> np.ndarray:
        a = np.asarray(action, dtype=np.float64).reshape(-1)
        if a.size != self.dim:
            raise ValueError(f"action has {a.size} components, expected {self.dim}")
        return a.astype(np.float32).astype(np.float64)


ActionSpace = Discrete | Box
