"""Seeding contract and mergeable Monte Carlo statistics.

Every random draw in the package comes from a Philox generator keyed by a
``(seed, *stream)`` pair, so replicate ``i`` of an experiment always sees the
same numbers no matter how the replicates are scheduled.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def generator(seed: int, *stream: int) -> np.random.Generator:
    """Counter-based generator for ``(seed, stream...)``."""
    if seed < 0:
        raise ValueError("seed must be a non-negative integer")
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(s) for s in stream))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class MomentSums:
    """Sufficient statistics (count, sum, sum of squares) of a sample.

    Batches computed independently combine with ``+``; the merge is exact and
    order independent up to floating point associativity, which callers keep
    fixed by merging in batch order.
    """

    count: int = 0
    total: float = 0.0
    total_sq: float = 0.0

    @classmethod
    def of(cls, values) -> "MomentSums":
        v = np.asarray(values, dtype=float)
        return cls(int(v.size), float(v.sum()), float(np.dot(v.ravel(), v.ravel())))

    def __add__(self, other: "MomentSums") -> "MomentSums":
        return MomentSums(self.count + other.count, self.total + other.total,
                          self.total_sq + other.total_sq)

    @property
    def mean(self) -> float:
        return self.total / self.count if self.count else float("nan")

    @property
    def variance(self) -> float:
        """Unbiased sample variance."""
        if self.count < 2:
            return float("nan")
        m = self.mean
        return max(self.total_sq - self.count * m * m, 0.0) / (self.count - 1)

    @property
    def sem(self) -> float:
        """Standard error of the mean."""
        if self.count < 2:
            return float("nan")
        return float(np.sqrt(self.variance / self.count))


def batch_sizes(total: int, batch: int) -> list[int]:
    if total < 1:
        raise ValueError("total must be positive")
    full, rest = divmod(total, batch)
    return [batch] * full + ([rest] if rest else [])
