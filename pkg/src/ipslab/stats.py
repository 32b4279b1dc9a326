"""Mergeable Monte-Carlo accumulators."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass
class Moments:
    """Count, sum and sum of squares of (possibly vector-valued) samples.

    Merging is associative; merging blocks in a fixed order gives
    bit-identical totals whatever the number of workers.
    """

    count: int = 0
    total: np.ndarray | float = 0.0
    sumsq: np.ndarray | float = 0.0

    @classmethod
    def of(cls, samples: np.ndarray, axis: int = 0) -> "Moments":
        samples = np.asarray(samples, dtype=np.float64)
        return cls(samples.shape[axis], samples.sum(axis=axis), (samples * samples).sum(axis=axis))

    def merge(self, other: "Moments") -> "Moments":
        return Moments(self.count + other.count, self.total + other.total, self.sumsq + other.sumsq)

    @property
    def mean(self):
        return self.total / self.count if self.count else np.nan * np.asarray(self.total)

    @property
    def var(self):
        if self.count < 2:
            return np.zeros_like(np.asarray(self.total, dtype=float))
        m = self.mean
        v = (self.sumsq - self.count * m * m) / (self.count - 1)
        return np.maximum(v, 0.0)

    @property
    def se(self):
        if self.count == 0:
            return np.nan * np.asarray(self.total)
        return np.sqrt(self.var / self.count)


def z_score(a: float, se_a: float, b: float, se_b: float) -> float:
    """``|a - b| / sqrt(se_a^2 + se_b^2)``.

    With no sampling error on either side the score is 0 when the values
    agree to rounding (1e-12 relative) and infinite otherwise.
    """
    diff = abs(a - b)
    den = math.hypot(se_a, se_b)
    if den == 0.0:
        return 0.0 if diff <= 1e-12 * max(1.0, abs(a), abs(b)) else math.inf
    return diff / den


def merge_all(parts):
    parts = list(parts)
    out = parts[0]
    for p in parts[1:]:
        out = out.merge(p)
    return out
