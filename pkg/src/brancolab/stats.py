"""Mergeable Monte Carlo accumulators and panel z-score helpers."""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass, field

import numpy as np

__all__ = ["RunningStats", "VectorStats", "bonferroni_z", "combined_se"]


@dataclass
class RunningStats:
    """Welford accumulator: count, mean, and sum of squared deviations."""

    count: int = 0
    mean: float = 0.0
    m2: float = 0.0

    def add(self, x: float) -> None:
        self.count += 1
        delta = x - self.mean
        self.mean += delta / self.count
        self.m2 += delta * (x - self.mean)

    def merge(self, other: "RunningStats") -> None:
        if other.count == 0:
            return
        if self.count == 0:
            self.count, self.mean, self.m2 = other.count, other.mean, other.m2
            return
        total = self.count + other.count
        delta = other.mean - self.mean
        self.mean += delta * other.count / total
        self.m2 += other.m2 + delta * delta * self.count * other.count / total
        self.count = total

    @property
    def variance(self) -> float:
        return self.m2 / (self.count - 1) if self.count > 1 else 0.0

    @property
    def se(self) -> float:
        return math.sqrt(self.variance / self.count) if self.count > 0 else 0.0


class VectorStats:
    """Componentwise Welford accumulator over a fixed-length panel.

    ``add_batch`` folds in a (replicates, dim) block; ``merge`` combines two
    accumulators exactly as if their samples had been concatenated (up to
    floating-point reassociation).
    """

    def __init__(self, dim: int):
        self.dim = dim
        self.count = 0
        self.mean = np.zeros(dim)
        self.m2 = np.zeros(dim)

    def add_batch(self, block: np.ndarray) -> None:
        block = np.asarray(block, dtype=float)
        if block.ndim == 1:
            block = block[None, :]
        n_b = block.shape[0]
        if n_b == 0:
            return
        mean_b = block.mean(axis=0)
        m2_b = ((block - mean_b) ** 2).sum(axis=0)
        self._combine(n_b, mean_b, m2_b)

    def merge(self, other: "VectorStats") -> None:
        if other.count:
            self._combine(other.count, other.mean, other.m2)

    def _combine(self, n_b: int, mean_b: np.ndarray, m2_b: np.ndarray) -> None:
        if self.count == 0:
            self.count = n_b
            self.mean = mean_b.copy()
            self.m2 = m2_b.copy()
            return
        total = self.count + n_b
        delta = mean_b - self.mean
        self.mean = self.mean + delta * (n_b / total)
        self.m2 = self.m2 + m2_b + delta * delta * (self.count * n_b / total)
        self.count = total

    @property
    def variance(self) -> np.ndarray:
        if self.count > 1:
            return self.m2 / (self.count - 1)
        return np.zeros(self.dim)

    @property
    def se(self) -> np.ndarray:
        if self.count > 0:
            return np.sqrt(self.variance / self.count)
        return np.zeros(self.dim)


def bonferroni_z(panel_size: int, base_z: float = 3.0) -> float:
    """Two-sided |z| threshold keeping the panel-wide level of a base_z test.

    The familywise false-alarm probability of the panel equals that of a
    single two-sided base_z test.
    """
    if panel_size < 1:
        raise ValueError("panel_size must be >= 1")
    nd = statistics.NormalDist()
    alpha = 2.0 * (1.0 - nd.cdf(base_z))
    return nd.inv_cdf(1.0 - alpha / panel_size / 2.0)


def combined_se(*ses: float) -> float:
    return math.sqrt(sum(s * s for s in ses))
