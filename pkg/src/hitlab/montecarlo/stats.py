"""Streaming statistics and result containers for Monte Carlo output."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

Z95 = 1.96


@dataclass(frozen=True)
class Estimate:
    """Sample mean with its standard error.

    ``systematic`` is an optional bias bound (same units as ``mean``) that the
    estimator could not remove; it is reported separately and never folded
    into ``stderr``.
    """

    mean: float
    stderr: float
    n: int
    seed: Optional[int] = None
    systematic: float = 0.0

    @property
    def ci95(self) -> tuple[float, float]:
        return (self.mean - Z95 * self.stderr, self.mean + Z95 * self.stderr)

    def z_score(self, reference: float) -> float:
        if self.stderr == 0.0:
            return 0.0 if self.mean == reference else math.copysign(math.inf, self.mean - reference)
        return (self.mean - reference) / self.stderr

    def scaled(self, factor: float) -> "Estimate":
        return replace(self, mean=self.mean * factor, stderr=self.stderr * abs(factor),
                       systematic=self.systematic * abs(factor))

    def to_json(self) -> dict:
        lo, hi = self.ci95
        out = {"mean": self.mean, "stderr": self.stderr, "n": self.n, "ci95": [lo, hi], "seed": self.seed}
        if self.systematic:
            out["systematic"] = self.systematic
        return out


@dataclass
class Accumulator:
    """Chan/Welford running mean and sum of squared deviations."""

    n: int = 0
    mean: float = 0.0
    m2: float = 0.0

    def add(self, values) -> "Accumulator":
        values = np.asarray(values, dtype=float).ravel()
        if values.size == 0:
            return self
        other = Accumulator(values.size, float(values.mean()), float(((values - values.mean()) ** 2).sum()))
        merged = self.merge(other)
        self.n, self.mean, self.m2 = merged.n, merged.mean, merged.m2
        return self

    def merge(self, other: "Accumulator") -> "Accumulator":
        if other.n == 0:
            return Accumulator(self.n, self.mean, self.m2)
        if self.n == 0:
            return Accumulator(other.n, other.mean, other.m2)
        n = self.n + other.n
        delta = other.mean - self.mean
        mean = self.mean + delta * other.n / n
        m2 = self.m2 + other.m2 + delta * delta * self.n * other.n / n
        return Accumulator(n, mean, m2)

    @property
    def variance(self) -> float:
        return self.m2 / (self.n - 1) if self.n > 1 else 0.0

    def estimate(self, seed: Optional[int] = None) -> Estimate:
        stderr = math.sqrt(self.variance / self.n) if self.n > 0 else math.inf
        return Estimate(self.mean, stderr, self.n, seed)


def estimate_of(values, seed: Optional[int] = None) -> Estimate:
    return Accumulator().add(values).estimate(seed)


@dataclass(frozen=True)
class Histogram:
    """Binned estimate with per-bin standard errors.

    ``values`` is a probability mass per bin unless ``meta['kind']`` says
    otherwise (for example ``"density"`` for time histograms).
    """

    edges: np.ndarray
    values: np.ndarray
    stderr: np.ndarray
    n: int
    seed: Optional[int] = None
    meta: dict = field(default_factory=dict)

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)

    def with_meta(self, **extra) -> "Histogram":
        return replace(self, meta={**self.meta, **extra})

    def to_json(self) -> dict:
        return {"edges": [float(v) for v in self.edges], "values": [float(v) for v in self.values],
                "stderr": [float(v) for v in self.stderr], "n": self.n, "seed": self.seed,
                "meta": self.meta}
