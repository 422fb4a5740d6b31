"""Variance diagnostics: batch-means standard error and empirical variance."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class BatchMeansConfig:
    """Batch count rule: ``"sqrt"`` uses ``floor(sqrt(n))`` batches, an
    integer ``batches`` fixes the count."""

    batches: int | None = None

    def layout(self, n: int) -> tuple[int, int]:
        """Return ``(batch_count, batch_size)`` for a series of length ``n``."""
        b = math.isqrt(n) if self.batches is None else int(self.batches)
        if b < 2:
            raise ConfigError(f"need at least 2 batches, got {b}")
        m = n // b
        if m < 1:
            raise ConfigError(f"{b} batches do not fit in a series of length {n}")
        return b, m


DEFAULT_BATCH_MEANS = BatchMeansConfig()


def batch_means_se(v, cfg: BatchMeansConfig = DEFAULT_BATCH_MEANS) -> float:
    """Batch-means estimate of the Monte Carlo standard error of ``mean(v)``.

    The ``n - b*m`` leftover values are dropped from the front of the series,
    then ``sd(batch means) / sqrt(b)`` is returned (``sd`` with divisor ``b-1``).
    """
    v = np.asarray(v, dtype=float).ravel()
    n = v.size
    if n < 4:
        raise ConfigError(f"batch means needs n >= 4, got {n}")
    b, m = cfg.layout(n)
    means = v[n - b * m :].reshape(b, m).mean(axis=1)
    return float(np.std(means, ddof=1) / math.sqrt(b))


def empirical_variance(v) -> float:
    v = np.asarray(v, dtype=float).ravel()
    if v.size < 2:
        raise ConfigError(f"empirical variance needs n >= 2, got {v.size}")
    return float(np.var(v, ddof=1))


class VarianceRatio(NamedTuple):
    ratio: float
    degenerate: bool  # method variance was exactly zero


def variance_reduction_factor(baseline, method) -> VarianceRatio:
    """``var(baseline) / var(method)`` across replications."""
    baseline = np.asarray(baseline, dtype=float).ravel()
    method = np.asarray(method, dtype=float).ravel()
    if baseline.size != method.size or baseline.size < 2:
        raise ConfigError("need two estimate vectors of equal length >= 2")
    vm = empirical_variance(method)
    if vm == 0.0:
        return VarianceRatio(math.inf, True)
    return VarianceRatio(empirical_variance(baseline) / vm, False)
