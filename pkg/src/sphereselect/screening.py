"""Screening statistics and running moments.

The elimination decision compares a variance-scaled squared spread of the
surviving systems' values against a threshold radius.  With equal
variances the statistic is the centered sum of squares over sigma^2; with
per-system variances it is the quadratic form of pairwise differences
under the inverse difference covariance, evaluated in O(s) through a
Sherman-Morrison identity.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = [
    "delta_squared",
    "equal_variance_stat",
    "general_variance_stat",
    "weighted_centering",
    "pooled_variance",
    "lambda_hat_squared",
    "sample_mean_and_variance",
    "RunningMoments",
]


def delta_squared(delta: float, size: int) -> float:
    """Size-adjusted squared indifference parameter: delta^2 (s-1)/s."""
    delta = float(delta)
    size = int(size)
    if not math.isfinite(delta) or delta <= 0.0:
        raise ValueError(f"delta must be finite and > 0, got {delta!r}")
    if size < 2:
        raise ValueError(f"need at least 2 surviving systems, got {size}")
    return delta * delta * (size - 1) / size


def _check_values(values, min_len: int = 2) -> np.ndarray:
    x = np.asarray(values, dtype=np.float64)
    if x.ndim != 1 or x.size < min_len:
        raise ValueError(f"need a 1-d vector of at least {min_len} values")
    if not np.all(np.isfinite(x)):
        raise ValueError("values must be finite")
    return x


def _check_variances(variances, size: int) -> np.ndarray:
    v = np.asarray(variances, dtype=np.float64)
    if v.shape != (size,):
        raise ValueError(f"variance vector must have length {size}, got shape {v.shape}")
    if not np.all(np.isfinite(v)) or np.any(v <= 0.0):
        raise ValueError("variances must be finite and > 0")
    return v


def equal_variance_stat(values, sigma2: float) -> float:
    """Centered sum of squares over a common variance:
    (1/sigma^2) sum_i (x_i - xbar)^2."""
    x = _check_values(values)
    sigma2 = float(sigma2)
    if not math.isfinite(sigma2) or sigma2 <= 0.0:
        raise ValueError(f"sigma2 must be finite and > 0, got {sigma2!r}")
    centered = x - x.mean()
    return float(centered @ centered / sigma2)


def general_variance_stat(values, variances) -> float:
    """Quadratic form of the pairwise differences against their inverse
    covariance, for independent systems with per-system variances.

    The difference covariance is diag(v_1..v_{s-1}) + v_s * ones, inverted
    in closed form (Sherman-Morrison), so the evaluation is O(s).
    """
    x = _check_values(values)
    v = _check_variances(variances, x.size)
    d = x[:-1] - x[-1]
    inv = 1.0 / v[:-1]
    quad = float((d * d * inv).sum())
    cross = float((d * inv).sum())
    denom = 1.0 + v[-1] * float(inv.sum())
    return quad - v[-1] * cross * cross / denom


def weighted_centering(values, variances) -> np.ndarray:
    """Subtract the 1/variance-weighted mean, landing the vector on the
    plane sum_i y_i / v_i = 0.  Equal variances reduce to ordinary
    mean-centering.  Idempotent, and leaves the screening statistic
    unchanged."""
    x = _check_values(values)
    v = _check_variances(variances, x.size)
    weights = 1.0 / v
    level = float((x * weights).sum() / weights.sum())
    return x - level


def pooled_variance(sample_variances) -> float:
    """Arithmetic mean of per-system sample variances."""
    v = np.asarray(sample_variances, dtype=np.float64)
    if v.ndim != 1 or v.size < 1:
        raise ValueError("need at least one sample variance")
    if not np.all(np.isfinite(v)) or np.any(v <= 0.0):
        raise ValueError("sample variances must be finite and > 0")
    return float(v.mean())


def lambda_hat_squared(sample_variances, counts) -> float:
    """Common variance rate of per-system means under paced sampling:
    sum_i variance_i / sum_i n_i."""
    v = np.asarray(sample_variances, dtype=np.float64)
    n = np.asarray(counts)
    if v.ndim != 1 or v.size < 1 or n.shape != v.shape:
        raise ValueError("variance and count vectors must be 1-d and the same length")
    if not np.all(np.isfinite(v)) or np.any(v <= 0.0):
        raise ValueError("sample variances must be finite and > 0")
    if np.any(n < 1):
        raise ValueError("counts must be >= 1")
    return float(v.sum() / n.astype(np.float64).sum())


class RunningMoments:
    """Streaming mean and unbiased variance (Welford's recurrence).

    A stream of push() calls reproduces the batch result to float
    round-off, which lets the procedures update variance estimates at
    every stage without revisiting old observations.
    """

    __slots__ = ("count", "mean", "_m2")

    def __init__(self) -> None:
        self.count = 0
        self.mean = 0.0
        self._m2 = 0.0

    def push(self, x: float) -> None:
        self.count += 1
        delta = x - self.mean
        self.mean += delta / self.count
        self._m2 += delta * (x - self.mean)

    def push_many(self, xs) -> None:
        for x in np.asarray(xs, dtype=np.float64).ravel():
            self.push(float(x))

    @property
    def variance(self) -> float:
        if self.count < 2:
            raise ValueError("sample variance needs at least 2 observations")
        return self._m2 / (self.count - 1)


def sample_mean_and_variance(observations) -> tuple[float, float]:
    """Mean and unbiased sample variance of a sequence (length >= 2)."""
    obs = np.asarray(observations, dtype=np.float64).ravel()
    if obs.size < 2:
        raise ValueError("sample variance needs at least 2 observations")
    acc = RunningMoments()
    acc.push_many(obs)
    return acc.mean, acc.variance
