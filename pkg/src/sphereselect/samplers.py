"""Observation sources for the selection procedures.

A sampler hands out observations one system at a time.  The Gaussian
sampler draws from counter-based streams keyed by (seed, replication,
system), so a replication is reproducible regardless of the order in
which systems are polled; the replay sampler feeds back a recorded file
byte-for-byte, which makes regression runs exact.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Protocol, runtime_checkable

import numpy as np

from . import rng

__all__ = [
    "Sampler",
    "GaussianSampler",
    "ReplaySampler",
    "RecordingSampler",
    "write_observations_csv",
    "read_observations_csv",
]


@runtime_checkable
class Sampler(Protocol):
    def draw(self, system: int, count: int) -> np.ndarray:
        """Next ``count`` observations of ``system``, in stream order."""
        ...


class GaussianSampler:
    """Independent normal streams, one per system.

    Observation j of system i is mu_i + sd_i * z(seed, replication, i, j);
    the draw is a pure function of those integers, so scale tests and the
    batched experiment engine see exactly the same data.
    """

    def __init__(self, means, variances, seed: int, replication: int = 0):
        self.means = np.asarray(means, dtype=np.float64)
        variances = np.asarray(variances, dtype=np.float64)
        if self.means.shape != variances.shape or self.means.ndim != 1:
            raise ValueError("means and variances must be 1-d vectors of equal length")
        if np.any(variances <= 0.0):
            raise ValueError("variances must be positive")
        self.sds = np.sqrt(variances)
        self.seed = int(seed)
        self.replication = int(replication)
        self._keys = [
            rng.derive_key(self.seed, self.replication, system)
            for system in range(self.means.size)
        ]
        self._cursor = np.zeros(self.means.size, dtype=np.int64)

    def draw(self, system: int, count: int) -> np.ndarray:
        start = int(self._cursor[system])
        self._cursor[system] = start + count
        z = rng.normals(self._keys[system], start, count)
        return self.means[system] + self.sds[system] * z


class ReplaySampler:
    """Feeds back pre-recorded observations; raises once a stream runs dry."""

    def __init__(self, observations: dict[int, np.ndarray]):
        self._obs = {int(s): np.asarray(v, dtype=np.float64) for s, v in observations.items()}
        self._cursor = {s: 0 for s in self._obs}

    def draw(self, system: int, count: int) -> np.ndarray:
        system = int(system)
        if system not in self._obs:
            raise ValueError(f"no recorded observations for system {system}")
        start = self._cursor[system]
        stop = start + count
        stream = self._obs[system]
        if stop > stream.size:
            raise ValueError(
                f"replay exhausted for system {system}: "
                f"wanted {stop} observations, recorded {stream.size}"
            )
        self._cursor[system] = stop
        return stream[start:stop].copy()


class RecordingSampler:
    """Wraps another sampler and keeps everything it hands out."""

    def __init__(self, inner: Sampler):
        self._inner = inner
        self._records: dict[int, list[np.ndarray]] = {}

    def draw(self, system: int, count: int) -> np.ndarray:
        values = self._inner.draw(system, count)
        self._records.setdefault(int(system), []).append(np.asarray(values, dtype=np.float64))
        return values

    def observations(self) -> dict[int, np.ndarray]:
        return {
            system: np.concatenate(chunks) if chunks else np.empty(0)
            for system, chunks in sorted(self._records.items())
        }


def write_observations_csv(path: str | Path, observations: dict[int, np.ndarray]) -> None:
    """Rows of ``system_id,index,value``; values written with repr so the
    round trip is bit-exact."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["system_id", "index", "value"])
        for system in sorted(observations):
            for index, value in enumerate(np.asarray(observations[system], dtype=np.float64)):
                writer.writerow([system, index, repr(float(value))])


def read_observations_csv(path: str | Path) -> dict[int, np.ndarray]:
    path = Path(path)
    collected: dict[int, dict[int, float]] = {}
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["system_id", "index", "value"]:
            raise ValueError(f"{path} is not an observation file")
        for row in reader:
            if not row:
                continue
            system, index, value = int(row[0]), int(row[1]), float(row[2])
            collected.setdefault(system, {})[index] = value
    out: dict[int, np.ndarray] = {}
    for system, by_index in collected.items():
        size = max(by_index) + 1
        if len(by_index) != size:
            raise ValueError(f"observation indices for system {system} have gaps")
        stream = np.empty(size)
        for index, value in by_index.items():
            stream[index] = value
        out[system] = stream
    return out
