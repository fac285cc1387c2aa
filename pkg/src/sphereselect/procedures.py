"""Fully sequential selection procedures.

Three spherical-region procedures share one skeleton: observe every
survivor, compare a variance-scaled spread statistic of the survivors'
values against a radius that depends on the surviving count, and while
the statistic is outside the radius, drop the system with the smallest
mean and re-check without drawing anything new.  They differ in what they
know about variances:

* DK1: common variance known; statistic over cumulative sums.
* DK2: common variance unknown; a pooled estimate refreshed every stage.
* DK3: variances unknown and unequal; per-system sample counts are paced
  so each system's mean carries roughly equal information, and the
  statistic runs over per-system means.

Two pairwise baselines with triangular continuation regions (KN with
known variances and its unknown-variance original) round out the set.

Systems are numbered 0..k-1.  Ties (equal sample means, or equal pacing
ratios in DK3) resolve to the lowest system id; they have probability
zero under continuous sampling but replayed files may contain them.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .eta import EtaSchedule
from .samplers import Sampler
from .screening import delta_squared, equal_variance_stat

__all__ = [
    "PROCEDURES",
    "ProcedureConfig",
    "RunOutcome",
    "ScreeningState",
    "cascade_screen",
    "run_dk1",
    "run_dk2",
    "run_dk3",
    "run_kn_known",
    "run_kn_unknown",
    "run_procedure",
]

logger = logging.getLogger(__name__)

PROCEDURES = ("DK1", "DK2", "DK3", "KN", "KN-UNK")

_VAR_FLOOR = 1e-300


@dataclass
class ProcedureConfig:
    """Run parameters shared by all procedures.

    ``n0`` is the first-stage sample size: known-variance procedures
    default to 1 (their natural setup), variance-estimating ones to 30.
    ``known_sigma2`` is required by DK1 and KN.  ``schedule`` is required
    by the DK procedures and must match (k, alpha).
    """

    k: int
    delta: float
    alpha: float
    schedule: EtaSchedule | None = None
    n0: int | None = None
    b_z: int = 1
    known_sigma2: float | None = None
    max_total_observations: int = 10**9

    def __post_init__(self) -> None:
        if self.k < 2:
            raise ValueError(f"need k >= 2, got {self.k}")
        if not (self.delta > 0.0 and math.isfinite(self.delta)):
            raise ValueError(f"delta must be finite and > 0, got {self.delta!r}")
        if not (0.0 < self.alpha < 1.0):
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha!r}")
        if self.b_z < 1:
            raise ValueError(f"b_z must be >= 1, got {self.b_z}")
        if self.known_sigma2 is not None and not self.known_sigma2 > 0.0:
            raise ValueError("known_sigma2 must be positive when given")
        if self.schedule is not None:
            if self.schedule.k != self.k or abs(self.schedule.alpha - self.alpha) > 1e-12:
                raise ValueError(
                    f"schedule is for (k={self.schedule.k}, alpha={self.schedule.alpha}), "
                    f"config wants (k={self.k}, alpha={self.alpha})"
                )

    def first_stage_known(self) -> int:
        n0 = 1 if self.n0 is None else int(self.n0)
        if n0 < 1:
            raise ValueError("known-variance procedures need n0 >= 1")
        return n0

    def first_stage_estimating(self) -> int:
        n0 = 30 if self.n0 is None else int(self.n0)
        if n0 < 2:
            raise ValueError("variance-estimating procedures need n0 >= 2")
        return n0

    def _require_schedule(self) -> EtaSchedule:
        if self.schedule is None:
            raise ValueError("this procedure needs a threshold schedule")
        return self.schedule

    def _require_sigma2(self) -> float:
        if self.known_sigma2 is None:
            raise ValueError("this procedure needs known_sigma2")
        return float(self.known_sigma2)


@dataclass
class RunOutcome:
    """Result of one replication: the survivor, the per-system sampling
    effort, and the order in which systems fell."""

    selected: int
    per_system_counts: np.ndarray
    total_observations: int
    elimination_order: list[tuple[int, int, int]]  # (system, level, stage)
    stages: int

    def validate(self, k: int) -> None:
        if len(self.elimination_order) != k - 1:
            raise AssertionError("every run must eliminate exactly k-1 systems")
        if [level for _, level, _ in self.elimination_order] != list(range(1, k)):
            raise AssertionError("elimination levels must run 1..k-1 in order")
        if self.total_observations != int(self.per_system_counts.sum()):
            raise AssertionError("observation accounting mismatch")
        eliminated = {system for system, _, _ in self.elimination_order}
        if self.selected in eliminated or len(eliminated) != k - 1:
            raise AssertionError("survivor bookkeeping mismatch")


@dataclass
class ScreeningState:
    """Surviving systems and their running aggregates, aligned by position.

    ``means`` is used for elimination ranking when present (procedures with
    unequal sample counts); otherwise cumulative sums rank the systems,
    which orders identically when every survivor has the same count.
    """

    ids: np.ndarray
    sums: np.ndarray
    counts: np.ndarray
    means: np.ndarray | None = None
    mean_acc: np.ndarray | None = None  # Welford running means
    m2_acc: np.ndarray | None = None  # Welford sum of squared deviations

    @property
    def size(self) -> int:
        return int(self.ids.size)

    def rank_values(self) -> np.ndarray:
        return self.means if self.means is not None else self.sums

    def remove(self, pos: int) -> int:
        removed = int(self.ids[pos])
        self.ids = np.delete(self.ids, pos)
        self.sums = np.delete(self.sums, pos)
        self.counts = np.delete(self.counts, pos)
        if self.means is not None:
            self.means = np.delete(self.means, pos)
        if self.mean_acc is not None:
            self.mean_acc = np.delete(self.mean_acc, pos)
        if self.m2_acc is not None:
            self.m2_acc = np.delete(self.m2_acc, pos)
        return removed


def cascade_screen(
    state: ScreeningState,
    schedule: EtaSchedule,
    stat_fn,
    threshold_fn,
    *,
    stage: int,
    next_level: int,
) -> list[tuple[int, int, int]]:
    """Repeated screening without new observations.

    While the statistic is at or above the threshold, the system with the
    smallest ranking value leaves (lowest id on ties), and both sides are
    recomputed for the shrunken set.  Stops below threshold or at one
    survivor.  ``stat_fn(state)`` and ``threshold_fn(state, eta)`` see the
    current survivor set.
    """
    eliminations: list[tuple[int, int, int]] = []
    while state.size >= 2:
        eta = schedule.eta(state.size)
        if stat_fn(state) < threshold_fn(state, eta):
            break
        pos = int(np.argmin(state.rank_values()))
        removed = state.remove(pos)
        eliminations.append((removed, next_level + len(eliminations), stage))
    return eliminations


def _floored(value: float) -> float:
    if value <= 0.0:
        logger.warning("degenerate zero variance estimate clamped to %g", _VAR_FLOOR)
        return _VAR_FLOOR
    return value


class _Budget:
    def __init__(self, limit: int):
        self.limit = int(limit)
        self.used = 0

    def spend(self, count: int) -> None:
        self.used += int(count)
        if self.used > self.limit:
            raise RuntimeError(
                f"observation budget exceeded ({self.used} > {self.limit}); "
                "likely a mis-scaled configuration"
            )


def _finish(
    state: ScreeningState,
    counts_all: np.ndarray,
    eliminations: list[tuple[int, int, int]],
    stages: int,
    k: int,
) -> RunOutcome:
    outcome = RunOutcome(
        selected=int(state.ids[0]),
        per_system_counts=counts_all,
        total_observations=int(counts_all.sum()),
        elimination_order=eliminations,
        stages=stages,
        )
    outcome.validate(k)
    return outcome


def run_dk1(config: ProcedureConfig, sampler: Sampler) -> RunOutcome:
    """Spherical-region selection with a known common variance.

    One observation per survivor per stage; the statistic is the centered
    sum of squares of the cumulative sums over sigma^2, and the radius for
    s survivors is (sigma * eta_s / delta_s)^2.
    """
    schedule = config._require_schedule()
    sigma2 = config._require_sigma2()
    k = config.k
    budget = _Budget(config.max_total_observations)
    state = ScreeningState(
        ids=np.arange(k, dtype=np.int64),
        sums=np.zeros(k),
        counts=np.zeros(k, dtype=np.int64),
    )
    counts_all = np.zeros(k, dtype=np.int64)
    eliminations: list[tuple[int, int, int]] = []

    def draw_round(count: int) -> None:
        for pos in range(state.size):
            system = int(state.ids[pos])
            state.sums[pos] += float(sampler.draw(system, count).sum())
            counts_all[system] += count
        state.counts += count
        budget.spend(count * state.size)

    def stat(st: ScreeningState) -> float:
        return equal_variance_stat(st.sums, sigma2)

    def threshold(st: ScreeningState, eta: float) -> float:
        return sigma2 * eta * eta / delta_squared(config.delta, st.size)

    n = config.first_stage_known()
    draw_round(n)
    while True:
        eliminations += cascade_screen(
            state, schedule, stat, threshold, stage=n, next_level=len(eliminations) + 1
        )
        if state.size == 1:
            return _finish(state, counts_all, eliminations, n, k)
        draw_round(1)
        n += 1


def run_dk2(config: ProcedureConfig, sampler: Sampler) -> RunOutcome:
    """DK1 with the common variance replaced by the pooled estimate over
    the survivors, refreshed after every stage's observations."""
    schedule = config._require_schedule()
    k = config.k
    budget = _Budget(config.max_total_observations)
    state = ScreeningState(
        ids=np.arange(k, dtype=np.int64),
        sums=np.zeros(k),
        counts=np.zeros(k, dtype=np.int64),
        mean_acc=np.zeros(k),
        m2_acc=np.zeros(k),
    )
    counts_all = np.zeros(k, dtype=np.int64)
    eliminations: list[tuple[int, int, int]] = []
    n = 0

    def observe_stage() -> None:
        nonlocal n
        n += 1
        for pos in range(state.size):
            system = int(state.ids[pos])
            x = float(sampler.draw(system, 1)[0])
            state.sums[pos] += x
            delta = x - state.mean_acc[pos]
            state.mean_acc[pos] += delta / n
            state.m2_acc[pos] += delta * (x - state.mean_acc[pos])
            counts_all[system] += 1
        state.counts += 1
        budget.spend(state.size)

    def pooled(st: ScreeningState) -> float:
        return float(st.m2_acc.mean()) / (n - 1)

    def stat(st: ScreeningState) -> float:
        return equal_variance_stat(st.sums, _floored(pooled(st)))

    def threshold(st: ScreeningState, eta: float) -> float:
        return pooled(st) * eta * eta / delta_squared(config.delta, st.size)

    for _ in range(config.first_stage_estimating()):
        observe_stage()
    while True:
        eliminations += cascade_screen(
            state, schedule, stat, threshold, stage=n, next_level=len(eliminations) + 1
        )
        if state.size == 1:
            return _finish(state, counts_all, eliminations, n, k)
        observe_stage()


def run_dk3(config: ProcedureConfig, sampler: Sampler) -> RunOutcome:
    """Unknown, unequal variances: per-system counts are paced toward
    n_i proportional to sigma_i^2, the statistic runs over per-system
    means with the information-rate estimate lambda^2 = sum var / sum n,
    and each stage tops systems up to ceil(var_i * (n_z + B_z) / var_z)
    observations, z being the survivor with the smallest n/var."""
    schedule = config._require_schedule()
    k = config.k
    b_z = config.b_z
    budget = _Budget(config.max_total_observations)
    state = ScreeningState(
        ids=np.arange(k, dtype=np.int64),
        sums=np.zeros(k),
        counts=np.zeros(k, dtype=np.int64),
        means=np.zeros(k),
        mean_acc=np.zeros(k),
        m2_acc=np.zeros(k),
    )
    counts_all = np.zeros(k, dtype=np.int64)
    eliminations: list[tuple[int, int, int]] = []

    def observe(pos: int, count: int) -> None:
        system = int(state.ids[pos])
        values = sampler.draw(system, count)
        for x in values:
            x = float(x)
            state.counts[pos] += 1
            delta = x - state.mean_acc[pos]
            state.mean_acc[pos] += delta / state.counts[pos]
            state.m2_acc[pos] += delta * (x - state.mean_acc[pos])
        state.sums[pos] += float(values.sum())
        state.means[pos] = state.mean_acc[pos]
        counts_all[system] += count
        budget.spend(count)

    def variances(st: ScreeningState) -> np.ndarray:
        return st.m2_acc / (st.counts - 1)

    def lambda2(st: ScreeningState) -> float:
        return float(variances(st).sum() / st.counts.sum())

    def stat(st: ScreeningState) -> float:
        return equal_variance_stat(st.means, _floored(lambda2(st)))

    def threshold(st: ScreeningState, eta: float) -> float:
        return lambda2(st) * eta * eta / delta_squared(config.delta, st.size)

    n0 = config.first_stage_estimating()
    for pos in range(k):
        observe(pos, n0)
    n = n0
    while True:
        eliminations += cascade_screen(
            state, schedule, stat, threshold, stage=n, next_level=len(eliminations) + 1
        )
        if state.size == 1:
            return _finish(state, counts_all, eliminations, n, k)
        var = variances(state)
        var_safe = np.maximum(var, _VAR_FLOOR)
        z = int(np.argmin(state.counts / var_safe))
        quota = np.ceil(var * ((state.counts[z] + b_z) / var_safe[z])).astype(np.int64)
        for pos in range(state.size):
            short = int(quota[pos] - state.counts[pos])
            if short > 0:
                observe(pos, short)
        n += 1


def _kn_levels(
    eliminated: list[int], sums: np.ndarray, next_level: int, stage: int
) -> list[tuple[int, int, int]]:
    # Simultaneous eliminations get levels in ascending order of their
    # cumulative sums, lowest id first on ties.
    ranked = sorted(eliminated, key=lambda i: (sums[i], i))
    return [(system, next_level + j, stage) for j, system in enumerate(ranked)]


def run_kn_known(config: ProcedureConfig, sampler: Sampler) -> RunOutcome:
    """Pairwise fully sequential baseline with known common variance.

    Triangular continuation regions: system i is eliminated at stage n if
    some survivor l has sum_i - sum_l < -W(n), where
    W(n) = max(0, h^2 sigma^2 / delta - delta n / 2) and
    h^2 = -2 ln(2 alpha / (k - 1)).  With a common W this reduces to
    comparing each survivor against the current leader.
    """
    sigma2 = config._require_sigma2()
    k = config.k
    h2 = 2.0 * (-math.log(2.0 * config.alpha / (k - 1)))
    slab = h2 * sigma2 / config.delta
    budget = _Budget(config.max_total_observations)
    alive = np.arange(k, dtype=np.int64)
    sums_all = np.zeros(k)
    counts_all = np.zeros(k, dtype=np.int64)
    eliminations: list[tuple[int, int, int]] = []

    def draw_round(count: int) -> None:
        for system in alive:
            sums_all[system] += float(sampler.draw(int(system), count).sum())
            counts_all[system] += count
        budget.spend(count * alive.size)

    n = config.first_stage_known()
    draw_round(n)
    while True:
        w = max(0.0, slab - 0.5 * config.delta * n)
        sums = sums_all[alive]
        if w == 0.0:
            keep = int(alive[int(np.argmax(sums))])
            dropped = [int(s) for s in alive if s != keep]
        else:
            cut = sums.max() - w
            dropped = [int(s) for s in alive[sums < cut]]
        if dropped:
            eliminations += _kn_levels(dropped, sums_all, len(eliminations) + 1, n)
            alive = alive[~np.isin(alive, dropped)]
        if alive.size == 1:
            state = ScreeningState(ids=alive, sums=sums_all[alive], counts=counts_all[alive])
            return _finish(state, counts_all, eliminations, n, k)
        draw_round(1)
        n += 1


def run_kn_unknown(config: ProcedureConfig, sampler: Sampler) -> RunOutcome:
    """The unknown-variance pairwise baseline (c = 1).

    First-stage variances of the pairwise differences set per-pair slabs:
    W_il(n) = max(0, h^2 S_il^2 / (2 delta) - delta n / 2) with
    h^2 = 2 eta (n0 - 1) and eta = ((2 alpha/(k-1))^(-2/(n0-1)) - 1) / 2.
    """
    k = config.k
    n0 = config.first_stage_estimating()
    eta = 0.5 * ((2.0 * config.alpha / (k - 1)) ** (-2.0 / (n0 - 1)) - 1.0)
    h2 = 2.0 * eta * (n0 - 1)
    budget = _Budget(config.max_total_observations)

    first = np.empty((k, n0))
    for system in range(k):
        first[system] = sampler.draw(system, n0)
    budget.spend(k * n0)
    centered = first - first.mean(axis=1, keepdims=True)
    cov = centered @ centered.T / (n0 - 1)
    diag = np.diag(cov)
    pair_s2 = diag[:, None] + diag[None, :] - 2.0 * cov
    slab = h2 * pair_s2 / (2.0 * config.delta)

    alive = np.arange(k, dtype=np.int64)
    sums_all = first.sum(axis=1)
    counts_all = np.full(k, n0, dtype=np.int64)
    eliminations: list[tuple[int, int, int]] = []

    n = n0
    while True:
        w = np.maximum(0.0, slab[np.ix_(alive, alive)] - 0.5 * config.delta * n)
        sums = sums_all[alive]
        if not w.any():
            # all regions closed: only the leader may stay
            mask = np.ones(alive.size, dtype=bool)
            mask[int(np.argmax(sums))] = False
        else:
            # survivor i falls if sums_i < max_l (sums_l - W_il); the diagonal
            # is harmless since W_ii = 0 gives sums_i < sums_i.
            cut = (sums[None, :] - w).max(axis=1)
            mask = sums < cut
        dropped = [int(s) for s in alive[mask]]
        if dropped:
            eliminations += _kn_levels(dropped, sums_all, len(eliminations) + 1, n)
            alive = alive[~mask]
        if alive.size == 1:
            state = ScreeningState(ids=alive, sums=sums_all[alive], counts=counts_all[alive])
            return _finish(state, counts_all, eliminations, n, k)
        for system in alive:
            sums_all[system] += float(sampler.draw(int(system), 1)[0])
            counts_all[system] += 1
        budget.spend(alive.size)
        n += 1


_RUNNERS = {
    "DK1": run_dk1,
    "DK2": run_dk2,
    "DK3": run_dk3,
    "KN": run_kn_known,
    "KN-UNK": run_kn_unknown,
}


def run_procedure(name: str, config: ProcedureConfig, sampler: Sampler) -> RunOutcome:
    """Dispatch by procedure name (one of PROCEDURES)."""
    try:
        runner = _RUNNERS[name]
    except KeyError:
        raise ValueError(f"unknown procedure {name!r}; choose from {PROCEDURES}") from None
    return runner(config, sampler)
