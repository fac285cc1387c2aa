"""Vectorized macro-replication engine.

Runs a block of independent replications of one procedure in lockstep.
State lives in (replication x survivor) arrays padded to a common width:
each stage draws observations for every live entry in one vectorized pass
over the counter-based streams, screens all replications at once, and
cascades eliminations only over the rows that exceeded their threshold.
Row aggregates (sums, squared sums, variance totals) are rebuilt once per
stage and adjusted incrementally as cascade victims drop out, so a
cascade iteration costs O(active rows x width) for the argmin and O(rows)
for everything else.  Finished rows retire as they occur and survivor
columns repack once half of them are dead, which keeps the long tail (a
few survivors dueling for hundreds of stages) cheap.

Observation j of system i in replication r is the same pure function of
(seed, r, i, j) that the sequential samplers evaluate, so a replication
simulated here reproduces a one-at-a-time run of the same procedure.
Outcomes are reduced to what experiment summaries need: winner, sampling
effort, stage count, and the level at which the true best system fell (if
it did).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rng
from .procedures import ProcedureConfig
from .screening import delta_squared

__all__ = ["BatchOutcome", "run_batch"]

_VAR_FLOOR = 1e-300


@dataclass
class BatchOutcome:
    selected: np.ndarray
    total_obs: np.ndarray
    stages: np.ndarray
    best_level: np.ndarray  # -1 when the best system survived

    @staticmethod
    def empty(count: int) -> "BatchOutcome":
        return BatchOutcome(
            selected=np.full(count, -1, dtype=np.int64),
            total_obs=np.zeros(count, dtype=np.int64),
            stages=np.zeros(count, dtype=np.int64),
            best_level=np.full(count, -1, dtype=np.int64),
        )


class _Pool:
    """Active replications with padded survivor columns.

    Grids registered in ``grids`` are filtered on row retirement and
    repacked with the survivor columns; arrays in ``row_data`` are per-row
    scalars filtered on retirement only.
    """

    def __init__(self, means: np.ndarray, sds: np.ndarray, seed: int, rep_start: int, count: int):
        k = means.size
        self.k = k
        self.rep_pos = np.arange(count, dtype=np.int64)  # row -> outcome slot
        reps = np.arange(rep_start, rep_start + count, dtype=np.uint64)
        self.grids: dict[str, np.ndarray] = {
            "keys": rng.derive_key_grid(seed, reps, np.arange(k, dtype=np.uint64)),
            "ids": np.tile(np.arange(k, dtype=np.int64), (count, 1)),
            "alive": np.ones((count, k), dtype=bool),
            "mu": np.tile(np.asarray(means, dtype=np.float64), (count, 1)),
            "sd": np.tile(np.asarray(sds, dtype=np.float64), (count, 1)),
        }
        self.row_data: dict[str, np.ndarray] = {
            "sizes": np.full(count, k, dtype=np.int64),
            "total": np.zeros(count, dtype=np.int64),
        }

    def __getattr__(self, name: str) -> np.ndarray:
        for store in ("grids", "row_data"):
            d = self.__dict__.get(store)
            if d is not None and name in d:
                return d[name]
        raise AttributeError(name)

    @property
    def rows(self) -> int:
        return self.rep_pos.size

    @property
    def width(self) -> int:
        return self.grids["ids"].shape[1]

    def add_grid(self, name: str, value: np.ndarray) -> None:
        self.grids[name] = value

    def add_rows(self, name: str, value: np.ndarray) -> None:
        self.row_data[name] = value

    def retire(self, outcome: BatchOutcome, stage: int) -> bool:
        """Record and drop rows whose survivor set is a singleton."""
        finished = self.row_data["sizes"] == 1
        rows = np.flatnonzero(finished)
        if rows.size == 0:
            return False
        alive = self.grids["alive"]
        winner_col = np.argmax(alive[rows], axis=1)
        slots = self.rep_pos[rows]
        outcome.selected[slots] = self.grids["ids"][rows, winner_col]
        outcome.total_obs[slots] = self.row_data["total"][rows]
        outcome.stages[slots] = stage
        keep = ~finished
        self.rep_pos = self.rep_pos[keep]
        for name, value in self.row_data.items():
            self.row_data[name] = value[keep]
        for name, value in self.grids.items():
            self.grids[name] = value[keep]
        return True

    def repack_columns(self) -> None:
        """Left-align live entries and trim the padding width."""
        if self.rows == 0 or self.width <= 8:
            return
        new_width = int(self.row_data["sizes"].max())
        if new_width > self.width // 2:
            return
        order = np.argsort(~self.grids["alive"], axis=1, kind="stable")[:, :new_width]
        for name, value in self.grids.items():
            self.grids[name] = np.take_along_axis(value, order, axis=1)


def _per_size_table(config: ProcedureConfig, schedule) -> np.ndarray:
    table = np.full(config.k + 1, np.inf)
    for size in range(2, config.k + 1):
        table[size] = schedule.eta(size) ** 2 / delta_squared(config.delta, size)
    return table


def _masked_row_sum(grid: np.ndarray, alive: np.ndarray) -> np.ndarray:
    return np.where(alive, grid, 0).sum(axis=1)


def _batch_dk_family(
    procedure: str,
    config: ProcedureConfig,
    means: np.ndarray,
    variances: np.ndarray,
    seed: int,
    rep_start: int,
    count: int,
    best_index: int,
) -> BatchOutcome:
    k = config.k
    schedule = config._require_schedule()
    q_table = _per_size_table(config, schedule)
    track_moments = procedure in ("DK2", "DK3")
    paced = procedure == "DK3"
    sigma2 = config._require_sigma2() if procedure == "DK1" else None
    n0 = config.first_stage_known() if procedure == "DK1" else config.first_stage_estimating()

    pool = _Pool(means, np.sqrt(variances), seed, rep_start, count)
    pool.add_grid("sums", np.zeros((count, k)))
    if track_moments:
        pool.add_grid("mean", np.zeros((count, k)))
        pool.add_grid("m2", np.zeros((count, k)))
    if paced:
        pool.add_grid("counts", np.zeros((count, k), dtype=np.int64))
    outcome = BatchOutcome.empty(count)

    def draw_lockstep(index: int) -> None:
        alive = pool.alive
        z = rng.normals_at(pool.keys, np.uint64(index))
        obs = np.where(alive, pool.mu + pool.sd * z, 0.0)
        pool.grids["sums"] += obs
        if track_moments:
            cnt = index + 1
            mean, m2 = pool.mean, pool.m2
            delta = obs - mean
            new_mean = mean + delta / cnt
            np.copyto(mean, new_mean, where=alive)
            np.copyto(m2, m2 + delta * (obs - new_mean), where=alive)
        pool.row_data["total"] += pool.sizes

    def draw_paced(need: np.ndarray) -> None:
        counts, mean, m2 = pool.counts, pool.mean, pool.m2
        while True:
            active = pool.alive & (need > 0)
            if not np.any(active):
                return
            z = rng.normals_at(pool.keys, counts.astype(np.uint64))
            obs = pool.mu + pool.sd * z
            cnt_new = counts + 1
            delta = obs - mean
            new_mean = mean + delta / cnt_new
            new_m2 = m2 + delta * (obs - new_mean)
            np.copyto(mean, new_mean, where=active)
            np.copyto(m2, new_m2, where=active)
            counts += active
            need -= active
            pool.row_data["total"] += active.sum(axis=1)

    # Per-row aggregates, rebuilt after each stage's draws and adjusted
    # incrementally while a cascade removes victims.
    agg: dict[str, np.ndarray] = {}
    var_grid: np.ndarray | None = None

    def rebuild_aggregates(stage: int) -> None:
        nonlocal var_grid
        alive = pool.alive
        if paced:
            counts = pool.counts
            var_grid = pool.m2 / np.maximum(counts - 1, 1)
            mean = pool.mean
            agg["w1"] = _masked_row_sum(mean, alive)
            agg["w2"] = _masked_row_sum(mean * mean, alive)
            agg["vsum"] = _masked_row_sum(var_grid, alive)
            agg["nsum"] = _masked_row_sum(counts, alive).astype(np.float64)
        else:
            sums = pool.sums
            agg["s1"] = _masked_row_sum(sums, alive)
            agg["s2"] = _masked_row_sum(sums * sums, alive)
            if procedure == "DK2":
                agg["m2row"] = _masked_row_sum(pool.m2, alive)

    def stats_and_thresholds(rows: np.ndarray, stage: int) -> tuple[np.ndarray, np.ndarray]:
        size_f = pool.sizes[rows].astype(np.float64)
        base = q_table[pool.sizes[rows]]
        if paced:
            spread = agg["w2"][rows] - agg["w1"][rows] ** 2 / size_f
            lam2 = agg["vsum"][rows] / agg["nsum"][rows]
            return spread / np.maximum(lam2, _VAR_FLOOR), lam2 * base
        spread = agg["s2"][rows] - agg["s1"][rows] ** 2 / size_f
        if procedure == "DK1":
            return spread / sigma2, sigma2 * base
        pooled = agg["m2row"][rows] / size_f / (stage - 1)
        return spread / np.maximum(pooled, _VAR_FLOOR), pooled * base

    def screen(stage: int) -> None:
        all_rows = np.flatnonzero(pool.sizes >= 2)
        stats, thresholds = stats_and_thresholds(all_rows, stage)
        rows = all_rows[stats >= thresholds]
        while rows.size:
            rank = pool.mean if paced else pool.sums
            masked = np.where(pool.alive[rows], rank[rows], np.inf)
            cols = np.argmin(masked, axis=1)
            elim_ids = pool.ids[rows, cols]
            pool.alive[rows, cols] = False
            pool.row_data["sizes"][rows] -= 1
            if paced:
                vm = pool.mean[rows, cols]
                agg["w1"][rows] -= vm
                agg["w2"][rows] -= vm * vm
                agg["vsum"][rows] -= var_grid[rows, cols]
                agg["nsum"][rows] -= pool.counts[rows, cols]
            else:
                vs = pool.sums[rows, cols]
                agg["s1"][rows] -= vs
                agg["s2"][rows] -= vs * vs
                if procedure == "DK2":
                    agg["m2row"][rows] -= pool.m2[rows, cols]
            hit = elim_ids == best_index
            if np.any(hit):
                slots = pool.rep_pos[rows[hit]]
                outcome.best_level[slots] = k - pool.sizes[rows[hit]]
            alive_enough = pool.sizes[rows] >= 2
            rows = rows[alive_enough]
            if rows.size:
                stats, thresholds = stats_and_thresholds(rows, stage)
                rows = rows[stats >= thresholds]

    if paced:
        draw_paced(np.full((count, k), n0, dtype=np.int64))
    else:
        for j in range(n0):
            draw_lockstep(j)
    n = n0

    while pool.rows:
        if int(pool.total.max()) > config.max_total_observations:
            raise RuntimeError("observation budget exceeded; likely a mis-scaled configuration")
        rebuild_aggregates(n)
        screen(n)
        if pool.retire(outcome, n):
            pool.repack_columns()
        if not pool.rows:
            break
        if paced:
            counts = pool.counts
            var = pool.m2 / np.maximum(counts - 1, 1)
            var_safe = np.maximum(var, _VAR_FLOOR)
            ratio = np.where(pool.alive, counts / var_safe, np.inf)
            zcol = np.argmin(ratio, axis=1)[:, None]
            n_z = np.take_along_axis(counts, zcol, axis=1)[:, 0]
            v_z = np.take_along_axis(var_safe, zcol, axis=1)[:, 0]
            quota = np.ceil(var * ((n_z + config.b_z) / v_z)[:, None]).astype(np.int64)
            need = np.where(pool.alive, np.maximum(quota - counts, 0), 0)
            draw_paced(need)
        else:
            draw_lockstep(n)
        n += 1
    return outcome


def _note_kn_best(
    mask: np.ndarray,
    pool: _Pool,
    outcome: BatchOutcome,
    best_index: int,
    sums: np.ndarray,
) -> None:
    # Simultaneous eliminations rank by (cumulative sum, id); the best
    # system's level is its rank among this stage's casualties.
    hit_rows = np.flatnonzero((mask & (pool.ids == best_index)).any(axis=1))
    if hit_rows.size == 0:
        return
    best_col = np.argmax(pool.ids[hit_rows] == best_index, axis=1)
    best_sum = sums[hit_rows, best_col]
    m = mask[hit_rows]
    s = sums[hit_rows]
    ids = pool.ids[hit_rows]
    below = (
        m & ((s < best_sum[:, None]) | ((s == best_sum[:, None]) & (ids < best_index)))
    ).sum(axis=1)
    done_before = pool.k - pool.sizes[hit_rows]
    outcome.best_level[pool.rep_pos[hit_rows]] = done_before + 1 + below


def _batch_kn_known(
    config: ProcedureConfig,
    means: np.ndarray,
    variances: np.ndarray,
    seed: int,
    rep_start: int,
    count: int,
    best_index: int,
) -> BatchOutcome:
    k = config.k
    sigma2 = config._require_sigma2()
    h2 = 2.0 * (-np.log(2.0 * config.alpha / (k - 1)))
    slab = h2 * sigma2 / config.delta
    pool = _Pool(means, np.sqrt(variances), seed, rep_start, count)
    pool.add_grid("sums", np.zeros((count, k)))
    outcome = BatchOutcome.empty(count)

    def draw(index: int) -> None:
        z = rng.normals_at(pool.keys, np.uint64(index))
        obs = np.where(pool.alive, pool.mu + pool.sd * z, 0.0)
        pool.grids["sums"] += obs
        pool.row_data["total"] += pool.sizes

    n0 = config.first_stage_known()
    for j in range(n0):
        draw(j)
    n = n0
    while pool.rows:
        if int(pool.total.max()) > config.max_total_observations:
            raise RuntimeError("observation budget exceeded; likely a mis-scaled configuration")
        sums = pool.sums
        w = max(0.0, slab - 0.5 * config.delta * n)
        masked = np.where(pool.alive, sums, -np.inf)
        if w == 0.0:
            # regions closed: only the leader stays
            mask = pool.alive.copy()
            mask[np.arange(pool.rows), np.argmax(masked, axis=1)] = False
        else:
            cut = masked.max(axis=1) - w
            mask = pool.alive & (sums < cut[:, None])
        if mask.any():
            _note_kn_best(mask, pool, outcome, best_index, sums)
            pool.grids["alive"] = pool.alive & ~mask
            pool.row_data["sizes"] -= mask.sum(axis=1)
        if pool.retire(outcome, n):
            pool.repack_columns()
        if not pool.rows:
            break
        draw(n)
        n += 1
    return outcome


def _batch_kn_unknown(
    config: ProcedureConfig,
    means: np.ndarray,
    variances: np.ndarray,
    seed: int,
    rep_start: int,
    count: int,
    best_index: int,
) -> BatchOutcome:
    k = config.k
    n0 = config.first_stage_estimating()
    eta = 0.5 * ((2.0 * config.alpha / (k - 1)) ** (-2.0 / (n0 - 1)) - 1.0)
    h2 = 2.0 * eta * (n0 - 1)
    pool = _Pool(means, np.sqrt(variances), seed, rep_start, count)
    outcome = BatchOutcome.empty(count)

    # First stage in one slab; pairwise difference variances via the
    # covariance identity S_il^2 = C_ii + C_ll - 2 C_il.
    idx = np.arange(n0, dtype=np.uint64)[None, None, :]
    z = rng.normals_at(pool.keys[:, :, None], idx)
    first = pool.mu[:, :, None] + pool.sd[:, :, None] * z
    pool.add_grid("sums", first.sum(axis=2))
    centered = first - first.mean(axis=2, keepdims=True)
    cov = centered @ centered.transpose(0, 2, 1) / (n0 - 1)
    diag = np.einsum("rii->ri", cov)
    pair_s2 = diag[:, :, None] + diag[:, None, :] - 2.0 * cov
    slab = h2 * pair_s2 / (2.0 * config.delta)
    pool.row_data["total"] += k * n0

    n = n0
    while pool.rows:
        if int(pool.total.max()) > config.max_total_observations:
            raise RuntimeError("observation budget exceeded; likely a mis-scaled configuration")
        sums = pool.sums
        alive = pool.alive
        w = np.maximum(0.0, slab - 0.5 * config.delta * n)
        pair_alive = alive[:, :, None] & alive[:, None, :]
        open_any = np.any((w > 0.0) & pair_alive, axis=(1, 2))
        cut = np.where(alive[:, None, :], sums[:, None, :] - w, -np.inf).max(axis=2)
        mask = alive & (sums < cut)
        closed_rows = np.flatnonzero(~open_any)
        if closed_rows.size:
            masked = np.where(alive[closed_rows], sums[closed_rows], -np.inf)
            mask[closed_rows] = alive[closed_rows]
            mask[closed_rows, np.argmax(masked, axis=1)] = False
        if mask.any():
            _note_kn_best(mask, pool, outcome, best_index, sums)
            pool.grids["alive"] = alive & ~mask
            pool.row_data["sizes"] -= mask.sum(axis=1)
        finished = pool.sizes == 1
        if np.any(finished):
            slab = slab[~finished]
            pool.retire(outcome, n)
        if not pool.rows:
            break
        z = rng.normals_at(pool.keys, np.uint64(n))
        obs = np.where(pool.alive, pool.mu + pool.sd * z, 0.0)
        pool.grids["sums"] += obs
        pool.row_data["total"] += pool.sizes
        n += 1
    return outcome


def run_batch(
    procedure: str,
    config: ProcedureConfig,
    means,
    variances,
    seed: int,
    rep_start: int,
    rep_count: int,
    best_index: int,
) -> BatchOutcome:
    """Simulate replications rep_start .. rep_start+rep_count-1."""
    means = np.asarray(means, dtype=np.float64)
    variances = np.asarray(variances, dtype=np.float64)
    if means.shape != (config.k,) or variances.shape != (config.k,):
        raise ValueError("means and variances must have length k")
    if procedure in ("DK1", "DK2", "DK3"):
        return _batch_dk_family(
            procedure, config, means, variances, seed, rep_start, rep_count, best_index
        )
    if procedure == "KN":
        return _batch_kn_known(config, means, variances, seed, rep_start, rep_count, best_index)
    if procedure == "KN-UNK":
        return _batch_kn_unknown(config, means, variances, seed, rep_start, rep_count, best_index)
    raise ValueError(f"unknown procedure {procedure!r}")
