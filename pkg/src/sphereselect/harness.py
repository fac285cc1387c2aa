"""Scenario construction, macro-replication experiments, and an
independent random-walk oracle for the first-elimination probability.

Named scenarios pair two mean layouts (a slippage configuration where all
inferior systems sit exactly delta below the best, and monotone
decreasing means) with three variance layouts (equal, increasing,
decreasing).  Experiments run thousands of independent replications of a
procedure over a scenario and reduce them to the probability of correct
selection, the average sampling effort per system, and a histogram of the
level at which the best system was lost.
"""

from __future__ import annotations

import csv
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import engine
from .eta import EtaSchedule, SolverSettings, build_schedule, cached_schedule
from .procedures import PROCEDURES, ProcedureConfig
from .screening import delta_squared

__all__ = [
    "SCENARIOS",
    "ScenarioConfig",
    "MacroSummary",
    "make_scenario",
    "run_macro_experiment",
    "level_error_profile",
    "bm_first_elimination_oracle",
    "compare_oracle",
    "RESULTS_HEADER",
    "append_result_csv",
    "write_level_profile_csv",
]

SCENARIOS = ("SC-Equal", "MDM-Equal", "SC-INC", "SC-DEC", "MDM-INC", "MDM-DEC")


class ConfigError(ValueError):
    """Invalid experiment configuration (wrong pairing, shapes, names)."""


@dataclass
class ScenarioConfig:
    """One mean/variance configuration plus experiment parameters."""

    name: str
    k: int
    means: np.ndarray
    variances: np.ndarray
    delta: float = 1.0
    alpha: float = 0.1
    n0: int | None = None
    macro_reps: int = 10_000
    seed: int = 0

    def __post_init__(self) -> None:
        self.means = np.asarray(self.means, dtype=np.float64)
        self.variances = np.asarray(self.variances, dtype=np.float64)
        if self.means.shape != (self.k,) or self.variances.shape != (self.k,):
            raise ConfigError("means and variances must be vectors of length k")
        if np.any(self.variances <= 0.0):
            raise ConfigError("variances must be positive")
        if not self.delta > 0.0:
            raise ConfigError("delta must be positive")
        if not (0.0 < self.alpha < 1.0):
            raise ConfigError("alpha must lie in (0, 1)")
        if self.macro_reps < 1:
            raise ConfigError("macro_reps must be >= 1")

    @property
    def best_index(self) -> int:
        # Bestness comes from the mean vector, never from position.
        return int(np.argmax(self.means))

    @property
    def equal_variances(self) -> bool:
        return bool(np.all(self.variances == self.variances[0]))

    @property
    def within_iz_guarantee(self) -> bool:
        """True when the unique best leads every rival by at least delta."""
        order = np.sort(self.means)
        return bool(order[-1] - order[-2] >= self.delta - 1e-12)


def make_scenario(name: str, k: int, **overrides) -> ScenarioConfig:
    """Build a named scenario (or ``custom`` with explicit vectors).

    Mean layouts: SC puts the best at delta and everyone else at 0; MDM
    uses mu_i = -delta * i.  Variance layouts: Equal is 100 everywhere,
    INC ramps 25 (1 + 3 (i-1)/(k-1))^2 upward, DEC mirrors it downward.
    """
    if k < 2:
        raise ConfigError(f"need k >= 2, got {k}")
    delta = float(overrides.pop("delta", 1.0))
    means = overrides.pop("means", None)
    variances = overrides.pop("variances", None)
    if name == "custom":
        if means is None or variances is None:
            raise ConfigError("custom scenarios need explicit means and variances")
    elif name in SCENARIOS:
        if means is not None or variances is not None:
            raise ConfigError(f"named scenario {name!r} does not accept mean/variance overrides")
        mean_part, var_part = name.split("-")
        if mean_part == "SC":
            means = np.zeros(k)
            means[0] = delta
        else:
            means = -delta * np.arange(1, k + 1, dtype=np.float64)
        i = np.arange(1, k + 1, dtype=np.float64)
        if var_part == "Equal":
            variances = np.full(k, 100.0)
        elif var_part == "INC":
            variances = 25.0 * (1.0 + 3.0 * (i - 1) / (k - 1)) ** 2
        else:
            variances = 25.0 * (1.0 + 3.0 * (k - i) / (k - 1)) ** 2
    else:
        raise ConfigError(f"unknown scenario {name!r}; choose from {SCENARIOS} or 'custom'")
    return ScenarioConfig(name=name, k=k, means=means, variances=variances, delta=delta, **overrides)


@dataclass
class MacroSummary:
    """Reduction of one experiment cell."""

    scenario: str
    procedure: str
    k: int
    alpha: float
    delta: float
    n0: int | None
    macro_reps: int
    seed: int
    pcs: float
    pcs_se: float
    rep_per_k: float
    per_level_ics: np.ndarray
    wall_time: float = 0.0

    def validate(self) -> None:
        expected_se = math.sqrt(self.pcs * (1.0 - self.pcs) / self.macro_reps)
        if abs(self.pcs_se - expected_se) > 1e-12:
            raise AssertionError("PCS standard error must follow the binomial formula")
        ics = int(round((1.0 - self.pcs) * self.macro_reps))
        if int(self.per_level_ics.sum()) != ics:
            raise AssertionError("per-level histogram must account for every incorrect selection")


def _simulate_chunk(args) -> engine.BatchOutcome:
    procedure, config, means, variances, seed, start, count, best_index = args
    try:
        return engine.run_batch(procedure, config, means, variances, seed, start, count, best_index)
    except Exception as exc:
        raise RuntimeError(f"replications {start}..{start + count - 1} failed: {exc}") from exc


def _chunk_rows(procedure: str, k: int, n0: int | None) -> int:
    if procedure == "KN-UNK":
        first = 30 if n0 is None else n0
        return max(64, int(4_000_000 // max(k * first, 1)))
    return max(256, int(6_000_000 // max(k, 1)))


def _resolve_schedule(
    scenario: ScenarioConfig,
    procedure: str,
    schedule: EtaSchedule | None,
    settings: SolverSettings | None,
    cache_dir,
) -> EtaSchedule | None:
    if procedure not in ("DK1", "DK2", "DK3"):
        return None
    if schedule is None:
        return cached_schedule(scenario.k, scenario.alpha, settings=settings, cache_dir=cache_dir)
    if schedule.k != scenario.k or abs(schedule.alpha - scenario.alpha) > 1e-12:
        raise ConfigError(
            f"schedule is for (k={schedule.k}, alpha={schedule.alpha}), scenario wants "
            f"(k={scenario.k}, alpha={scenario.alpha})"
        )
    return schedule


def run_macro_experiment(
    scenario: ScenarioConfig,
    procedure: str,
    schedule: EtaSchedule | None = None,
    *,
    settings: SolverSettings | None = None,
    workers: int = 1,
    force: bool = False,
    cache_dir=None,
) -> MacroSummary:
    """Run ``scenario.macro_reps`` independent replications of a procedure.

    Replication r draws observation j of system i from the counter-based
    stream keyed by (scenario.seed, r, i); results are bit-reproducible
    for a fixed seed regardless of chunking or worker count.
    """
    if procedure not in PROCEDURES:
        raise ConfigError(f"unknown procedure {procedure!r}; choose from {PROCEDURES}")
    known_sigma2 = None
    if procedure in ("DK1", "KN"):
        if not scenario.equal_variances and not force:
            raise ConfigError(
                f"{procedure} assumes a known common variance; scenario {scenario.name!r} "
                "has unequal variances (pass force=True to override)"
            )
        known_sigma2 = float(scenario.variances.mean())
    schedule = _resolve_schedule(scenario, procedure, schedule, settings, cache_dir)
    config = ProcedureConfig(
        k=scenario.k,
        delta=scenario.delta,
        alpha=scenario.alpha,
        schedule=schedule,
        n0=scenario.n0,
        known_sigma2=known_sigma2,
    )
    started = time.perf_counter()
    chunk = _chunk_rows(procedure, scenario.k, scenario.n0)
    jobs = [
        (
            procedure,
            config,
            scenario.means,
            scenario.variances,
            scenario.seed,
            start,
            min(chunk, scenario.macro_reps - start),
            scenario.best_index,
        )
        for start in range(0, scenario.macro_reps, chunk)
    ]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_simulate_chunk, jobs))
    else:
        outcomes = [_simulate_chunk(job) for job in jobs]
    selected = np.concatenate([o.selected for o in outcomes])
    total_obs = np.concatenate([o.total_obs for o in outcomes])
    best_level = np.concatenate([o.best_level for o in outcomes])
    reps = scenario.macro_reps
    pcs = float(np.count_nonzero(selected == scenario.best_index)) / reps
    per_level = np.bincount(
        best_level[best_level > 0], minlength=scenario.k
    )[1 : scenario.k]
    summary = MacroSummary(
        scenario=scenario.name,
        procedure=procedure,
        k=scenario.k,
        alpha=scenario.alpha,
        delta=scenario.delta,
        n0=scenario.n0,
        macro_reps=reps,
        seed=scenario.seed,
        pcs=pcs,
        pcs_se=math.sqrt(pcs * (1.0 - pcs) / reps),
        rep_per_k=float(total_obs.mean()) / scenario.k,
        per_level_ics=per_level,
        wall_time=time.perf_counter() - started,
    )
    summary.validate()
    return summary


def level_error_profile(
    scenario: ScenarioConfig,
    uniform_beta: bool = False,
    *,
    settings: SolverSettings | None = None,
    workers: int = 1,
    cache_dir=None,
) -> np.ndarray:
    """Per-level incorrect-selection counts for the known-variance
    procedure on a slippage scenario.

    With ``uniform_beta`` every level's threshold is solved at the flat
    budget alpha/(k-1), which exposes the uneven level-error shape the
    fitted weights exist to correct; otherwise the production schedule is
    used and the counts should hover around a common value.
    """
    if not scenario.equal_variances:
        raise ConfigError("level profiles require an equal-variance scenario")
    if uniform_beta:
        settings = settings or SolverSettings()
        base = scenario.alpha / (scenario.k - 1)
        schedule = build_schedule(
            scenario.k,
            scenario.alpha,
            settings=settings,
            targets=np.full(scenario.k - 1, base),
        )
    else:
        schedule = cached_schedule(
            scenario.k, scenario.alpha, settings=settings, cache_dir=cache_dir
        )
    summary = run_macro_experiment(
        scenario, "DK1", schedule, settings=settings, workers=workers, cache_dir=cache_dir
    )
    return summary.per_level_ics


def bm_first_elimination_oracle(
    k: int,
    eta: float,
    delta: float,
    sigma: float,
    step: float,
    reps: int,
    seed: int = 0,
    batch: int = 20_000,
) -> tuple[float, float]:
    """Discretized-walk estimate of the probability that the best system
    is the first eliminated, with its standard error.

    Simulates the k-dimensional drifted walk of cumulative sums (the best
    coordinate drifts up by delta per unit time), centers it onto the
    zero-sum hyperplane, and stops when the centered norm reaches the
    radius sigma * eta / delta_k.  The frequency with which the best
    coordinate is the minimum at exit estimates the same quantity as the
    exponential-tilt Monte Carlo evaluator, up to discretization bias.
    """
    k = int(k)
    if not (3 <= k <= 6):
        raise ValueError("the walk oracle is intended for k in [3, 6]")
    if step <= 0.0 or reps < 1:
        raise ValueError("need step > 0 and reps >= 1")
    radius_sq = (sigma * eta) ** 2 / delta_squared(delta, k)
    drift = np.zeros(k)
    drift[-1] = delta * step
    walk_sd = sigma * math.sqrt(step)
    generator = np.random.default_rng([seed & 0xFFFFFFFF, k, max(int(1.0 / step), 1)])
    hits = 0
    done = 0
    while done < reps:
        m = min(batch, reps - done)
        pos = np.zeros((m, k))
        active = np.arange(m)
        while active.size:
            pos[active] += generator.standard_normal((active.size, k)) * walk_sd + drift
            sub = pos[active]
            centered = sub - sub.mean(axis=1, keepdims=True)
            ss = (centered * centered).sum(axis=1)
            exited = ss >= radius_sq
            if np.any(exited):
                rows = active[exited]
                hits += int(np.count_nonzero(np.argmin(pos[rows], axis=1) == k - 1))
                active = active[~exited]
        done += m
    p = hits / reps
    return p, math.sqrt(p * (1.0 - p) / reps)


def compare_oracle(
    k: int,
    eta: float,
    step: float,
    reps: int,
    seed: int = 0,
    settings: SolverSettings | None = None,
) -> dict:
    """Three estimates of the first-elimination probability side by side:
    the discretized walk, the exponential-tilt Monte Carlo, and the
    large-set asymptotic approximation."""
    from .eta import level1_prob_approx, level1_prob_mc

    settings = settings or SolverSettings()
    oracle_p, oracle_se = bm_first_elimination_oracle(
        k, eta, delta=1.0, sigma=1.0, step=step, reps=reps, seed=seed
    )
    mc_p, mc_se = level1_prob_mc(k, eta, settings)
    approx_p = level1_prob_approx(k, eta, settings)
    combined_se = math.sqrt(oracle_se**2 + mc_se**2)
    return {
        "k": k,
        "eta": eta,
        "step": step,
        "reps": reps,
        "seed": seed,
        "mc_samples": settings.mc_sample_count,
        "oracle": (oracle_p, oracle_se),
        "mc": (mc_p, mc_se),
        "approx": approx_p,
        "oracle_vs_mc_abs": abs(oracle_p - mc_p),
        "oracle_vs_mc_rel": abs(oracle_p - mc_p) / max(abs(mc_p), 1e-300),
        "combined_se": combined_se,
    }


RESULTS_HEADER = [
    "scenario",
    "procedure",
    "k",
    "alpha",
    "delta",
    "n0",
    "macro_reps",
    "pcs",
    "pcs_se",
    "rep_per_k",
    "seed",
]


def append_result_csv(path, summary: MacroSummary, config_comment: str | None = None) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fresh = not path.exists()
    with path.open("a", encoding="utf-8", newline="") as fh:
        if fresh:
            if config_comment:
                fh.write(f"# {config_comment}\n")
            csv.writer(fh).writerow(RESULTS_HEADER)
        csv.writer(fh).writerow(
            [
                summary.scenario,
                summary.procedure,
                summary.k,
                repr(summary.alpha),
                repr(summary.delta),
                "" if summary.n0 is None else summary.n0,
                summary.macro_reps,
                repr(summary.pcs),
                repr(summary.pcs_se),
                repr(summary.rep_per_k),
                summary.seed,
            ]
        )


def write_level_profile_csv(path, k: int, counts: np.ndarray, config_comment: str | None = None) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        if config_comment:
            fh.write(f"# {config_comment}\n")
        writer = csv.writer(fh)
        writer.writerow(["level", "standardized_level", "ics_count"])
        for level, count in enumerate(np.asarray(counts), start=1):
            writer.writerow([level, repr(level / k), int(count)])
