"""Elimination-threshold schedules.

For k systems and a confidence target 1 - alpha, every surviving-set size
s in {2, ..., k} gets a radius multiplier eta_s.  Each one is chosen so
that the probability of the best system being the next elimination stays
near a per-level budget beta_l, where the budgets are the base rate
alpha/(k-1) deflated by empirically fitted level weights.

Three evaluation regimes cover the size range:

* s = 2: closed form, eta = -ln(2 beta).
* 3 <= s < 10: an exact exponential-tilt identity for the exit
  distribution of the drifted spread process, estimated by Monte Carlo
  and inverted with a sign-test bisection.
* s >= 10: a Gumbel/normal asymptotic approximation whose expectation is
  a one-dimensional integral, evaluated by an equally weighted trapezoid
  rule and inverted by deterministic bisection.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import os
from dataclasses import dataclass, field, replace
from functools import lru_cache
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.special import ndtr

from . import rng
from .special import (
    extreme_value_centering,
    log_gamma,
    log_normalized_bessel_i,
    regularized_incomplete_beta,
    std_normal_cdf,
)

__all__ = [
    "BetaFit",
    "FIT_ALPHA_10",
    "FIT_ALPHA_05",
    "default_fit",
    "SolverSettings",
    "EtaSchedule",
    "SolverError",
    "level1_denominator_log",
    "level1_prob_mc",
    "level1_prob_approx",
    "integrand_f",
    "integrate_f",
    "level_weights",
    "beta_targets",
    "eta_two_closed_form",
    "solve_eta_deterministic",
    "solve_eta_stochastic",
    "build_schedule",
    "remark_numerator_approx",
    "write_schedule_csv",
    "read_schedule_csv",
    "cached_schedule",
    "load_reference_table",
]

logger = logging.getLogger(__name__)

_Z99 = 2.5758293035489004  # two-sided 99% normal quantile
_COARSE_INTERVALS = 100_000  # early bisection iterations run at this resolution
_SATURATION_ARG = 40.0


@dataclass(frozen=True)
class BetaFit:
    """Beta-density exponents fitted to the distribution of the level at
    which an incorrect selection occurs, g(w) ~ w^(a-1) (1-w)^(b-1)."""

    a: float
    b: float
    alpha: float

    def __post_init__(self) -> None:
        if not (self.a > 0.0 and self.b > 0.0):
            raise ValueError("beta fit exponents must be positive")
        if not (0.0 < self.alpha < 1.0):
            raise ValueError("fit alpha must lie in (0, 1)")


FIT_ALPHA_10 = BetaFit(a=1.19805, b=1.30662, alpha=0.10)
FIT_ALPHA_05 = BetaFit(a=1.2317, b=1.39658, alpha=0.05)


def default_fit(alpha: float) -> BetaFit:
    """Nearest of the two bundled fits: the 5% fit for alpha <= 0.075,
    the 10% fit otherwise."""
    if not (0.0 < alpha < 1.0):
        raise ValueError(f"alpha must lie in (0, 1), got {alpha!r}")
    return FIT_ALPHA_05 if alpha <= 0.075 else FIT_ALPHA_10


@dataclass(frozen=True)
class SolverSettings:
    """Knobs for the threshold solvers.  Defaults follow the published
    tuning: one million Monte Carlo samples or integration intervals per
    evaluation, batches of 50k inside the sign test, and a 0.001 stopping
    width for the stochastic bisection."""

    mc_sample_count: int = 1_000_000
    integration_intervals: int = 1_000_000
    deterministic_tolerance: float = 1e-6
    stochastic_stop_tolerance: float = 1e-3
    small_set_threshold: int = 10
    batch_size: int = 50_000
    max_batches: int = 20
    rng_seed: int = 0
    gumbel_expectation: str = "integration"  # or "monte-carlo" (cross-checks)

    def __post_init__(self) -> None:
        for name in ("mc_sample_count", "integration_intervals", "batch_size", "max_batches"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.integration_intervals < 2:
            raise ValueError("integration_intervals must be >= 2")
        for name in ("deterministic_tolerance", "stochastic_stop_tolerance"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be > 0")
        if self.small_set_threshold < 3:
            raise ValueError("small_set_threshold must be >= 3")
        if self.gumbel_expectation not in ("integration", "monte-carlo"):
            raise ValueError("gumbel_expectation must be 'integration' or 'monte-carlo'")

    def cache_token(self) -> str:
        payload = json.dumps(
            {
                "mc": self.mc_sample_count,
                "iv": self.integration_intervals,
                "dt": self.deterministic_tolerance,
                "st": self.stochastic_stop_tolerance,
                "sm": self.small_set_threshold,
                "bs": self.batch_size,
                "mb": self.max_batches,
                "seed": self.rng_seed,
                "ge": self.gumbel_expectation,
            },
            sort_keys=True,
        )
        return hashlib.sha256(payload.encode()).hexdigest()[:10]


class SolverError(RuntimeError):
    """A threshold solve failed; carries the best iterate seen so far."""

    def __init__(self, message: str, best_eta: float | None = None):
        super().__init__(message)
        self.best_eta = best_eta


@dataclass(frozen=True)
class EtaSchedule:
    """The per-size threshold multipliers for one (k, alpha) pair."""

    k: int
    alpha: float
    eta_by_size: dict[int, float]
    beta_by_size: dict[int, float]
    solver_by_size: dict[int, str]
    flags: tuple[str, ...] = ()

    def eta(self, size: int) -> float:
        try:
            return self.eta_by_size[size]
        except KeyError:
            raise ValueError(f"schedule for k={self.k} has no entry for size {size}") from None

    def sizes(self) -> list[int]:
        return sorted(self.eta_by_size, reverse=True)

    def validate(self) -> None:
        expected = set(range(2, self.k + 1))
        if set(self.eta_by_size) != expected:
            raise ValueError(f"schedule must cover sizes 2..{self.k}")
        if any(not (v > 0.0) for v in self.eta_by_size.values()):
            raise ValueError("every threshold multiplier must be positive")


def level1_denominator_log(s: int, eta: float) -> float:
    """ln of the exit-distribution normalizer
    Gamma(nu+1) (eta/2)^(-nu) I_nu(eta) with nu = (s-3)/2."""
    s = int(s)
    if s < 3:
        raise ValueError(f"need surviving size >= 3, got {s}")
    if not (eta > 0.0 and math.isfinite(eta)):
        raise ValueError(f"eta must be finite and > 0, got {eta!r}")
    return log_normalized_bessel_i((s - 3) / 2.0, eta)


@lru_cache(maxsize=4)
def _clamped_base_grid(s: int, intervals: int) -> np.ndarray:
    """Interior integrand arguments before the radius shift: the clipped
    ln(-ln(j/N)) / sqrt(2 ln s) - c_{s-1} grid for j = 1..N-1."""
    sq = math.sqrt(s - 1.0)
    c = extreme_value_centering(s - 1)
    u = np.arange(1, intervals, dtype=np.float64) / intervals
    base = np.log(-np.log(u)) / math.sqrt(2.0 * math.log(s)) - c
    np.clip(base, -sq, sq, out=base)
    base.setflags(write=False)
    return base


def _trapezoid_mean(f0: float, interior: np.ndarray, f1: float, intervals: int) -> float:
    """Equally weighted trapezoid average over [0, 1]: half weights at the
    endpoints, unit weights at the N-1 interior grid points."""
    return (0.5 * f0 + float(np.sum(interior)) + 0.5 * f1) / intervals


def _validate_eval_args(s, eta, min_s: int = 3) -> tuple[int, float]:
    s = int(s)
    if s < min_s:
        raise ValueError(f"need surviving size >= {min_s}, got {s}")
    if not (math.isfinite(eta) and eta > 0.0):
        raise ValueError(f"eta must be finite and > 0, got {eta!r}")
    return s, float(eta)


def integrand_f(u, s: int, eta: float):
    """The expectation integrand: the normal CDF of the clipped Gumbel
    asymptote of the scaled minimum, shifted by the radius term.

    The endpoints take their analytic limits (the clipping saturates), so
    f(0) = Phi(sqrt(s-1) - eta/sqrt(s-1)) and
    f(1) = Phi(-sqrt(s-1) - eta/sqrt(s-1)).
    """
    s, eta = _validate_eval_args(s, eta)
    sq = math.sqrt(s - 1.0)
    a = eta / sq
    arr = np.asarray(u, dtype=np.float64)
    if np.any(arr < 0.0) or np.any(arr > 1.0):
        raise ValueError("u must lie in [0, 1]")
    c = extreme_value_centering(s - 1)
    scale = math.sqrt(2.0 * math.log(s))
    out = np.empty_like(arr)
    lower = arr == 0.0
    upper = arr == 1.0
    interior = ~(lower | upper)
    out[lower] = std_normal_cdf(sq - a)
    out[upper] = std_normal_cdf(-sq - a)
    if np.any(interior):
        base = np.log(-np.log(arr[interior])) / scale - c
        np.clip(base, -sq, sq, out=base)
        out[interior] = ndtr(base - a)
    if np.ndim(u) == 0:
        return float(out)
    return out


def integrate_f(s: int, eta: float, intervals: int) -> float:
    """Trapezoid estimate of E f(U) for U uniform on [0, 1]."""
    s, eta = _validate_eval_args(s, eta)
    intervals = int(intervals)
    if intervals < 2:
        raise ValueError("need at least 2 intervals")
    sq = math.sqrt(s - 1.0)
    a = eta / sq
    base = _clamped_base_grid(s, intervals)
    interior = ndtr(base - a)
    return _trapezoid_mean(std_normal_cdf(sq - a), interior, std_normal_cdf(-sq - a), intervals)


def level1_prob_mc(
    s: int,
    eta: float,
    settings: SolverSettings | None = None,
    generator: np.random.Generator | None = None,
) -> tuple[float, float]:
    """Monte Carlo estimate of the probability that the best system is
    eliminated first, with its standard error.

    Uses the permutation-symmetrized form of the tilt identity: the
    numerator is (1/s) E exp(eta (min Z - mean Z) / sqrt((s-1) Var Z))
    over s iid standard normals, divided by the Bessel normalizer.
    """
    s, eta = _validate_eval_args(s, eta)
    settings = settings or SolverSettings()
    if generator is None:
        generator = np.random.default_rng(rng.derive_key(settings.rng_seed, s, 0x4D43))
    n = settings.mc_sample_count
    rows_per_chunk = max(1, int(8_000_000 // s))
    total = 0.0
    total_sq = 0.0
    done = 0
    while done < n:
        m = min(n - done, rows_per_chunk)
        z = generator.standard_normal((m, s))
        mn = z.min(axis=1)
        mean = z.mean(axis=1)
        var = z.var(axis=1)
        y = np.exp(eta * (mn - mean) / np.sqrt((s - 1.0) * var)) / s
        total += float(y.sum())
        total_sq += float((y * y).sum())
        done += m
    p_raw = total / n
    var_y = max(total_sq / n - p_raw * p_raw, 0.0)
    denom = math.exp(level1_denominator_log(s, eta))
    return p_raw / denom, math.sqrt(var_y / n) / denom


def level1_prob_approx(s: int, eta: float, settings: SolverSettings | None = None) -> float:
    """Asymptotic approximation of the level-1 probability, suitable for
    large surviving sizes.  The product is assembled in log space; the two
    CDF terms are subtracted in linear space (both lie in [0, 1], and the
    lower one saturates to 0 long before the difference matters)."""
    s, eta = _validate_eval_args(s, eta)
    settings = settings or SolverSettings()
    sq = math.sqrt(s - 1.0)
    a = eta / sq
    if settings.gumbel_expectation == "monte-carlo":
        generator = np.random.default_rng(rng.derive_key(settings.rng_seed, s, 0x4755))
        u = generator.random(settings.mc_sample_count)
        expectation = float(np.mean(integrand_f(u, s, eta)))
    else:
        expectation = integrate_f(s, eta, settings.integration_intervals)
    if sq + a > _SATURATION_ARG:
        logger.debug(
            "lower CDF term saturated (arg=%.1f) for s=%d eta=%.4f", -(sq + a), s, eta
        )
    core = expectation - std_normal_cdf(-sq - a)
    if core <= 0.0:
        return 0.0
    return math.exp(
        eta * eta / (2.0 * (s - 1.0)) + math.log(core) - level1_denominator_log(s, eta)
    )


def level_weights(k: int, fit: BetaFit) -> np.ndarray:
    """Per-level inflation factors m_l: the fitted-beta mass of level l's
    standardized slot relative to level 1's.  m_1 is exactly 1."""
    k = int(k)
    if k < 2:
        raise ValueError(f"need k >= 2, got {k}")
    if k == 2:
        return np.array([1.0])
    grid = np.arange(k, dtype=np.float64) / (k - 1)
    cdf = np.array([regularized_incomplete_beta(fit.a, fit.b, w) for w in grid])
    mass = np.diff(cdf)
    weights = mass / mass[0]
    weights[0] = 1.0
    return weights


def beta_targets(k: int, alpha: float, fit: BetaFit) -> np.ndarray:
    """Per-level error budgets beta_l = (alpha/(k-1)) / m_l, l = 1..k-1."""
    k = int(k)
    if not (0.0 < alpha < 1.0):
        raise ValueError(f"alpha must lie in (0, 1), got {alpha!r}")
    base = alpha / (k - 1)
    targets = base / level_weights(k, fit)
    targets[0] = base
    if np.any(targets >= 1.0):
        raise ValueError("a level budget reached 1; alpha is too large for this k")
    oversized = int(np.count_nonzero(targets >= 0.5))
    if oversized:
        logger.warning(
            "%d level budget(s) are >= 0.5; the two-system closed form breaks there",
            oversized,
        )
    return targets


def eta_two_closed_form(beta: float) -> float:
    """Threshold for the final pair: -ln(2 beta), positive for beta < 1/2."""
    beta = float(beta)
    if not (0.0 < beta < 0.5):
        raise ValueError(f"need 0 < beta < 0.5, got {beta!r}")
    return -math.log(2.0 * beta)


def solve_eta_deterministic(
    s: int, beta_target: float, settings: SolverSettings | None = None
) -> float:
    """Bisection root of the asymptotic evaluator at the given budget.

    The evaluator is strictly decreasing in eta; the bracket starts at
    [0.1, 2] and doubles the upper end until it straddles the target.
    Early iterations run the integrand at a coarse grid, and the bracket
    is re-verified at full resolution before the final refinement.
    """
    settings = settings or SolverSettings()
    s = int(s)
    if s < settings.small_set_threshold:
        raise ValueError(
            f"deterministic solver handles sizes >= {settings.small_set_threshold}, got {s}"
        )
    if not (0.0 < beta_target < 1.0):
        raise ValueError(f"beta target must lie in (0, 1), got {beta_target!r}")
    coarse = (
        replace(settings, integration_intervals=_COARSE_INTERVALS)
        if settings.integration_intervals > _COARSE_INTERVALS
        and settings.gumbel_expectation == "integration"
        else settings
    )

    lo, hi = 0.1, 2.0
    for _ in range(61):
        if level1_prob_approx(s, hi, coarse) < beta_target:
            break
        lo = hi
        hi *= 2.0
    else:
        raise SolverError(f"no upper bracket after 60 doublings (s={s})", best_eta=hi)
    for _ in range(61):
        if level1_prob_approx(s, lo, coarse) >= beta_target:
            break
        hi = lo
        lo *= 0.5
    else:
        raise SolverError(f"no lower bracket after 60 halvings (s={s})", best_eta=lo)

    tol = settings.deterministic_tolerance
    if coarse is not settings:
        coarse_tol = max(100.0 * tol, 1e-3)
        while hi - lo > coarse_tol:
            mid = 0.5 * (lo + hi)
            if level1_prob_approx(s, mid, coarse) >= beta_target:
                lo = mid
            else:
                hi = mid
        # Re-anchor the bracket under the full-resolution integrand; the
        # coarse grid carries a small resolution-dependent bias, so step
        # outward geometrically until the signs are right again.
        step = max(hi - lo, tol)
        for _ in range(61):
            if level1_prob_approx(s, lo, settings) >= beta_target:
                break
            hi = lo
            lo = max(lo - step, 1e-9)
            step *= 2.0
        else:
            raise SolverError(f"full-resolution re-bracketing failed (s={s})", best_eta=lo)
        step = max(hi - lo, tol)
        for _ in range(61):
            if level1_prob_approx(s, hi, settings) < beta_target:
                break
            lo = max(lo, hi)
            hi += step
            step *= 2.0
        else:
            raise SolverError(f"full-resolution re-bracketing failed (s={s})", best_eta=hi)

    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if level1_prob_approx(s, mid, settings) >= beta_target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _mc_sign(
    s: int,
    eta: float,
    beta_target: float,
    settings: SolverSettings,
    generator: np.random.Generator,
) -> int:
    """Sequential sign decision for the stochastic bisection: accumulate
    Monte Carlo batches until a 99% confidence interval around the running
    estimate excludes the target, or the batch budget runs out (then the
    point estimate decides)."""
    denom = math.exp(level1_denominator_log(s, eta))
    total = 0.0
    total_sq = 0.0
    n = 0
    for _ in range(settings.max_batches):
        z = generator.standard_normal((settings.batch_size, s))
        mn = z.min(axis=1)
        mean = z.mean(axis=1)
        var = z.var(axis=1)
        y = np.exp(eta * (mn - mean) / np.sqrt((s - 1.0) * var)) / s
        total += float(y.sum())
        total_sq += float((y * y).sum())
        n += settings.batch_size
        p_raw = total / n
        se_raw = math.sqrt(max(total_sq / n - p_raw * p_raw, 0.0) / n)
        p = p_raw / denom
        se = se_raw / denom
        if abs(p - beta_target) > _Z99 * se:
            break
    return 1 if p >= beta_target else -1


def solve_eta_stochastic(
    s: int, beta_target: float, settings: SolverSettings | None = None
) -> float:
    """Stochastic bisection for small surviving sizes, driven by the Monte
    Carlo evaluator.

    Each candidate's side of the root is decided by a batched sequential
    sign test (99% confidence mirror of the power-one test it replaces);
    the interval halves on every decision and the iteration stops once its
    width drops below the stopping tolerance."""
    settings = settings or SolverSettings()
    s = int(s)
    if not (3 <= s < settings.small_set_threshold):
        raise ValueError(
            f"stochastic solver handles sizes in [3, {settings.small_set_threshold}), got {s}"
        )
    if not (0.0 < beta_target < 1.0):
        raise ValueError(f"beta target must lie in (0, 1), got {beta_target!r}")

    calls = 0

    def decide(eta: float) -> int:
        nonlocal calls
        calls += 1
        generator = np.random.default_rng(rng.derive_key(settings.rng_seed, s, calls))
        return _mc_sign(s, eta, beta_target, settings, generator)

    lo, hi = 0.1, 2.0
    for _ in range(61):
        if decide(hi) < 0:
            break
        lo = hi
        hi *= 2.0
    else:
        raise SolverError(f"no upper bracket after 60 doublings (s={s})", best_eta=hi)
    for _ in range(61):
        if decide(lo) > 0:
            break
        hi = lo
        lo *= 0.5
    else:
        raise SolverError(f"no lower bracket after 60 halvings (s={s})", best_eta=lo)

    for _ in range(200):
        if hi - lo <= settings.stochastic_stop_tolerance:
            return 0.5 * (lo + hi)
        mid = 0.5 * (lo + hi)
        if decide(mid) > 0:
            lo = mid
        else:
            hi = mid
    raise SolverError(
        f"stochastic bisection exhausted its budget (s={s})", best_eta=0.5 * (lo + hi)
    )


def build_schedule(
    k: int,
    alpha: float,
    fit: BetaFit | None = None,
    settings: SolverSettings | None = None,
    *,
    targets: np.ndarray | None = None,
) -> EtaSchedule:
    """Solve the full threshold schedule for (k, alpha).

    Level l (surviving size s = k - l + 1) is routed to the closed form at
    s = 2, the stochastic solver below the small-set threshold, and the
    deterministic solver otherwise.  ``targets`` overrides the per-level
    budgets (used by diagnostics that keep every budget at alpha/(k-1)).
    """
    k = int(k)
    if k < 2:
        raise ValueError(f"need k >= 2, got {k}")
    if not (0.0 < alpha < 1.0):
        raise ValueError(f"alpha must lie in (0, 1), got {alpha!r}")
    fit = fit or default_fit(alpha)
    settings = settings or SolverSettings()
    if targets is None:
        targets = beta_targets(k, alpha, fit)
    else:
        targets = np.asarray(targets, dtype=np.float64)
        if targets.shape != (k - 1,):
            raise ValueError(f"targets must have length {k - 1}")

    eta_by_size: dict[int, float] = {}
    beta_by_size: dict[int, float] = {}
    solver_by_size: dict[int, str] = {}
    flags: list[str] = []
    for level in range(1, k):
        size = k - level + 1
        beta = float(targets[level - 1])
        if beta >= 0.5:
            flags.append(f"beta-target-ge-0.5:level={level}")
        try:
            if size == 2:
                eta = eta_two_closed_form(beta)
                tag = "closed-form-eta2"
            elif size < settings.small_set_threshold:
                eta = solve_eta_stochastic(size, beta, settings)
                tag = "monte-carlo"
            else:
                eta = solve_eta_deterministic(size, beta, settings)
                tag = "deterministic-integration"
        except (ValueError, SolverError) as exc:
            raise SolverError(
                f"level {level} (surviving size {size}): {exc}",
                best_eta=getattr(exc, "best_eta", None),
            ) from exc
        eta_by_size[size] = eta
        beta_by_size[size] = beta
        solver_by_size[size] = tag
    schedule = EtaSchedule(
        k=k,
        alpha=float(alpha),
        eta_by_size=eta_by_size,
        beta_by_size=beta_by_size,
        solver_by_size=solver_by_size,
        flags=tuple(flags),
    )
    schedule.validate()
    return schedule


def remark_numerator_approx(s: int, eta: float) -> float:
    """Closed-form approximation of the Monte Carlo numerator,
    (1/s) exp(-eta c_s / sqrt(s-1)) Gamma(1 + eta / sqrt(2 (s-1) ln s)).

    Diagnostic only: it systematically overshoots the achieved confidence,
    so the schedule builders never consult it.
    """
    s = int(s)
    if s < 3:
        raise ValueError(f"need surviving size >= 3, got {s}")
    eta = float(eta)
    if not (math.isfinite(eta) and eta >= 0.0):
        raise ValueError(f"eta must be finite and >= 0, got {eta!r}")
    c = extreme_value_centering(s)
    sq = math.sqrt(s - 1.0)
    return math.exp(
        -eta * c / sq + log_gamma(1.0 + eta / math.sqrt(2.0 * (s - 1.0) * math.log(s)))
    ) / s


# ---------------------------------------------------------------------------
# Schedule file format and cache.
# ---------------------------------------------------------------------------

SCHEDULE_HEADER = ["k", "alpha", "s", "eta", "beta_target", "solver"]


def write_schedule_csv(schedule: EtaSchedule, path: str | Path) -> None:
    """One row per level, descending surviving size, eta at 6 decimals."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SCHEDULE_HEADER)
        for size in schedule.sizes():
            writer.writerow(
                [
                    schedule.k,
                    repr(schedule.alpha),
                    size,
                    f"{schedule.eta_by_size[size]:.6f}",
                    repr(schedule.beta_by_size[size]),
                    schedule.solver_by_size[size],
                ]
            )


def read_schedule_csv(path: str | Path) -> EtaSchedule:
    path = Path(path)
    eta_by_size: dict[int, float] = {}
    beta_by_size: dict[int, float] = {}
    solver_by_size: dict[int, str] = {}
    k = None
    alpha = None
    with path.open("r", encoding="utf-8", newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    if not rows or rows[0] != SCHEDULE_HEADER:
        raise ValueError(f"{path} is not a schedule file")
    for row in rows[1:]:
        row_k, row_alpha, size, eta, beta, solver = row
        row_k = int(row_k)
        row_alpha = float(row_alpha)
        if k is None:
            k, alpha = row_k, row_alpha
        elif (row_k, row_alpha) != (k, alpha):
            raise ValueError(f"{path} mixes multiple (k, alpha) pairs")
        eta_by_size[int(size)] = float(eta)
        beta_by_size[int(size)] = float(beta)
        solver_by_size[int(size)] = solver
    if k is None:
        raise ValueError(f"{path} contains no schedule rows")
    schedule = EtaSchedule(
        k=k,
        alpha=alpha,
        eta_by_size=eta_by_size,
        beta_by_size=beta_by_size,
        solver_by_size=solver_by_size,
    )
    schedule.validate()
    return schedule


def default_cache_dir() -> Path:
    env = os.environ.get("SPHERESELECT_CACHE")
    if env:
        return Path(env)
    return Path.home() / ".cache" / "sphereselect"


def cached_schedule(
    k: int,
    alpha: float,
    fit: BetaFit | None = None,
    settings: SolverSettings | None = None,
    cache_dir: str | Path | None = None,
) -> EtaSchedule:
    """Schedule lookup backed by an on-disk cache keyed by (k, alpha, fit,
    solver settings).  Solving large k is the expensive preamble of any
    experiment; everything downstream reuses the file."""
    fit = fit or default_fit(alpha)
    settings = settings or SolverSettings()
    cache_dir = Path(cache_dir) if cache_dir is not None else default_cache_dir()
    fit_token = hashlib.sha256(
        json.dumps([fit.a, fit.b], sort_keys=True).encode()
    ).hexdigest()[:6]
    name = f"eta_k{int(k)}_a{alpha!r}_{fit_token}_{settings.cache_token()}.csv"
    path = cache_dir / name
    if path.exists():
        return read_schedule_csv(path)
    schedule = build_schedule(k, alpha, fit, settings)
    write_schedule_csv(schedule, path)
    return schedule


def load_reference_table() -> dict[tuple[int, int], float]:
    """Published reference thresholds for alpha = 0.10, keyed by
    (k, surviving size).  Used as regression fixtures."""
    table: dict[tuple[int, int], float] = {}
    text = resources.files("sphereselect.data").joinpath("eta_reference_alpha10.csv").read_text()
    for row in csv.reader(text.splitlines()):
        if not row or row[0] == "k":
            continue
        table[(int(row[0]), int(row[1]))] = float(row[2])
    return table
