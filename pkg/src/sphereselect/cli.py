"""Command-line front end.

Subcommands: ``eta-table`` solves and writes threshold schedules, ``run``
executes one experiment cell (or a single recorded/replayed replication),
``sweep`` crosses scenario x k x procedure grids, and ``oracle`` compares
the independent random-walk estimate of the first-elimination probability
against the analytic evaluators.

Configuration precedence is flags > config file > defaults; the effective
configuration is echoed on stdout and as a comment header in fresh output
files.  Exit codes: 0 success, 2 configuration error, 3 solver failure,
4 replication failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import eta as eta_mod
from . import harness
from .eta import SolverError, SolverSettings, cached_schedule, read_schedule_csv, write_schedule_csv
from .harness import ConfigError, make_scenario, run_macro_experiment
from .procedures import PROCEDURES, ProcedureConfig, run_procedure
from .samplers import (
    GaussianSampler,
    RecordingSampler,
    ReplaySampler,
    read_observations_csv,
    write_observations_csv,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_REPLICATION = 4


def _load_config(path: str | None) -> dict[str, str]:
    if not path:
        return {}
    out: dict[str, str] = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"config line without '=': {line!r}")
        key, value = line.split("=", 1)
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def _pick(args, cfg: dict[str, str], name: str, default, cast):
    value = getattr(args, name)
    if value is not None:
        return value
    if name in cfg:
        raw = cfg[name]
        if cast is bool:
            return raw.lower() in ("1", "true", "yes", "on")
        return cast(raw)
    return default


def _int_list(text: str) -> list[int]:
    return [int(part) for part in text.split(",") if part]


def _str_list(text: str) -> list[str]:
    return [part.strip() for part in text.split(",") if part.strip()]


def _settings(args, cfg) -> SolverSettings:
    kwargs = {}
    for field_name, cast in (
        ("mc_samples", int),
        ("intervals", int),
        ("seed", int),
        ("batch_size", int),
        ("max_batches", int),
    ):
        value = _pick(args, cfg, field_name, None, cast)
        if value is not None:
            target = {
                "mc_samples": "mc_sample_count",
                "intervals": "integration_intervals",
                "seed": "rng_seed",
            }.get(field_name, field_name)
            kwargs[target] = value
    return SolverSettings(**kwargs)


def _echo(line: str) -> None:
    print(line)


def cmd_eta_table(args, cfg) -> int:
    ks = _pick(args, cfg, "k", None, _int_list)
    if not ks:
        raise ConfigError("eta-table needs --k (comma-separated list)")
    alpha = _pick(args, cfg, "alpha", 0.1, float)
    out_dir = Path(_pick(args, cfg, "out", ".", str))
    cache_dir = _pick(args, cfg, "cache_dir", None, str)
    settings = _settings(args, cfg)
    schedules = {}
    failures = []
    for k in ks:
        _echo(f"# eta-table k={k} alpha={alpha!r} seed={settings.rng_seed} "
              f"mc={settings.mc_sample_count} intervals={settings.integration_intervals}")
        try:
            schedule = cached_schedule(k, alpha, settings=settings, cache_dir=cache_dir)
        except (SolverError, ValueError) as exc:
            failures.append((k, str(exc)))
            print(f"error: k={k}: {exc}", file=sys.stderr)
            continue
        schedules[k] = schedule
        path = out_dir / f"eta_k{k}_alpha{alpha!r}.csv"
        write_schedule_csv(schedule, path)
        _echo(f"wrote {path}")
    if args.print_table and schedules:
        _print_matrix(schedules)
    return EXIT_SOLVER if failures else EXIT_OK


def _print_matrix(schedules: dict) -> None:
    ks = sorted(schedules, reverse=True)
    sizes = list(range(max(ks), 1, -1))
    header = "size" + "".join(f"{f'k={k}':>12}" for k in ks)
    print(header)
    for size in sizes:
        cells = []
        for k in ks:
            value = schedules[k].eta_by_size.get(size)
            cells.append(f"{value:>12.5f}" if value is not None else " " * 12)
        print(f"{size:>4}" + "".join(cells))


def _single_replication(args, cfg, scenario, procedure: str, schedule) -> int:
    known_sigma2 = None
    if procedure in ("DK1", "KN"):
        known_sigma2 = float(scenario.variances.mean())
    config = ProcedureConfig(
        k=scenario.k,
        delta=scenario.delta,
        alpha=scenario.alpha,
        schedule=schedule if procedure in ("DK1", "DK2", "DK3") else None,
        n0=scenario.n0,
        known_sigma2=known_sigma2,
    )
    replay = _pick(args, cfg, "replay", None, str)
    record = _pick(args, cfg, "record", None, str)
    if replay:
        sampler = ReplaySampler(read_observations_csv(replay))
    else:
        sampler = RecordingSampler(
            GaussianSampler(scenario.means, scenario.variances, scenario.seed, replication=0)
        )
    outcome = run_procedure(procedure, config, sampler)
    if record and not replay:
        write_observations_csv(record, sampler.observations())
        _echo(f"recorded observations to {record}")
    _echo(
        f"selected={outcome.selected} stages={outcome.stages} "
        f"total_observations={outcome.total_observations}"
    )
    _echo("per_system_counts=" + ",".join(str(int(c)) for c in outcome.per_system_counts))
    _echo(
        "eliminations="
        + ";".join(f"{s}@L{lv}@n{st}" for s, lv, st in outcome.elimination_order)
    )
    return EXIT_OK


def cmd_run(args, cfg) -> int:
    scenario_name = _pick(args, cfg, "scenario", None, str)
    procedure = _pick(args, cfg, "procedure", None, str)
    k = _pick(args, cfg, "k", None, int)
    if not scenario_name or not procedure or not k:
        raise ConfigError("run needs --scenario, --procedure and --k")
    if procedure not in PROCEDURES:
        raise ConfigError(f"unknown procedure {procedure!r}; choose from {PROCEDURES}")
    settings = _settings(args, cfg)
    scenario = make_scenario(
        scenario_name,
        k,
        delta=_pick(args, cfg, "delta", 1.0, float),
        alpha=_pick(args, cfg, "alpha", 0.1, float),
        n0=_pick(args, cfg, "n0", None, int),
        macro_reps=_pick(args, cfg, "reps", 10_000, int),
        seed=_pick(args, cfg, "run_seed", 0, int),
    )
    cache_dir = _pick(args, cfg, "cache_dir", None, str)
    schedule_path = _pick(args, cfg, "schedule", None, str)
    schedule = read_schedule_csv(schedule_path) if schedule_path else None
    force = bool(_pick(args, cfg, "force", False, bool))
    workers = _pick(args, cfg, "workers", 1, int)

    config_line = (
        f"scenario={scenario.name} procedure={procedure} k={scenario.k} "
        f"alpha={scenario.alpha!r} delta={scenario.delta!r} n0={scenario.n0} "
        f"reps={scenario.macro_reps} seed={scenario.seed} workers={workers} "
        f"solver_seed={settings.rng_seed}"
    )
    _echo(f"# {config_line}")

    needs_schedule = procedure in ("DK1", "DK2", "DK3")
    if needs_schedule and schedule is None:
        schedule = cached_schedule(scenario.k, scenario.alpha, settings=settings, cache_dir=cache_dir)
    elif needs_schedule:
        # surface mismatches before any sampling happens
        if schedule.k != scenario.k or abs(schedule.alpha - scenario.alpha) > 1e-12:
            raise ConfigError(
                f"schedule is for (k={schedule.k}, alpha={schedule.alpha}), scenario wants "
                f"(k={scenario.k}, alpha={scenario.alpha})"
            )

    if _pick(args, cfg, "replay", None, str) or _pick(args, cfg, "record", None, str):
        return _single_replication(args, cfg, scenario, procedure, schedule)

    summary = run_macro_experiment(
        scenario,
        procedure,
        schedule,
        settings=settings,
        workers=workers,
        force=force,
        cache_dir=cache_dir,
    )
    _echo(
        f"pcs={summary.pcs!r} pcs_se={summary.pcs_se!r} rep_per_k={summary.rep_per_k!r} "
        f"wall_time={summary.wall_time:.2f}s"
    )
    out = _pick(args, cfg, "out", None, str)
    if out:
        harness.append_result_csv(out, summary, config_comment=config_line)
        _echo(f"appended results to {out}")
    return EXIT_OK


def cmd_sweep(args, cfg) -> int:
    ks = _pick(args, cfg, "k", None, _int_list)
    procedures = _pick(args, cfg, "procedures", None, _str_list)
    scenario_name = _pick(args, cfg, "scenario", None, str)
    if not ks or not procedures or not scenario_name:
        raise ConfigError("sweep needs --scenario, --k and --procedures")
    for procedure in procedures:
        if procedure not in PROCEDURES:
            raise ConfigError(f"unknown procedure {procedure!r}; choose from {PROCEDURES}")
    settings = _settings(args, cfg)
    out = _pick(args, cfg, "out", None, str)
    cache_dir = _pick(args, cfg, "cache_dir", None, str)
    workers = _pick(args, cfg, "workers", 1, int)
    force = bool(_pick(args, cfg, "force", False, bool))
    reps = _pick(args, cfg, "reps", 10_000, int)
    master_seed = _pick(args, cfg, "run_seed", 0, int)
    worst = EXIT_OK
    for k in ks:
        for procedure in procedures:
            config_line = (
                f"sweep scenario={scenario_name} procedure={procedure} k={k} reps={reps} "
                f"seed={master_seed} solver_seed={settings.rng_seed}"
            )
            _echo(f"# {config_line}")
            try:
                scenario = make_scenario(
                    scenario_name,
                    k,
                    delta=_pick(args, cfg, "delta", 1.0, float),
                    alpha=_pick(args, cfg, "alpha", 0.1, float),
                    n0=_pick(args, cfg, "n0", None, int),
                    macro_reps=reps,
                    seed=master_seed,
                )
                summary = run_macro_experiment(
                    scenario,
                    procedure,
                    settings=settings,
                    workers=workers,
                    force=force,
                    cache_dir=cache_dir,
                )
            except (ConfigError, ValueError) as exc:
                print(f"error: {config_line}: {exc}", file=sys.stderr)
                worst = max(worst, EXIT_CONFIG)
                continue
            except SolverError as exc:
                print(f"error: {config_line}: {exc}", file=sys.stderr)
                worst = max(worst, EXIT_SOLVER)
                continue
            except RuntimeError as exc:
                print(f"error: {config_line}: {exc}", file=sys.stderr)
                worst = max(worst, EXIT_REPLICATION)
                continue
            _echo(
                f"k={k} procedure={procedure} pcs={summary.pcs!r} rep_per_k={summary.rep_per_k!r}"
            )
            if out:
                harness.append_result_csv(out, summary, config_comment=config_line)
    return worst


def cmd_oracle(args, cfg) -> int:
    k = _pick(args, cfg, "k", None, int)
    eta_value = _pick(args, cfg, "eta", None, float)
    if k is None or eta_value is None:
        raise ConfigError("oracle needs --k and --eta")
    if not 3 <= k <= 6:
        raise ConfigError("oracle supports k in [3, 6]")
    step = _pick(args, cfg, "step", 1e-3, float)
    reps = _pick(args, cfg, "reps", 100_000, int)
    seed = _pick(args, cfg, "run_seed", 0, int)
    settings = _settings(args, cfg)
    report = harness.compare_oracle(k, eta_value, step, reps, seed, settings)
    _echo(
        f"# oracle k={k} eta={eta_value!r} step={step!r} reps={reps} seed={seed} "
        f"mc_samples={settings.mc_sample_count} solver_seed={settings.rng_seed}"
    )
    oracle_p, oracle_se = report["oracle"]
    mc_p, mc_se = report["mc"]
    _echo(f"walk_oracle={oracle_p!r} se={oracle_se!r}")
    _echo(f"tilt_mc={mc_p!r} se={mc_se!r}")
    _echo(f"asymptotic={report['approx']!r}")
    _echo(
        f"abs_diff={report['oracle_vs_mc_abs']!r} rel_diff={report['oracle_vs_mc_rel']!r} "
        f"combined_se={report['combined_se']!r}"
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sphereselect", description=__doc__)
    parser.add_argument("--config", help="flat key=value configuration file")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, help="solver RNG seed")
        p.add_argument("--mc-samples", dest="mc_samples", type=int)
        p.add_argument("--intervals", type=int)
        p.add_argument("--batch-size", dest="batch_size", type=int)
        p.add_argument("--max-batches", dest="max_batches", type=int)
        p.add_argument("--cache-dir", dest="cache_dir")

    p = sub.add_parser("eta-table", help="solve and write threshold schedules")
    p.add_argument("--k", help="comma-separated list of system counts")
    p.add_argument("--alpha", type=float)
    p.add_argument("--out", help="output directory")
    p.add_argument("--print-table", action="store_true")
    common(p)
    p.set_defaults(handler=cmd_eta_table)

    p = sub.add_parser("run", help="run one experiment cell (or one replication)")
    p.add_argument("--scenario")
    p.add_argument("--procedure")
    p.add_argument("--k", type=int)
    p.add_argument("--reps", type=int)
    p.add_argument("--delta", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--n0", type=int)
    p.add_argument("--run-seed", dest="run_seed", type=int, help="experiment master seed")
    p.add_argument("--schedule", help="schedule CSV (defaults to cache/auto-build)")
    p.add_argument("--out", help="results CSV to append to")
    p.add_argument("--workers", type=int)
    p.add_argument("--force", action="store_const", const=True)
    p.add_argument("--replay", help="observation CSV to replay (single replication)")
    p.add_argument("--record", help="record a single replication's observations here")
    common(p)
    p.set_defaults(handler=cmd_run)

    p = sub.add_parser("sweep", help="cross scenario x k x procedure")
    p.add_argument("--scenario")
    p.add_argument("--k", help="comma-separated list")
    p.add_argument("--procedures", help="comma-separated list")
    p.add_argument("--reps", type=int)
    p.add_argument("--delta", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--n0", type=int)
    p.add_argument("--run-seed", dest="run_seed", type=int)
    p.add_argument("--out")
    p.add_argument("--workers", type=int)
    p.add_argument("--force", action="store_const", const=True)
    common(p)
    p.set_defaults(handler=cmd_sweep)

    p = sub.add_parser("oracle", help="walk-oracle vs analytic evaluators")
    p.add_argument("--k", type=int)
    p.add_argument("--eta", type=float)
    p.add_argument("--step", type=float)
    p.add_argument("--reps", type=int)
    p.add_argument("--run-seed", dest="run_seed", type=int)
    common(p)
    p.set_defaults(handler=cmd_oracle)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _load_config(args.config)
        return args.handler(args, cfg)
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (ConfigError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RuntimeError as exc:
        print(f"replication error: {exc}", file=sys.stderr)
        return EXIT_REPLICATION


if __name__ == "__main__":
    sys.exit(main())
