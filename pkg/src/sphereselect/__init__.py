"""Fully sequential ranking-and-selection with spherical continuation
regions: threshold solvers, the DK procedure family, pairwise baselines,
and a reproducible macro-replication harness."""

from .eta import (
    BetaFit,
    EtaSchedule,
    FIT_ALPHA_05,
    FIT_ALPHA_10,
    SolverError,
    SolverSettings,
    build_schedule,
    cached_schedule,
    default_fit,
    eta_two_closed_form,
    level1_prob_approx,
    level1_prob_mc,
    read_schedule_csv,
    solve_eta_deterministic,
    solve_eta_stochastic,
    write_schedule_csv,
)
from .harness import (
    MacroSummary,
    SCENARIOS,
    ScenarioConfig,
    bm_first_elimination_oracle,
    level_error_profile,
    make_scenario,
    run_macro_experiment,
)
from .procedures import (
    PROCEDURES,
    ProcedureConfig,
    RunOutcome,
    run_dk1,
    run_dk2,
    run_dk3,
    run_kn_known,
    run_kn_unknown,
    run_procedure,
)
from .samplers import GaussianSampler, RecordingSampler, ReplaySampler, Sampler

__version__ = "0.1.0"

__all__ = [
    "BetaFit",
    "EtaSchedule",
    "FIT_ALPHA_05",
    "FIT_ALPHA_10",
    "GaussianSampler",
    "MacroSummary",
    "PROCEDURES",
    "ProcedureConfig",
    "RecordingSampler",
    "ReplaySampler",
    "RunOutcome",
    "SCENARIOS",
    "Sampler",
    "ScenarioConfig",
    "SolverError",
    "SolverSettings",
    "bm_first_elimination_oracle",
    "build_schedule",
    "cached_schedule",
    "default_fit",
    "eta_two_closed_form",
    "level1_prob_approx",
    "level1_prob_mc",
    "level_error_profile",
    "make_scenario",
    "read_schedule_csv",
    "run_dk1",
    "run_dk2",
    "run_dk3",
    "run_kn_known",
    "run_kn_unknown",
    "run_macro_experiment",
    "run_procedure",
    "solve_eta_deterministic",
    "solve_eta_stochastic",
    "write_schedule_csv",
    "__version__",
]
