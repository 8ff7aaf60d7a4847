"""Data-generating processes, comparison estimators and replication harness."""

from .baselines import (DEFAULT_METHODS, METHODS, MethodContext, baseline_direct,
                        baseline_ips_and_oracles, cv_lambda, run_method)
from .dgp import (PRESETS, DGPConfig, Truth, gen_games, gen_logistic_te, gen_missing_data,
                  gen_partially_linear, generate, preset, solve_equilibrium)
from .harness import CSV_COLUMNS, Record, ReplicationReport, run_replications

__all__ = [
    "DEFAULT_METHODS", "METHODS", "MethodContext", "baseline_direct", "baseline_ips_and_oracles",
    "cv_lambda", "run_method", "PRESETS", "DGPConfig", "Truth", "gen_games", "gen_logistic_te",
    "gen_missing_data", "gen_partially_linear", "generate", "preset", "solve_equilibrium",
    "CSV_COLUMNS", "Record", "ReplicationReport", "run_replications",
]
