"""Monte Carlo experiments: configuration, estimation, threshold fitting and reports."""
from .config import (SCHEMES, TARGET_BER, ExperimentConfig, StoppingRule, list_presets,
                     load_config, parse_grid, preset_path)
from .montecarlo import (BerFerEstimate, SplitPoint, merge, run_point, run_sweep, run_trials,
                         sweep_power_split, trial_rng, wilson_interval)
from .report import COLUMNS, emit_report, estimates_from_report, load_report
from .schemes import build_code, build_scheme
from .threshold import (ThresholdFit, bootstrap_thresholds, fit_estimates, fit_threshold,
                        irls_logistic, threshold_ci, threshold_gap_ci)

__all__ = [name for name in dir() if not name.startswith("_")]
