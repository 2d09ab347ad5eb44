from .checks import CHECKS, CheckContext, run_checks
from .config import (
    ExperimentConfig,
    KfacSettings,
    SweepSpec,
    expand_sweep,
    json_pointer,
    load_experiment,
    load_sweep,
    parse_experiment,
    set_dotted,
)
from .metrics import SCHEMA_VERSION, validate_metrics_csv, write_metrics_csv, write_sidecar
from .ppm_demo import DEFAULT_REGIMES, PpmCurve, fit_curve, ppm_demo, write_curves
from .runner import METRICS_FILE, SIDECAR_FILE, SUMMARY_FILE, RunResult, grid, rank_summary, run

__all__ = [
    "CHECKS",
    "DEFAULT_REGIMES",
    "METRICS_FILE",
    "SCHEMA_VERSION",
    "SIDECAR_FILE",
    "SUMMARY_FILE",
    "CheckContext",
    "ExperimentConfig",
    "KfacSettings",
    "PpmCurve",
    "RunResult",
    "SweepSpec",
    "expand_sweep",
    "fit_curve",
    "grid",
    "json_pointer",
    "load_experiment",
    "load_sweep",
    "parse_experiment",
    "ppm_demo",
    "rank_summary",
    "run",
    "run_checks",
    "set_dotted",
    "validate_metrics_csv",
    "write_curves",
    "write_metrics_csv",
    "write_sidecar",
]
