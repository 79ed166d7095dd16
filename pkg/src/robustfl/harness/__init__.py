from .config import ConfigError, Scenario, load_config, parse_config, set_key, validate
from .runner import CSV_HEADER, RoundMetrics, RunResult, filter_metrics, metrics_csv, run_scenario

__all__ = [
    "CSV_HEADER",
    "ConfigError",
    "RoundMetrics",
    "RunResult",
    "Scenario",
    "filter_metrics",
    "load_config",
    "metrics_csv",
    "parse_config",
    "run_scenario",
    "set_key",
    "validate",
]
