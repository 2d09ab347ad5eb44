from .apo_logger import init_logger, logger
from .config_mgr import config, reload_config
from .report import CheckResult, Report, build_report, check_result, parse_report, summarize_checks

__all__ = [
    "config",
    "reload_config",
    "logger",
    "init_logger",
    "CheckResult",
    "Report",
    "build_report",
    "parse_report",
    "check_result",
    "summarize_checks",
]
