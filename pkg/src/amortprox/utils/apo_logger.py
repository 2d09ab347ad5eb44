import logging
from datetime import datetime
from pathlib import Path

from amortprox.utils.config_mgr import config

logger = logging.getLogger("amortprox")


def init_logger(run_id: str) -> None:
    """Initialize the amortprox logger configuration."""

    # If logger already has handlers, clear them
    if logger.hasHandlers():
        logger.handlers.clear()

    formatter = logging.Formatter(fmt="%(asctime)s - %(levelname)s - %(message)s", datefmt="%m/%d/%Y %H:%M:%S")

    handlers: list[logging.Handler] = [logging.StreamHandler()]

    is_appending = False
    if config.logging_to_file:
        # Categorize logs by date
        log_dir = Path(config.logging_file_dir)
        now = datetime.now()
        day_log_dir = log_dir / now.strftime("%Y%m%d")
        day_log_dir.mkdir(parents=True, exist_ok=True)

        short_id = str(run_id)[:8]

        # One log per run id per day
        existing_files = sorted(day_log_dir.glob(f"*_{short_id}.log"))
        if existing_files:
            log_file_path = existing_files[-1]
            mode = "a"
            is_appending = True
        else:
            log_file_path = day_log_dir / f"{now.strftime('%H%M%S')}_{short_id}.log"
            mode = "w"

        handlers.append(logging.FileHandler(log_file_path, mode=mode, encoding="utf-8"))

    log_level = getattr(logging, config.logging_level.upper(), logging.INFO)
    logger.setLevel(log_level)

    for handler in handlers:
        handler.setFormatter(formatter)
        logger.addHandler(handler)

    if is_appending:
        logger.info(f"{'=' * 20} RESUMING RUN {'=' * 20}")
    else:
        logger.info(f"Run ID: {run_id}")
