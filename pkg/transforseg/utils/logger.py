import logging
import os
import sys
from typing import Any

# Sentinel to prevent multiple configurations
_logging_configured = False

DEFAULT_LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
DEFAULT_LOG_LEVEL = "INFO"


def setup_logging(config: dict[str, Any], project_root: str, level_override: str | None = None):
    """Configures the root logger based on settings from the config dictionary.

    Console output goes to stderr; stdout carries only command results.

    Args:
        config: The loaded configuration dictionary.
        project_root: Directory that a relative ``logging.file`` is resolved against
            when the config has no pre-resolved ``file_abs``.
        level_override: Level name taking precedence over ``logging.level``.
    """
    global _logging_configured
    if _logging_configured:
        return

    # --- Extract Settings from Config ---
    log_cfg = config.get("logging", {})
    log_level_str = level_override or log_cfg.get("level", DEFAULT_LOG_LEVEL)
    log_file_abs = log_cfg.get("file_abs")
    if not log_file_abs and log_cfg.get("file"):
        log_file_abs = os.path.abspath(os.path.join(project_root, log_cfg["file"]))

    # --- Get Log Level ---
    level = logging.getLevelName(log_level_str.upper())
    if not isinstance(level, int):
        print(
            f"Warning: Invalid log level '{log_level_str}' in config. Defaulting to {DEFAULT_LOG_LEVEL}.",
            file=sys.stderr,
        )
        level = logging.INFO

    formatter = logging.Formatter(DEFAULT_LOG_FORMAT)

    root_logger = logging.getLogger()
    root_logger.setLevel(level)
    for handler in root_logger.handlers[:]:
        root_logger.removeHandler(handler)
        handler.close()

    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setLevel(level)
    console_handler.setFormatter(formatter)
    root_logger.addHandler(console_handler)

    # --- Setup File Handler (If specified) ---
    if log_file_abs:
        try:
            log_dir = os.path.dirname(log_file_abs)
            if log_dir:
                os.makedirs(log_dir, exist_ok=True)
            file_handler = logging.FileHandler(log_file_abs, mode="a")
            file_handler.setLevel(level)
            file_handler.setFormatter(formatter)
            root_logger.addHandler(file_handler)
        except OSError as e:
            print(f"Error setting up file logging to {log_file_abs}: {e}", file=sys.stderr)
            # Continue with console logging only

    _logging_configured = True


def reset_logging() -> None:
    """Allow the next ``setup_logging`` call to reconfigure (used by tests)."""
    global _logging_configured
    _logging_configured = False
