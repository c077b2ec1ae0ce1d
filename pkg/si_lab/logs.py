# si_lab/logs.py
import logging
from typing import Union

from rich.console import Console
from rich.logging import RichHandler

ROOT_LOGGER = "si_lab"

# Shared stderr console so log lines never interleave with summaries on stdout.
console = Console(stderr=True)


def configure_logging(level: Union[int, str] = "WARNING") -> logging.Logger:
    """
    Install the rich handler on the package logger

    Args:
        level: Logging level name or number

    Returns:
        The configured package logger
    """
    logger = logging.getLogger(ROOT_LOGGER)
    if isinstance(level, str):
        level = logging.getLevelName(level.upper())
        if not isinstance(level, int):
            level = logging.WARNING
    logger.setLevel(level)
    if not any(isinstance(h, RichHandler) for h in logger.handlers):
        handler = RichHandler(console=console, show_path=False, markup=False, log_time_format="[%X]")
        handler.setFormatter(logging.Formatter("%(name)s: %(message)s"))
        logger.addHandler(handler)
    return logger
