# pylint: disable=missing-module-docstring
from __future__ import annotations

import logging
import sys

LOG_FORMAT = "%(asctime)s %(name)s [%(levelname)s] %(message)s"
VERBOSITY_LEVELS = (logging.CRITICAL, logging.WARNING, logging.INFO, logging.DEBUG)

logger = logging.getLogger(__name__)
logger.setLevel(logging.WARNING)
_default_handler = logging.StreamHandler(sys.stdout)
_default_handler.setFormatter(logging.Formatter(LOG_FORMAT))
logger.addHandler(_default_handler)

name = "crpmnet"  # pylint: disable=invalid-name


def set_stream_logger(name: str = "crpmnet", level: int = logging.DEBUG, format_string: str | None = None) -> None:
    """
    Replace the stream handlers of logger ``name`` with one stderr handler at ``level``. File handlers, such as the
    training log, stay attached.

        >>> import crpmnet
        >>> crpmnet.set_stream_logger("crpmnet.engine.training", logging.INFO)
    """
    target = logging.getLogger(name)
    for existing in list(target.handlers):
        if not isinstance(existing, logging.FileHandler):
            target.removeHandler(existing)
    stream = logging.StreamHandler()
    stream.setLevel(level)
    stream.setFormatter(logging.Formatter(format_string or LOG_FORMAT))
    target.setLevel(level)
    target.addHandler(stream)


def set_log_level(verbose: int) -> None:
    """Map click's -v count to a level: none is CRITICAL, -v WARNING, -vv INFO, -vvv or more DEBUG."""
    set_stream_logger(level=VERBOSITY_LEVELS[min(max(verbose, 0), len(VERBOSITY_LEVELS) - 1)])
