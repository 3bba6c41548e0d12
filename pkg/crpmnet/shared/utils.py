"""Just some utility functions that don't fit neatly into other categories"""

from __future__ import annotations

import functools
import json
import logging
import os
from pathlib import Path
from typing import Any, Callable

import click
import yaml

from crpmnet.shared.constants import THREADS_ENV_VAR
from crpmnet.shared.exceptions import ConfigError, CrpmError

logger = logging.getLogger(__name__)
OK_GREEN = "\033[92m"
ERROR_RED = "\033[91m"
END = "\033[0m"


def parse_size(size: str) -> tuple[int, int]:
    """
    Parse a HxW size string.

    Case 1:
        Input: 192x192
        Output: (192, 192)
    Case 2:
        Input: 64X128
        Output: (64, 128)
    """
    height, sep, width = size.lower().partition("x")
    if not sep or not height.isdigit() or not width.isdigit():
        raise ValueError(f"Expected a size like 192x192, got {size!r}")
    return int(height), int(width)


def get_thread_count() -> int:
    """Worker count for tile-level parallelism. CRPM_THREADS=0 or unset means one worker per CPU."""
    raw = os.environ.get(THREADS_ENV_VAR, "0").strip() or "0"
    try:
        threads = int(raw)
    except ValueError as v_e:
        raise ConfigError(f"{THREADS_ENV_VAR} must be an integer, got {raw!r}") from v_e
    if threads < 0:
        raise ConfigError(f"{THREADS_ENV_VAR} must be >= 0, got {threads}")
    if threads == 0:
        return os.cpu_count() or 1
    return threads


def read_yaml_file(filename: str) -> dict[str, Any]:
    """Reads a YAML file, safe loads, and returns the dictionary"""
    cfg: dict[str, Any] = yaml.safe_load(Path(filename).read_text(encoding="utf-8")) or {}
    return cfg


def read_json_file(filename: str) -> dict[str, Any]:
    """Reads a JSON file and returns the dictionary"""
    cfg: dict[str, Any] = json.loads(Path(filename).read_text(encoding="utf-8"))
    return cfg


def print_green(string: str) -> None:
    """Print green text"""
    click.echo(f"{OK_GREEN}{string}{END}")


def print_red(string: str) -> None:
    """Print red text"""
    click.echo(f"{ERROR_RED}{string}{END}")


def write_file(file: str, content: str) -> None:
    """Write content to file"""
    if os.path.exists(file):
        logger.debug("%s exists. Removing the file and replacing its contents.", file)
        os.remove(file)
    Path(file).write_text(content, encoding="utf-8")


def write_json_to_file(file: str, content: Any) -> None:
    """Write JSON content to file"""
    if os.path.exists(file):
        logger.debug("%s exists. Removing the file and replacing its contents.", file)
        os.remove(file)

    Path(file).write_text(json.dumps(content, indent=4), encoding="utf-8")


def exit_on_error(func: Callable[..., Any]) -> Callable[..., Any]:
    """
    Wrap a click command so library errors end the process with their exit code and one machine-readable line on
    stderr, e.g. ``error=ConfigError exit=2 message="At least 3 looks are needed"``. IO errors exit with 1.
    """

    @functools.wraps(func)
    def wrapper(*args: Any, **kwargs: Any) -> Any:
        try:
            return func(*args, **kwargs)
        except CrpmError as err:
            _fail(err, err.exit_code)
        except OSError as err:
            _fail(err, 1)
        return None

    return wrapper


def _fail(err: Exception, exit_code: int) -> None:
    message = str(err).replace('"', "'")
    logger.debug("Command failed", exc_info=err)
    click.echo(f'error={type(err).__name__} exit={exit_code} message="{message}"', err=True)
    raise click.exceptions.Exit(exit_code)
