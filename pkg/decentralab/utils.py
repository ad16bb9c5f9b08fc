# Decentralab measures consensus decentralization and estimates the effect of shocks on it.
# Copyright 2025-2026 Toon Verstraelen
#
# This file is part of Decentralab.
#
# Decentralab is free software; you can redistribute it and/or
# modify it under the terms of the GNU General Public License
# as published by the Free Software Foundation; either version 3
# of the License, or (at your option) any later version.
#
# Decentralab is distributed in the hope that it will be useful,
# but WITHOUT ANY WARRANTY; without even the implied warranty of
# MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
# GNU General Public License for more details.
#
# You should have received a copy of the GNU General Public License
# along with this program; if not, see <http://www.gnu.org/licenses/>
#
# --
"""Utility functions and settings shared by all Decentralab modules."""

import hashlib
import logging
import os
from datetime import UTC, date, datetime, timedelta

from rich.console import Console
from rich.logging import RichHandler

__all__ = (
    "FW_MAX_ITER",
    "FW_TOL",
    "LOG_LEVEL",
    "RANK_TOL",
    "configure_logging",
    "date_range",
    "file_digest",
    "format_decimal",
    "month_key",
    "parse_day",
    "parse_timestamp",
)


LOG_LEVEL = os.getenv("DECENTRALAB_LOG", "WARNING").upper()
FW_MAX_ITER = int(os.getenv("DECENTRALAB_FW_MAX_ITER", "10000"))
FW_TOL = float(os.getenv("DECENTRALAB_FW_TOL", "1e-10"))
RANK_TOL = float(os.getenv("DECENTRALAB_RANK_TOL", "1e-10"))


def configure_logging(level: str | None = None, console: Console | None = None) -> logging.Logger:
    """Install a single rich handler on the package logger.

    Library modules only create loggers. The handler is installed by the command-line interface,
    so embedding applications keep full control over logging.

    Parameters
    ----------
    level
        A standard logging level name. Defaults to the `DECENTRALAB_LOG` environment variable.
    console
        Rich console to write log records to. Defaults to standard error.
    """
    if level is None:
        level = LOG_LEVEL
    logger = logging.getLogger("decentralab")
    numeric = logging.getLevelName(level.upper())
    if not isinstance(numeric, int):
        raise ValueError(f"Unknown log level '{level}' in DECENTRALAB_LOG.")
    logger.setLevel(numeric)
    for handler in list(logger.handlers):
        if isinstance(handler, RichHandler):
            logger.removeHandler(handler)
    if console is None:
        console = Console(stderr=True, highlight=False)
    handler = RichHandler(console=console, show_time=False, show_path=False)
    handler.setFormatter(logging.Formatter("%(message)s"))
    logger.addHandler(handler)
    return logger


def parse_day(text: str) -> date:
    """Parse an ISO-8601 calendar day, e.g. `2021-05-15`."""
    return date.fromisoformat(text.strip())


def parse_timestamp(text: str) -> datetime:
    """Parse an ISO-8601 timestamp and convert it to UTC.

    Naive timestamps are interpreted as UTC.
    A trailing `Z` is accepted on all supported Python versions.
    """
    text = text.strip()
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        return dt.replace(tzinfo=UTC)
    return dt.astimezone(UTC)


def date_range(first: date, last: date) -> list[date]:
    """All calendar days from `first` up to and including `last`."""
    return [first + timedelta(days=i) for i in range((last - first).days + 1)]


def month_key(day: date) -> str:
    """Calendar month of a day, used for month clusters and fixed effects."""
    return f"{day.year:04d}-{day.month:02d}"


def file_digest(path: str) -> str:
    """Return the SHA-256 hex digest of a file."""
    hasher = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            hasher.update(block)
    return hasher.hexdigest()


def format_decimal(value: float, digits: int = 9) -> str:
    """Format a float with a fixed number of significant digits.

    The result is the shortest representation of the rounded value,
    so `2` becomes `2.0` and `0.25` stays `0.25`.
    """
    return repr(float(f"{value:.{digits}g}"))
