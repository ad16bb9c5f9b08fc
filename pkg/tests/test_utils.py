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
"""Unit tests for decentralab.utils."""

import logging
from datetime import UTC, date, datetime

import pytest
from path import Path
from rich.logging import RichHandler

from decentralab.utils import (
    configure_logging,
    date_range,
    file_digest,
    format_decimal,
    month_key,
    parse_day,
    parse_timestamp,
)


def test_parse_day():
    assert parse_day(" 2021-05-15 ") == date(2021, 5, 15)
    with pytest.raises(ValueError):
        parse_day("15/05/2021")


def test_parse_timestamp():
    expected = datetime(2022, 9, 15, 6, 42, 42, tzinfo=UTC)
    assert parse_timestamp("2022-09-15T06:42:42Z") == expected
    assert parse_timestamp("2022-09-15T06:42:42") == expected
    assert parse_timestamp("2022-09-15T08:42:42+02:00") == expected
    assert parse_timestamp("2022-09-15T23:30:00-02:00").date() == date(2022, 9, 16)


def test_date_range():
    days = date_range(date(2021, 2, 27), date(2021, 3, 2))
    assert days == [date(2021, 2, 27), date(2021, 2, 28), date(2021, 3, 1), date(2021, 3, 2)]
    assert date_range(date(2021, 3, 2), date(2021, 3, 1)) == []


def test_month_key():
    assert month_key(date(2021, 5, 1)) == "2021-05"
    assert month_key(date(1999, 12, 31)) == "1999-12"


def test_file_digest(path_tmp: Path):
    path = path_tmp / "empty.txt"
    path.write_text("")
    assert file_digest(path) == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"


@pytest.mark.parametrize(
    ("value", "text"),
    [
        (2.0, "2.0"),
        (0.25, "0.25"),
        (0.0, "0.0"),
        (1 / 3, "0.333333333"),
        (1.5849625007211563, "1.5849625"),
        (-0.0001234567891234, "-0.000123456789"),
    ],
)
def test_format_decimal(value, text):
    assert format_decimal(value) == text


def test_configure_logging():
    logger = configure_logging("info")
    configure_logging("debug")
    assert logger.level == logging.DEBUG
    assert sum(isinstance(h, RichHandler) for h in logger.handlers) == 1
    with pytest.raises(ValueError):
        configure_logging("chatty")
    configure_logging("warning")
