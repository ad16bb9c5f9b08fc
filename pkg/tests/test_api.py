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
"""Unit tests for decentralab.api."""

import pytest

from decentralab.api import decentralab_command
from decentralab.cli import REQUIRED, build_parser


def test_decentralab_command():
    assert decentralab_command("metrics", "--input", "nodes.csv", "--out", "results/") == (
        "decentralab metrics --input nodes.csv --out results/"
    )
    assert decentralab_command("did", "--out", "my results") == "decentralab did --out 'my results'"


def test_decentralab_command_unknown():
    with pytest.raises(ValueError, match="Unknown Decentralab command"):
        decentralab_command("teleport")


@pytest.mark.parametrize("command", sorted(REQUIRED))
def test_every_command_has_a_parser(command: str):
    args = build_parser().parse_args([command])
    assert args.command == command
    for dest in REQUIRED[command]:
        assert getattr(args, dest) is None
