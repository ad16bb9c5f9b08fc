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
"""Fixtures for testing Decentralab."""

import pytest
from path import Path


@pytest.fixture
def path_tmp(tmpdir: str) -> Path:
    return Path(tmpdir)


@pytest.fixture
def uniform_nodes(path_tmp: Path) -> Path:
    """Node-day file with four nodes producing 25 blocks each on one day."""
    path = path_tmp / "nodes.csv"
    lines = ["chain_id,day,node_id,blocks"]
    lines.extend(f"eth,2022-09-15,n{i},25" for i in range(4))
    path.write_text("\n".join(lines) + "\n")
    return path
