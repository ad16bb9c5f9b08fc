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
"""StepUp API functions to include Decentralab commands in a workflow."""

import shlex
from collections.abc import Collection

from stepup.core.api import run
from stepup.core.path import StrPath, coerce_paths

from .cli import REQUIRED

__all__ = ("decentralab", "decentralab_command")


def decentralab_command(command: str, *args: StrPath) -> str:
    """Return the shell command that runs one Decentralab subcommand.

    Raises
    ------
    ValueError
        When the subcommand does not exist.
    """
    if command not in REQUIRED:
        raise ValueError(
            f"Unknown Decentralab command '{command}'. Choose from {', '.join(REQUIRED)}."
        )
    return shlex.join(["decentralab", command, *(str(arg) for arg in args)])


def decentralab(
    command: str,
    *args: StrPath,
    inp: Collection[StrPath] | StrPath = (),
    out: Collection[StrPath] | StrPath = (),
    workdir: StrPath = "./",
    optional: bool = False,
):
    """Run a Decentralab command as a StepUp step.

    The input files are not derived from the arguments,
    so all files read by the command must be listed in `inp`
    and all artifacts written to the `--out` directory in `out`.
    The step is rerun when `DECENTRALAB_LOG` changes.

    See `run()` documentation in StepUp Core for the return value.

    Parameters
    ----------
    command
        One of the subcommands of the `decentralab` script, e.g. `"metrics"` or `"sdid"`.
    args
        Command-line arguments passed to the subcommand.

    Examples
    --------
    ```python
    decentralab(
        "metrics", "--input", "nodes.csv", "--out", "results/",
        inp="nodes.csv", out=["results/metrics.csv", "results/metrics.svg"],
    )
    ```
    """
    return run(
        decentralab_command(command, *args),
        inp=coerce_paths(inp),
        env=["DECENTRALAB_LOG"],
        out=coerce_paths(out),
        workdir=workdir,
        optional=optional,
    )
