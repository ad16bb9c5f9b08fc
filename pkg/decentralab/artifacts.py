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
"""The artifact header format and utilities to read and write artifacts atomically.

Every file written by the command-line interface starts with a provenance header:
the format version, the Decentralab version, the command line and the digests of all inputs.
The header contains no timestamps, so reruns on identical inputs give identical bytes.
"""

import json
import os
import shlex
import tempfile
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from importlib.metadata import PackageNotFoundError, version

from .utils import file_digest

__all__ = (
    "FIRST_LINE",
    "ArtifactError",
    "Provenance",
    "atomic_write",
    "check_artifact_version",
    "read_provenance",
    "tool_version",
    "write_json_artifact",
    "write_svg_artifact",
    "write_text_artifact",
)

FIRST_LINE = "# decentralab artifact format version 1"


class ArtifactError(ValueError):
    """An artifact file has an unexpected header or cannot be written."""


def tool_version() -> str:
    """Return the installed Decentralab version."""
    try:
        return version("decentralab")
    except PackageNotFoundError:
        return "0.0.0"


@dataclass(frozen=True)
class Provenance:
    """Information embedded in the header of every artifact."""

    command: tuple[str, ...]
    """The command-line arguments that produced the artifact."""

    inputs: tuple[tuple[str, str], ...] = field(default=())
    """Pairs of (SHA-256 digest, path) for all input files."""

    version: str = field(default_factory=tool_version)

    @classmethod
    def from_inputs(cls, command: Sequence[str], paths: Iterable[str]) -> "Provenance":
        """Compute digests of the given input files."""
        inputs = tuple((file_digest(path), str(path)) for path in sorted({str(p) for p in paths}))
        return cls(tuple(str(word) for word in command), inputs)

    def comment_lines(self) -> list[str]:
        """Header lines, each starting with `#`."""
        lines = [
            FIRST_LINE,
            f"# decentralab {self.version}",
            f"# command: {shlex.join(self.command)}",
        ]
        lines.extend(f"# input {digest} {path}" for digest, path in self.inputs)
        return lines

    def to_dict(self) -> dict:
        return {
            "format": FIRST_LINE[2:],
            "version": self.version,
            "command": list(self.command),
            "inputs": [{"sha256": digest, "path": path} for digest, path in self.inputs],
        }


def atomic_write(path: str, text: str):
    """Write a text file atomically: temporary file, fsync, then rename."""
    dirname = os.path.dirname(os.path.abspath(path))
    os.makedirs(dirname, exist_ok=True)
    fd, path_tmp = tempfile.mkstemp(prefix=".decentralab-", dir=dirname)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(path_tmp, path)
    except BaseException:
        if os.path.exists(path_tmp):
            os.remove(path_tmp)
        raise


def write_text_artifact(path: str, lines: Iterable[str], provenance: Provenance | None = None):
    """Write a line-based artifact, prefixed with the provenance header (if given)."""
    all_lines = [] if provenance is None else provenance.comment_lines()
    all_lines.extend(lines)
    atomic_write(path, "".join(f"{line}\n" for line in all_lines))


def write_json_artifact(path: str, data: dict, provenance: Provenance | None = None):
    """Write a JSON artifact. The provenance is stored under the `provenance` key."""
    if provenance is not None:
        data = {"provenance": provenance.to_dict(), **data}
    atomic_write(path, json.dumps(data, indent=2, sort_keys=False) + "\n")


def write_svg_artifact(path: str, svg: str, provenance: Provenance | None = None):
    """Write an SVG document, with the provenance in an XML comment after the declaration."""
    if provenance is not None:
        comment = "<!--\n{}\n-->\n".format(
            "\n".join(line.replace("--", "- -") for line in provenance.comment_lines())
        )
        if svg.startswith("<?xml"):
            first, rest = svg.split("\n", 1)
            svg = f"{first}\n{comment}{rest}"
        else:
            svg = comment + svg
    atomic_write(path, svg)


def check_artifact_version(line: str):
    """Validate the artifact version, abort if there is a mismatch."""
    if line.rstrip("\n") != FIRST_LINE:
        raise ArtifactError(
            f"The first line of the artifact is wrong. Expected: '{FIRST_LINE}' Found: '{line}'"
        )


def read_provenance(path: str) -> Provenance:
    """Read the provenance header from a line-based artifact."""
    with open(path, encoding="utf-8") as fh:
        try:
            check_artifact_version(next(fh))
        except StopIteration as exc:
            raise ArtifactError(f"Artifact {path} is empty.") from exc
        tool = None
        command = None
        inputs = []
        for line in fh:
            if not line.startswith("#"):
                break
            words = line[1:].strip().split(maxsplit=2)
            if len(words) == 2 and words[0] == "decentralab":
                tool = words[1]
            elif len(words) >= 1 and words[0] == "command:":
                command = tuple(shlex.split(line[1:].strip()[len("command:") :]))
            elif len(words) == 3 and words[0] == "input":
                inputs.append((words[1], words[2]))
    if tool is None or command is None:
        raise ArtifactError(f"Incomplete provenance header in {path}.")
    return Provenance(command, tuple(inputs), tool)
