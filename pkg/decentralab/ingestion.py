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
"""Parsing of block-production exports and label registries, and panel assembly.

All days are UTC calendar days.
A block belongs to the day of its timestamp in UTC.
Zero-production rows are rejected at ingest, so downstream code may assume positive counts.
"""

import csv
import json
import logging
import math
from collections.abc import Callable, Iterable, Iterator, Mapping
from dataclasses import dataclass, field
from datetime import date, datetime
from typing import Protocol

from .artifacts import Provenance, write_text_artifact
from .utils import date_range, parse_day, parse_timestamp

__all__ = (
    "NODE_DAY_COLUMNS",
    "SHARE_TOLERANCE",
    "ChainDayValues",
    "IngestionError",
    "LabelRegistry",
    "NodeDayRecord",
    "Panel",
    "PanelObservation",
    "RawBlockRecord",
    "RewardShare",
    "SeriesRow",
    "Transfer",
    "assemble_panel",
    "forward_fill",
    "load_label_registry",
    "parse_node_day_file",
    "parse_raw_block_file",
    "read_series_file",
    "restrict_panel",
    "write_node_day_file",
    "write_series_file",
)


logger = logging.getLogger(__name__)

NODE_DAY_COLUMNS = ("chain_id", "day", "node_id", "blocks")

# Reward shares summing to within this tolerance of one are renormalized at parse time.
SHARE_TOLERANCE = 1e-6


class IngestionError(ValueError):
    """An input file or dataset violates the data model."""


#
# Domain types
#


@dataclass(frozen=True)
class RewardShare:
    address: str
    share: float


@dataclass(frozen=True)
class Transfer:
    """A value transfer inside a block, in order of appearance."""

    sender: str
    recipient: str
    amount: float


@dataclass(frozen=True)
class RawBlockRecord:
    """One block with its reward recipients and reward-transfer transactions."""

    chain_id: str
    height: int
    timestamp: datetime
    reward_recipients: tuple[RewardShare, ...]
    transfers: tuple[Transfer, ...] = ()

    def __post_init__(self):
        if self.height < 0:
            raise IngestionError(f"Block height must be non-negative, got {self.height}.")
        if len(self.reward_recipients) == 0:
            raise IngestionError(f"Block {self.height} of {self.chain_id} has no reward recipient.")
        total = math.fsum(rs.share for rs in self.reward_recipients)
        if abs(total - 1.0) > 1e-9:
            raise IngestionError(
                f"Reward shares of block {self.height} of {self.chain_id} sum to {total!r}."
            )

    @property
    def day(self) -> date:
        """UTC calendar day of the block."""
        return self.timestamp.date()


@dataclass(frozen=True)
class NodeDayRecord:
    """Fractional number of blocks produced by one node on one day."""

    chain_id: str
    day: date
    node_id: str
    blocks: float

    def __post_init__(self):
        if not (self.blocks > 0 and math.isfinite(self.blocks)):
            raise IngestionError(
                f"Node {self.node_id} of {self.chain_id} on {self.day} "
                f"must have a positive block count, got {self.blocks!r}."
            )

    @property
    def key(self) -> tuple[str, date, str]:
        return self.chain_id, self.day, self.node_id


@dataclass(frozen=True)
class LabelRegistry:
    """Address labels used for proposer resolution and knockout analysis."""

    mev_builders: frozenset[str] = frozenset()
    builder_alternates: Mapping[str, str] = field(default_factory=dict)
    """Maps an alternate address of a builder to its canonical builder address."""
    builder_proposers: frozenset[str] = frozenset()
    """Builders that are also proposers."""
    known_proposers: frozenset[str] = frozenset()
    node_groups: Mapping[str, str] = field(default_factory=dict)
    """Group tag per node, e.g. `CEX`, `staking-pool`, `MEV` or `other`."""

    def __post_init__(self):
        unknown = sorted(set(self.builder_alternates.values()) - self.mev_builders)
        if len(unknown) > 0:
            raise IngestionError(
                f"Builder alternates point to addresses that are not MEV builders: {unknown}"
            )
        unknown = sorted(self.builder_proposers - self.mev_builders)
        if len(unknown) > 0:
            raise IngestionError(f"Builder proposers that are not MEV builders: {unknown}")

    def canonical(self, address: str) -> str:
        """Map an alternate builder address to its canonical builder address."""
        return self.builder_alternates.get(address, address)

    def is_builder(self, address: str) -> bool:
        return self.canonical(address) in self.mev_builders

    def group(self, node_id: str) -> str:
        """Group tag of a node, `other` when unlabeled."""
        return self.node_groups.get(node_id, "other")


class ChainDayValues(Protocol):
    """Anything carrying named values for one chain on one day, e.g. a metrics row."""

    chain_id: str
    day: date

    def as_values(self) -> Mapping[str, float]: ...


@dataclass(frozen=True)
class SeriesRow:
    """A row of a generic `chain_id,day,<columns>` table."""

    chain_id: str
    day: date
    values: Mapping[str, float]

    def as_values(self) -> Mapping[str, float]:
        return self.values


@dataclass(frozen=True)
class PanelObservation:
    """One (chain, day) row with outcome values and design variables."""

    chain_id: str
    day: date
    values: Mapping[str, float]
    chain_indicator: int
    after: int
    during: int
    day_index: int
    """Signed number of days since the event date."""
    exposure: float
    covariates: Mapping[str, float] = field(default_factory=dict)

    def value(self, name: str) -> float:
        try:
            return self.values[name]
        except KeyError as exc:
            raise IngestionError(
                f"No value '{name}' for {self.chain_id} on {self.day}. "
                f"Available: {sorted(self.values)}"
            ) from exc


@dataclass(frozen=True)
class Panel:
    """Observations of one event study: one treated chain, one event date."""

    observations: tuple[PanelObservation, ...]
    event_date: date
    treated_chain: str
    during_end: date | None = None
    gaps: Mapping[str, tuple[date, ...]] = field(default_factory=dict)
    """Missing days per chain. Gaps are reported, never imputed."""

    def __iter__(self) -> Iterator[PanelObservation]:
        return iter(self.observations)

    def __len__(self) -> int:
        return len(self.observations)

    @property
    def chains(self) -> tuple[str, ...]:
        return tuple(sorted({obs.chain_id for obs in self.observations}))

    @property
    def controls(self) -> tuple[str, ...]:
        return tuple(chain for chain in self.chains if chain != self.treated_chain)

    @property
    def days(self) -> tuple[date, ...]:
        return tuple(sorted({obs.day for obs in self.observations}))

    @property
    def balanced(self) -> bool:
        return all(len(missing) == 0 for missing in self.gaps.values())

    def series(self, chain_id: str, name: str) -> dict[date, float]:
        """Values of one outcome for one chain, keyed by day."""
        return {obs.day: obs.value(name) for obs in self.observations if obs.chain_id == chain_id}

    def select(self, predicate: Callable[[PanelObservation], bool]) -> "Panel":
        """Return a panel with the observations for which the predicate holds."""
        return Panel(
            tuple(obs for obs in self.observations if predicate(obs)),
            self.event_date,
            self.treated_chain,
            self.during_end,
            self.gaps,
        )


#
# Node-day files
#


def _iter_data_lines(path: str) -> Iterator[tuple[int, str]]:
    """Yield (line number, line) pairs, skipping blank and comment lines."""
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            stripped = line.strip()
            if stripped == "" or stripped.startswith("#"):
                continue
            yield lineno, line.rstrip("\n")


def _parse_blocks(text, where: str) -> float:
    try:
        blocks = float(text)
    except (TypeError, ValueError) as exc:
        raise IngestionError(f"{where}: cannot parse block count {text!r}.") from exc
    if not math.isfinite(blocks) or blocks < 0:
        raise IngestionError(f"{where}: block count must be a non-negative number, got {text!r}.")
    return blocks


def parse_node_day_file(path: str, fmt: str = "csv", delimiter: str = ",") -> list[NodeDayRecord]:
    """Parse a node-day file into validated records.

    Parameters
    ----------
    path
        The file to parse. Leading `#` lines (artifact headers) are skipped.
    fmt
        `csv` for delimiter-separated text with a header declaring
        `chain_id`, `day`, `node_id` and `blocks`, or `jsonl` for one JSON object per line.
    delimiter
        Field separator of the `csv` format.

    Returns
    -------
    records
        Records in file order. Rows with zero blocks are dropped with a warning.
    """
    if fmt == "csv":
        rows = _iter_csv_node_days(path, delimiter)
    elif fmt == "jsonl":
        rows = _iter_jsonl_node_days(path)
    else:
        raise IngestionError(f"Unsupported node-day format '{fmt}'. Use 'csv' or 'jsonl'.")

    records = []
    seen = {}
    dropped = 0
    for lineno, chain_id, day, node_id, blocks in rows:
        key = (chain_id, day, node_id)
        if key in seen:
            raise IngestionError(
                f"{path}: duplicate (chain_id, day, node_id) = "
                f"({chain_id}, {day.isoformat()}, {node_id}) on lines {seen[key]} and {lineno}."
            )
        seen[key] = lineno
        if blocks == 0:
            dropped += 1
            continue
        records.append(NodeDayRecord(chain_id, day, node_id, blocks))
    if dropped > 0:
        logger.warning("Dropped %d zero-production rows from %s", dropped, path)
    return records


def _iter_csv_node_days(path: str, delimiter: str) -> Iterator[tuple]:
    columns = None
    for lineno, line in _iter_data_lines(path):
        fields = next(csv.reader([line], delimiter=delimiter))
        if columns is None:
            columns = [name.strip() for name in fields]
            missing = [name for name in NODE_DAY_COLUMNS if name not in columns]
            if len(missing) > 0:
                raise IngestionError(f"{path}:{lineno}: header lacks columns {missing}.")
            continue
        where = f"{path}:{lineno}"
        if len(fields) != len(columns):
            raise IngestionError(f"{where}: expected {len(columns)} fields, found {len(fields)}.")
        row = dict(zip(columns, (value.strip() for value in fields), strict=True))
        yield (lineno, *_validate_node_day(row, where))
    if columns is None:
        raise IngestionError(f"{path}: no header line found.")


def _iter_jsonl_node_days(path: str) -> Iterator[tuple]:
    for lineno, line in _iter_data_lines(path):
        where = f"{path}:{lineno}"
        try:
            row = json.loads(line)
        except json.JSONDecodeError as exc:
            raise IngestionError(f"{where}: invalid JSON: {exc.msg}.") from exc
        if not isinstance(row, dict):
            raise IngestionError(f"{where}: expected a JSON object.")
        yield (lineno, *_validate_node_day(row, where))


def _validate_node_day(row: Mapping, where: str) -> tuple[str, date, str, float]:
    missing = [name for name in NODE_DAY_COLUMNS if name not in row]
    if len(missing) > 0:
        raise IngestionError(f"{where}: missing fields {missing}.")
    chain_id = str(row["chain_id"]).strip()
    node_id = str(row["node_id"]).strip()
    if chain_id == "" or node_id == "":
        raise IngestionError(f"{where}: empty chain_id or node_id.")
    try:
        day = parse_day(str(row["day"]))
    except ValueError as exc:
        raise IngestionError(f"{where}: cannot parse day {row['day']!r}.") from exc
    return chain_id, day, node_id, _parse_blocks(row["blocks"], where)


def write_node_day_file(
    path: str,
    records: Iterable[NodeDayRecord],
    fmt: str = "csv",
    provenance: Provenance | None = None,
):
    """Write node-day records such that `parse_node_day_file` returns them unchanged."""
    if fmt == "csv":
        lines = [",".join(NODE_DAY_COLUMNS)]
        for record in records:
            for text in (record.chain_id, record.node_id):
                if any(char in text for char in ',"\n'):
                    raise IngestionError(f"Identifier {text!r} cannot be written as plain CSV.")
            lines.append(
                f"{record.chain_id},{record.day.isoformat()},{record.node_id},{record.blocks!r}"
            )
    elif fmt == "jsonl":
        lines = [
            json.dumps(
                {
                    "chain_id": record.chain_id,
                    "day": record.day.isoformat(),
                    "node_id": record.node_id,
                    "blocks": record.blocks,
                }
            )
            for record in records
        ]
    else:
        raise IngestionError(f"Unsupported node-day format '{fmt}'. Use 'csv' or 'jsonl'.")
    write_text_artifact(path, lines, provenance)


#
# Raw block files
#


def parse_raw_block_file(path: str) -> list[RawBlockRecord]:
    """Parse a JSON-lines file with one block per line.

    Each line has the keys `chain_id`, `height`, `timestamp` (ISO-8601),
    `reward_recipients` (array of `{address, share}`)
    and `transfers` (array of `{from, to, amount}`, optional).
    Reward shares that sum to one within `SHARE_TOLERANCE` are renormalized.
    """
    blocks = []
    heights = {}
    for lineno, line in _iter_data_lines(path):
        where = f"{path}:{lineno}"
        try:
            data = json.loads(line)
        except json.JSONDecodeError as exc:
            raise IngestionError(f"{where}: invalid JSON: {exc.msg}.") from exc
        block = _parse_raw_block(data, where)
        key = (block.chain_id, block.height)
        if key in heights:
            raise IngestionError(
                f"{path}: block height {block.height} of {block.chain_id} appears "
                f"on lines {heights[key]} and {lineno}."
            )
        heights[key] = lineno
        blocks.append(block)
    return blocks


def _parse_raw_block(data, where: str) -> RawBlockRecord:
    if not isinstance(data, dict):
        raise IngestionError(f"{where}: expected a JSON object.")
    required = ("chain_id", "height", "timestamp", "reward_recipients")
    missing = [name for name in required if name not in data]
    if len(missing) > 0:
        raise IngestionError(f"{where}: missing keys {missing}.")
    height = data["height"]
    if not isinstance(height, int) or isinstance(height, bool) or height < 0:
        raise IngestionError(f"{where}: height must be a non-negative integer, got {height!r}.")
    chain_id = str(data["chain_id"])
    try:
        timestamp = parse_timestamp(str(data["timestamp"]))
    except ValueError as exc:
        raise IngestionError(f"{where}: block {height}: cannot parse timestamp.") from exc

    recipients = data["reward_recipients"]
    if not isinstance(recipients, list) or len(recipients) == 0:
        raise IngestionError(f"{where}: block {height} has no reward recipients.")
    addresses = []
    shares = []
    for item in recipients:
        try:
            address = str(item["address"])
            share = float(item["share"])
        except (KeyError, TypeError, ValueError) as exc:
            raise IngestionError(f"{where}: block {height}: malformed reward recipient.") from exc
        if not (0.0 <= share <= 1.0 + SHARE_TOLERANCE):
            raise IngestionError(f"{where}: block {height}: share {share!r} outside [0, 1].")
        addresses.append(address)
        shares.append(share)
    total = math.fsum(shares)
    if abs(total - 1.0) > SHARE_TOLERANCE:
        raise IngestionError(
            f"{where}: reward shares of block {height} of {chain_id} sum to {total!r}."
        )
    reward_recipients = tuple(
        RewardShare(address, share / total)
        for address, share in zip(addresses, shares, strict=True)
    )

    transfers = []
    for item in data.get("transfers", []):
        try:
            transfer = Transfer(str(item["from"]), str(item["to"]), float(item["amount"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise IngestionError(f"{where}: block {height}: malformed transfer.") from exc
        if not transfer.amount >= 0:
            raise IngestionError(
                f"{where}: block {height}: negative transfer amount {transfer.amount!r}."
            )
        transfers.append(transfer)
    return RawBlockRecord(chain_id, height, timestamp, reward_recipients, tuple(transfers))


#
# Label registry
#


def load_label_registry(path: str) -> LabelRegistry:
    """Load a label registry from a JSON document.

    The document has the keys `mev_builders`, `builder_alternates`, `builder_proposers`,
    `known_proposers` and `node_groups`. Missing keys default to empty collections.
    """
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise IngestionError(f"{path}: invalid JSON: {exc.msg}.") from exc
    if not isinstance(data, dict):
        raise IngestionError(f"{path}: the label registry must be a JSON object.")
    unknown = sorted(
        set(data)
        - {
            "mev_builders",
            "builder_alternates",
            "builder_proposers",
            "known_proposers",
            "node_groups",
        }
    )
    if len(unknown) > 0:
        raise IngestionError(f"{path}: unknown keys {unknown} in label registry.")
    return LabelRegistry(
        mev_builders=frozenset(data.get("mev_builders", [])),
        builder_alternates=dict(data.get("builder_alternates", {})),
        builder_proposers=frozenset(data.get("builder_proposers", [])),
        known_proposers=frozenset(data.get("known_proposers", [])),
        node_groups=dict(data.get("node_groups", {})),
    )


#
# Generic series tables
#


def read_series_file(path: str, delimiter: str = ",") -> list[SeriesRow]:
    """Read a `chain_id,day,<columns>...` table, e.g. metrics, prices or hashrates."""
    columns = None
    rows = []
    seen = {}
    for lineno, line in _iter_data_lines(path):
        fields = [value.strip() for value in next(csv.reader([line], delimiter=delimiter))]
        if columns is None:
            columns = fields
            if columns[:2] != ["chain_id", "day"] or len(columns) < 3:
                raise IngestionError(
                    f"{path}:{lineno}: header must start with 'chain_id,day' "
                    "followed by at least one value column."
                )
            continue
        where = f"{path}:{lineno}"
        if len(fields) != len(columns):
            raise IngestionError(f"{where}: expected {len(columns)} fields, found {len(fields)}.")
        try:
            day = parse_day(fields[1])
            values = {name: float(text) for name, text in zip(columns[2:], fields[2:], strict=True)}
        except ValueError as exc:
            raise IngestionError(f"{where}: {exc}") from exc
        key = (fields[0], day)
        if key in seen:
            raise IngestionError(
                f"{path}: duplicate (chain_id, day) = ({fields[0]}, {day.isoformat()}) "
                f"on lines {seen[key]} and {lineno}."
            )
        seen[key] = lineno
        rows.append(SeriesRow(fields[0], day, values))
    if columns is None:
        raise IngestionError(f"{path}: no header line found.")
    return rows


def write_series_file(
    path: str,
    rows: Iterable[ChainDayValues],
    columns: Iterable[str],
    provenance: Provenance | None = None,
):
    """Write a generic series table with full float precision."""
    columns = list(columns)
    lines = [",".join(["chain_id", "day", *columns])]
    for row in rows:
        values = row.as_values()
        lines.append(
            ",".join([row.chain_id, row.day.isoformat(), *(repr(values[c]) for c in columns)])
        )
    write_text_artifact(path, lines, provenance)


def forward_fill(observations: Mapping[date, float], first: date, last: date) -> dict[date, float]:
    """Expand sparse (e.g. weekly) observations to daily values.

    Each day gets the most recent observation on or before that day.
    Days before the first observation are left out.
    """
    result = {}
    current = None
    for day in date_range(first, last):
        if day in observations:
            current = observations[day]
        if current is None:
            earlier = [d for d in observations if d < day]
            if len(earlier) > 0:
                current = observations[max(earlier)]
        if current is not None:
            result[day] = current
    return result


#
# Panel assembly
#


def assemble_panel(
    rows: Iterable[ChainDayValues],
    event_date: date,
    treated_chain: str,
    during_end: date | None = None,
    exposures: Mapping[str, float | Mapping[date, float]] | None = None,
    covariates: Mapping[str, Mapping[str, Mapping[date, float]]] | None = None,
) -> Panel:
    """Build a panel for one event from per-chain, per-day rows.

    Parameters
    ----------
    rows
        Per-chain, per-day values (e.g. metrics rows) for treated and control chains.
    event_date
        The treatment date. `day_index` is zero on this day.
    treated_chain
        The chain with `chain_indicator = 1`.
    during_end
        When given, `during = 1` on `[event_date, during_end]`
        and `after = 1` only on days after `during_end`.
        Otherwise, `after = 1` from `event_date` onward.
    exposures
        Per chain, either a constant exposure or a time-varying exposure keyed by day.
        Chains without an entry get exposure zero.
    covariates
        Per covariate name, per chain, a value for every day of that chain.

    Returns
    -------
    panel
        Observations sorted by chain and day, and a per-chain gap report.
    """
    by_chain: dict[str, dict[date, Mapping[str, float]]] = {}
    for row in rows:
        chain_rows = by_chain.setdefault(row.chain_id, {})
        if row.day in chain_rows:
            raise IngestionError(f"Duplicate row for {row.chain_id} on {row.day.isoformat()}.")
        chain_rows[row.day] = dict(row.as_values())
    if treated_chain not in by_chain:
        raise IngestionError(
            f"Treated chain '{treated_chain}' is absent. Chains found: {sorted(by_chain)}"
        )
    all_days = sorted({day for chain_rows in by_chain.values() for day in chain_rows})
    first, last = all_days[0], all_days[-1]
    if not first <= event_date <= last:
        raise IngestionError(
            f"Event date {event_date.isoformat()} is outside the data range "
            f"{first.isoformat()} to {last.isoformat()}."
        )
    if during_end is not None and during_end < event_date:
        raise IngestionError(
            f"End of the during window {during_end.isoformat()} precedes the event date."
        )

    full_range = date_range(first, last)
    gaps = {}
    for chain_id, chain_rows in sorted(by_chain.items()):
        missing = tuple(day for day in full_range if day not in chain_rows)
        gaps[chain_id] = missing
        if len(missing) > 0:
            logger.warning(
                "Chain %s lacks %d of %d days between %s and %s",
                chain_id,
                len(missing),
                len(full_range),
                first.isoformat(),
                last.isoformat(),
            )

    if exposures is None:
        exposures = {}
    if covariates is None:
        covariates = {}
    observations = []
    for chain_id, chain_rows in sorted(by_chain.items()):
        for day, values in sorted(chain_rows.items()):
            if during_end is None:
                during = 0
                after = int(day >= event_date)
            else:
                during = int(event_date <= day <= during_end)
                after = int(day > during_end)
            observations.append(
                PanelObservation(
                    chain_id=chain_id,
                    day=day,
                    values=values,
                    chain_indicator=int(chain_id == treated_chain),
                    after=after,
                    during=during,
                    day_index=(day - event_date).days,
                    exposure=_lookup_exposure(exposures, chain_id, day),
                    covariates=_lookup_covariates(covariates, chain_id, day),
                )
            )
    return Panel(tuple(observations), event_date, treated_chain, during_end, gaps)


def _lookup_exposure(
    exposures: Mapping[str, float | Mapping[date, float]], chain_id: str, day: date
) -> float:
    exposure = exposures.get(chain_id, 0.0)
    if isinstance(exposure, Mapping):
        if day not in exposure:
            raise IngestionError(f"No exposure for {chain_id} on {day.isoformat()}.")
        exposure = exposure[day]
    exposure = float(exposure)
    if not 0.0 <= exposure <= 1.0:
        raise IngestionError(f"Exposure of {chain_id} must be a fraction, got {exposure!r}.")
    return exposure


def _lookup_covariates(
    covariates: Mapping[str, Mapping[str, Mapping[date, float]]], chain_id: str, day: date
) -> dict[str, float]:
    result = {}
    for name, per_chain in covariates.items():
        try:
            result[name] = float(per_chain[chain_id][day])
        except KeyError as exc:
            raise IngestionError(
                f"Covariate '{name}' has no value for {chain_id} on {day.isoformat()}."
            ) from exc
    return result


def restrict_panel(panel: Panel, bandwidth: int) -> Panel:
    """Keep only observations within `bandwidth` days of the event date."""
    if bandwidth < 1:
        raise IngestionError(f"Bandwidth must be at least one day, got {bandwidth}.")
    return panel.select(lambda obs: -bandwidth <= obs.day_index <= bandwidth)
