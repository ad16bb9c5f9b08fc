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
"""Resolution of blocks to their consensus-layer producers.

Pooled mining splits a block over the coinbase recipients in proportion to their shares.
Under proposer-builder separation, the reward recipient is a builder,
and the proposer is recovered from the reward transfer inside the block.
"""

import logging
import math
from collections.abc import Iterable
from dataclasses import dataclass
from datetime import date, timedelta
from enum import StrEnum

from .artifacts import Provenance, write_text_artifact
from .ingestion import LabelRegistry, NodeDayRecord, RawBlockRecord
from .utils import date_range

__all__ = (
    "AttributionError",
    "AttributionMethod",
    "AttributionOutcome",
    "AttributionReport",
    "AttritionPoint",
    "QuarantineEntry",
    "UnresolvedBlockError",
    "aggregate_node_days",
    "attribute_blocks",
    "attribute_proportional",
    "node_attrition",
    "resolve_proposer",
    "write_quarantine_report",
)


logger = logging.getLogger(__name__)


class AttributionError(ValueError):
    """A block or record set cannot be attributed."""


class UnresolvedBlockError(AttributionError):
    """A builder block without a qualifying proposer transfer."""

    def __init__(self, chain_id: str, height: int, recipient: str, reason: str):
        super().__init__(f"Block {height} of {chain_id} (recipient {recipient}): {reason}")
        self.chain_id = chain_id
        self.height = height
        self.recipient = recipient
        self.reason = reason


class AttributionMethod(StrEnum):
    DIRECT = "direct"
    PROPORTIONAL_SPLIT = "proportional_split"
    PBS_TRANSFER = "pbs_transfer"
    PBS_ALTERNATE = "pbs_alternate"
    PBS_BUILDER_IS_PROPOSER = "pbs_builder_is_proposer"


@dataclass(frozen=True)
class AttributionOutcome:
    """The (share of a) block credited to one producer."""

    chain_id: str
    block_height: int
    day: date
    producer_id: str
    method: AttributionMethod
    weight: float = 1.0
    builder: str | None = None
    """Canonical builder address for blocks built under proposer-builder separation."""


@dataclass(frozen=True)
class QuarantineEntry:
    chain_id: str
    height: int
    recipient: str
    reason: str


@dataclass(frozen=True)
class AttributionReport:
    outcomes: tuple[AttributionOutcome, ...]
    quarantine: tuple[QuarantineEntry, ...]


@dataclass(frozen=True)
class AttritionPoint:
    day: date
    lost_nodes: int
    lost_share: float


def attribute_proportional(block: RawBlockRecord) -> list[tuple[str, float]]:
    """Split a block over its reward recipients in proportion to their shares.

    Repeated recipients are merged, keeping the order of first appearance.
    """
    weights: dict[str, list[float]] = {}
    for recipient in block.reward_recipients:
        weights.setdefault(recipient.address, []).append(recipient.share)
    return [(address, math.fsum(shares)) for address, shares in weights.items()]


def resolve_proposer(block: RawBlockRecord, registry: LabelRegistry) -> AttributionOutcome:
    """Identify the proposer of a single-recipient block.

    Parameters
    ----------
    block
        A block with exactly one reward recipient.
    registry
        Labels of builders, their alternate addresses and known proposers.

    Returns
    -------
    outcome
        The producer and the method used to find it. Resolution order:

        1. The (canonicalized) recipient is not a builder: the recipient is the producer.
        2. The recipient is a builder and the block contains a transfer
           from the builder, or one of its alternate addresses, to a known proposer.
           The largest such transfer wins, ties go to the earliest transfer.
        3. The builder is registered as also being a proposer.

    Raises
    ------
    UnresolvedBlockError
        When none of the above applies.
    """
    if len(block.reward_recipients) != 1:
        raise AttributionError(
            f"Block {block.height} of {block.chain_id} has "
            f"{len(block.reward_recipients)} reward recipients, "
            "proposer resolution requires exactly one."
        )
    recipient = block.reward_recipients[0].address
    canonical = registry.canonical(recipient)
    if canonical not in registry.mev_builders:
        return AttributionOutcome(
            block.chain_id, block.height, block.day, canonical, AttributionMethod.DIRECT
        )

    best = None
    for transfer in block.transfers:
        if registry.canonical(transfer.sender) != canonical:
            continue
        if transfer.recipient not in registry.known_proposers:
            continue
        # Strict comparison keeps the earliest transfer on ties.
        if best is None or transfer.amount > best.amount:
            best = transfer
    if best is not None:
        method = (
            AttributionMethod.PBS_TRANSFER
            if best.sender == canonical
            else AttributionMethod.PBS_ALTERNATE
        )
        return AttributionOutcome(
            block.chain_id, block.height, block.day, best.recipient, method, builder=canonical
        )
    if canonical in registry.builder_proposers:
        return AttributionOutcome(
            block.chain_id,
            block.height,
            block.day,
            canonical,
            AttributionMethod.PBS_BUILDER_IS_PROPOSER,
            builder=canonical,
        )
    raise UnresolvedBlockError(
        block.chain_id,
        block.height,
        recipient,
        "builder block without a transfer to a known proposer",
    )


def attribute_blocks(
    blocks: Iterable[RawBlockRecord], registry: LabelRegistry | None = None
) -> AttributionReport:
    """Attribute all blocks, collecting unresolved builder blocks in a quarantine list.

    Blocks with several reward recipients are split proportionally.
    Single-recipient blocks are resolved with `resolve_proposer` when a registry is given,
    and credited directly to the recipient otherwise.
    """
    outcomes = []
    quarantine = []
    for block in blocks:
        if len(block.reward_recipients) > 1:
            outcomes.extend(
                AttributionOutcome(
                    block.chain_id,
                    block.height,
                    block.day,
                    address,
                    AttributionMethod.PROPORTIONAL_SPLIT,
                    weight,
                )
                for address, weight in attribute_proportional(block)
            )
        elif registry is None:
            outcomes.append(
                AttributionOutcome(
                    block.chain_id,
                    block.height,
                    block.day,
                    block.reward_recipients[0].address,
                    AttributionMethod.DIRECT,
                )
            )
        else:
            try:
                outcomes.append(resolve_proposer(block, registry))
            except UnresolvedBlockError as exc:
                quarantine.append(
                    QuarantineEntry(exc.chain_id, exc.height, exc.recipient, exc.reason)
                )
    if len(quarantine) > 0:
        logger.warning("Quarantined %d unresolved blocks", len(quarantine))
    return AttributionReport(tuple(outcomes), tuple(quarantine))


def aggregate_node_days(outcomes: Iterable[AttributionOutcome]) -> list[NodeDayRecord]:
    """Sum attribution weights per (chain, day, producer)."""
    weights: dict[tuple[str, date, str], list[float]] = {}
    for outcome in outcomes:
        key = (outcome.chain_id, outcome.day, outcome.producer_id)
        weights.setdefault(key, []).append(outcome.weight)
    return [
        NodeDayRecord(chain_id, day, node_id, math.fsum(values))
        for (chain_id, day, node_id), values in sorted(weights.items())
    ]


def write_quarantine_report(
    path: str, entries: Iterable[QuarantineEntry], provenance: Provenance | None = None
):
    """Write unresolved blocks as `chain_id,height,recipient,reason` rows."""
    lines = ["chain_id,height,recipient,reason"]
    lines.extend(
        f"{entry.chain_id},{entry.height},{entry.recipient},{entry.reason}" for entry in entries
    )
    write_text_artifact(path, lines, provenance)


def node_attrition(
    records: Iterable[NodeDayRecord],
    event_date: date,
    lookback_days: int = 30,
    horizon_days: int = 30,
    chain_id: str | None = None,
) -> list[AttritionPoint]:
    """Track nodes that stopped producing blocks after an event.

    Parameters
    ----------
    records
        Node-day records of one chain, or of several chains when `chain_id` is given.
    event_date
        The day of the shock.
    lookback_days
        Nodes producing on `[event_date - lookback_days, event_date]` form the reference set.
    horizon_days
        Number of post-event days to report.
    chain_id
        Only use records of this chain.

    Returns
    -------
    series
        For each day `d` after the event, the reference nodes without any production
        in `(event_date, d]` and their share of the reference-window production.
    """
    if lookback_days < 0 or horizon_days < 1:
        raise AttributionError("Lookback must be non-negative and horizon at least one day.")
    records = [r for r in records if chain_id is None or r.chain_id == chain_id]
    chains = {r.chain_id for r in records}
    if len(chains) > 1:
        raise AttributionError(f"Records of several chains {sorted(chains)}, select one chain.")
    first = event_date - timedelta(days=lookback_days)
    last = event_date + timedelta(days=horizon_days)
    if len(records) == 0 or max(r.day for r in records) < last:
        raise AttributionError(f"Records do not extend to the end of the horizon on {last}.")
    start = min(r.day for r in records)
    if start > first:
        raise AttributionError(
            f"Records start on {start}, after the start of the lookback window on {first}."
        )

    window: dict[str, list[float]] = {}
    first_return: dict[str, date] = {}
    for record in records:
        if first <= record.day <= event_date:
            window.setdefault(record.node_id, []).append(record.blocks)
        elif event_date < record.day <= last:
            previous = first_return.get(record.node_id)
            if previous is None or record.day < previous:
                first_return[record.node_id] = record.day
    if len(window) == 0:
        raise AttributionError(f"No block production between {first} and {event_date}.")
    production = {node_id: math.fsum(values) for node_id, values in window.items()}
    total = math.fsum(production.values())

    series = []
    for day in date_range(event_date + timedelta(days=1), last):
        lost = [
            node_id
            for node_id in sorted(production)
            if node_id not in first_return or first_return[node_id] > day
        ]
        series.append(
            AttritionPoint(day, len(lost), math.fsum(production[n] for n in lost) / total)
        )
    return series
