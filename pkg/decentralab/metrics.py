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
"""Daily decentralization metrics and derived analyses.

All metrics are computed over producing nodes only, i.e. nodes with a positive block count.
Block counts may be fractional due to proportional attribution.
Entropy is expressed in bits.
"""

import logging
import math
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from datetime import date, timedelta

import numpy as np
from scipy import stats

from .artifacts import Provenance, write_text_artifact
from .attribution import AttributionOutcome
from .ingestion import LabelRegistry, NodeDayRecord
from .utils import format_decimal

__all__ = (
    "DEFAULT_THRESHOLD",
    "METRIC_NAMES",
    "DailyDistribution",
    "KnockoutRow",
    "MetricsError",
    "MetricsRow",
    "MevPrevalenceRow",
    "distributions_from_records",
    "entropy",
    "exposure_drawdown",
    "gini",
    "hhi",
    "knockout_entropy",
    "knockout_series",
    "metrics_row",
    "metrics_table",
    "mev_prevalence",
    "nakamoto",
    "node_count",
    "pearson_correlation",
    "recovery_time",
    "write_metrics_file",
)


logger = logging.getLogger(__name__)

DEFAULT_THRESHOLD = 0.51
METRIC_NAMES = ("entropy", "nodes", "gini", "nakamoto", "hhi")


class MetricsError(ValueError):
    """A metric cannot be computed from the given data."""


@dataclass(frozen=True)
class DailyDistribution:
    """Blocks produced by each producing node of one chain on one day."""

    chain_id: str
    day: date
    counts: tuple[float, ...]
    node_ids: tuple[str, ...]

    def __post_init__(self):
        if len(self.counts) == 0:
            raise MetricsError(f"Empty distribution for {self.chain_id} on {self.day}.")
        if len(self.counts) != len(self.node_ids):
            raise MetricsError("Counts and node_ids must have equal lengths.")
        if not all(count > 0 and math.isfinite(count) for count in self.counts):
            raise MetricsError(f"Counts for {self.chain_id} on {self.day} must be positive.")
        if len(set(self.node_ids)) != len(self.node_ids):
            raise MetricsError(f"Duplicate node ids for {self.chain_id} on {self.day}.")

    @classmethod
    def from_counts(
        cls,
        counts: Iterable[float],
        node_ids: Iterable[str] | None = None,
        chain_id: str = "",
        day: date = date(1970, 1, 1),
    ) -> "DailyDistribution":
        """Create a distribution, naming nodes `n000000`, `n000001`, ... when no ids are given."""
        counts = tuple(float(count) for count in counts)
        if node_ids is None:
            node_ids = (f"n{i:06d}" for i in range(len(counts)))
        return cls(chain_id, day, counts, tuple(node_ids))

    @property
    def array(self) -> np.ndarray:
        return np.array(self.counts, dtype=float)

    @property
    def total(self) -> float:
        return math.fsum(self.counts)


@dataclass(frozen=True)
class MetricsRow:
    chain_id: str
    day: date
    entropy: float
    nodes: int
    gini: float
    nakamoto: int
    hhi: float

    def as_values(self) -> dict[str, float]:
        return {name: float(getattr(self, name)) for name in METRIC_NAMES}


def entropy(dist: DailyDistribution) -> float:
    """Shannon entropy of the block shares, in bits.

    Each node contributes one term, also when several nodes have equal counts.
    The result lies in `[0, log2(N)]`, with equality at the upper bound for uniform counts.
    """
    counts = dist.array
    n = len(counts)
    if n == 1:
        return 0.0
    if counts.min() == counts.max():
        return math.log2(n)
    shares = counts / dist.total
    value = -math.fsum(shares * np.log2(shares))
    return min(max(value, 0.0), math.log2(n))


def node_count(dist: DailyDistribution) -> int:
    """Number of producing nodes."""
    return len(dist.counts)


def gini(dist: DailyDistribution) -> float:
    """Gini coefficient of the block counts, in `[0, 1)`."""
    counts = np.sort(dist.array)
    n = len(counts)
    if counts[0] == counts[-1]:
        return 0.0
    ranks = np.arange(1, n + 1)
    value = math.fsum((2 * ranks - n - 1) * counts) / (n * dist.total)
    return max(value, 0.0)


def nakamoto(dist: DailyDistribution, threshold: float = DEFAULT_THRESHOLD) -> int:
    """Minimum number of top producers whose combined share reaches the threshold.

    Producers are ranked by decreasing count, with ties broken by ascending node id.
    """
    if not 0 < threshold <= 1:
        raise MetricsError(f"Nakamoto threshold must be in (0, 1], got {threshold!r}.")
    order = sorted(range(len(dist.counts)), key=lambda k: (-dist.counts[k], dist.node_ids[k]))
    cumulative = np.cumsum([dist.counts[k] for k in order])
    # The relative slack absorbs rounding in the cumulative sum at threshold 1.
    target = threshold * dist.total * (1 - 1e-12)
    return min(int(np.searchsorted(cumulative, target, side="left")) + 1, len(order))


def hhi(dist: DailyDistribution) -> float:
    """Herfindahl-Hirschman index: the sum of squared shares."""
    counts = dist.array
    return math.fsum(counts * counts) / dist.total**2


def metrics_row(dist: DailyDistribution, threshold: float = DEFAULT_THRESHOLD) -> MetricsRow:
    """Compute all five metrics of one distribution."""
    return MetricsRow(
        chain_id=dist.chain_id,
        day=dist.day,
        entropy=entropy(dist),
        nodes=node_count(dist),
        gini=gini(dist),
        nakamoto=nakamoto(dist, threshold),
        hhi=hhi(dist),
    )


def distributions_from_records(records: Iterable[NodeDayRecord]) -> list[DailyDistribution]:
    """Group node-day records into daily distributions, sorted by chain and day."""
    grouped: dict[tuple[str, date], dict[str, float]] = {}
    for record in records:
        nodes = grouped.setdefault((record.chain_id, record.day), {})
        if record.node_id in nodes:
            raise MetricsError(
                f"Duplicate record for node {record.node_id} of {record.chain_id} on {record.day}."
            )
        nodes[record.node_id] = record.blocks
    return [
        DailyDistribution(
            chain_id,
            day,
            tuple(nodes[node_id] for node_id in sorted(nodes)),
            tuple(sorted(nodes)),
        )
        for (chain_id, day), nodes in sorted(grouped.items())
    ]


def metrics_table(
    distributions: Iterable[DailyDistribution],
    thresholds: Mapping[str, float] | None = None,
    default_threshold: float = DEFAULT_THRESHOLD,
) -> list[MetricsRow]:
    """Compute metrics rows, with an optional Nakamoto threshold per chain."""
    if thresholds is None:
        thresholds = {}
    return [
        metrics_row(dist, thresholds.get(dist.chain_id, default_threshold))
        for dist in distributions
    ]


def write_metrics_file(
    path: str, rows: Iterable[MetricsRow], provenance: Provenance | None = None
):
    """Write metrics rows with nine significant digits."""
    lines = [",".join(["chain_id", "day", *METRIC_NAMES])]
    lines.extend(
        f"{row.chain_id},{row.day.isoformat()},{format_decimal(row.entropy)},{row.nodes},"
        f"{format_decimal(row.gini)},{row.nakamoto},{format_decimal(row.hhi)}"
        for row in rows
    )
    write_text_artifact(path, lines, provenance)


#
# Knockout analysis and MEV prevalence
#


def knockout_entropy(
    dist: DailyDistribution, registry: LabelRegistry, excluded_groups: Iterable[str]
) -> float:
    """Entropy after removing all nodes of the excluded groups.

    Nodes without a label belong to the group `other`.
    """
    excluded = set(excluded_groups)
    kept = [
        (node_id, count)
        for node_id, count in zip(dist.node_ids, dist.counts, strict=True)
        if registry.group(node_id) not in excluded
    ]
    if len(kept) == 0:
        raise MetricsError(
            f"Excluding {sorted(excluded)} removes all nodes of {dist.chain_id} on {dist.day}."
        )
    return entropy(
        DailyDistribution(
            dist.chain_id,
            dist.day,
            tuple(count for _, count in kept),
            tuple(node_id for node_id, _ in kept),
        )
    )


@dataclass(frozen=True)
class KnockoutRow:
    """Daily entropy with all nodes and with each group excluded in turn."""

    chain_id: str
    day: date
    values: Mapping[str, float] = field(default_factory=dict)

    def as_values(self) -> Mapping[str, float]:
        return self.values


def knockout_series(
    distributions: Iterable[DailyDistribution],
    registry: LabelRegistry,
    groups: Iterable[str] | None = None,
) -> list[KnockoutRow]:
    """Recompute daily entropy with each group knocked out.

    The values are named `entropy` and `without_<group>`.
    Days on which a group holds all nodes get NaN for that group.
    """
    distributions = list(distributions)
    if groups is None:
        groups = sorted({registry.group(n) for dist in distributions for n in dist.node_ids})
    groups = list(groups)
    rows = []
    empty = 0
    for dist in distributions:
        values = {"entropy": entropy(dist)}
        for group in groups:
            try:
                values[f"without_{group}"] = knockout_entropy(dist, registry, [group])
            except MetricsError:
                values[f"without_{group}"] = math.nan
                empty += 1
        rows.append(KnockoutRow(dist.chain_id, dist.day, values))
    if empty > 0:
        logger.warning("Knockout left %d chain-days without nodes", empty)
    return rows


@dataclass(frozen=True)
class MevPrevalenceRow:
    chain_id: str
    day: date
    builder_share: float
    """Fraction of blocks built by MEV builders."""
    builder_proposer_fraction: float
    """Fraction of producers with at least one builder block."""

    def as_values(self) -> dict[str, float]:
        return {
            "builder_share": self.builder_share,
            "builder_proposer_fraction": self.builder_proposer_fraction,
        }


def mev_prevalence(outcomes: Iterable[AttributionOutcome]) -> list[MevPrevalenceRow]:
    """Daily prevalence of builder blocks among attributed blocks."""
    grouped: dict[tuple[str, date], list[AttributionOutcome]] = {}
    for outcome in outcomes:
        grouped.setdefault((outcome.chain_id, outcome.day), []).append(outcome)
    rows = []
    for (chain_id, day), day_outcomes in sorted(grouped.items()):
        total = math.fsum(o.weight for o in day_outcomes)
        built = math.fsum(o.weight for o in day_outcomes if o.builder is not None)
        producers = {o.producer_id for o in day_outcomes}
        with_builder = {o.producer_id for o in day_outcomes if o.builder is not None}
        rows.append(
            MevPrevalenceRow(chain_id, day, built / total, len(with_builder) / len(producers))
        )
    return rows


#
# Event-level analyses
#


def exposure_drawdown(
    series: Mapping[date, float], event_date: date, peak_window: int, trough_window: int
) -> float:
    """Fractional peak-to-trough decrease of a hashrate series around an event.

    The peak is the maximum over `[event_date - peak_window, event_date]`
    and the trough the minimum over `[event_date, event_date + trough_window]`.
    """
    if peak_window < 0 or trough_window < 0:
        raise MetricsError("Peak and trough windows must be non-negative.")
    peak_values = [
        value
        for day, value in series.items()
        if event_date - timedelta(days=peak_window) <= day <= event_date
    ]
    trough_values = [
        value
        for day, value in series.items()
        if event_date <= day <= event_date + timedelta(days=trough_window)
    ]
    if len(peak_values) == 0 or len(trough_values) == 0:
        raise MetricsError(f"Empty peak or trough window around {event_date}.")
    peak = max(peak_values)
    if peak <= 0:
        raise MetricsError(f"Hashrate peak before {event_date} is not positive.")
    return (peak - min(trough_values)) / peak


def recovery_time(jump: float, post_slope: float) -> float | None:
    """Days needed for the post-event slope to offset the jump.

    Returns `None` when the slope does not point towards recovery.
    """
    if jump == 0:
        return 0.0
    if post_slope <= 0:
        return None
    return abs(jump) / post_slope


def pearson_correlation(a: Mapping[date, float], b: Mapping[date, float]) -> float:
    """Product-moment correlation of two series aligned on their common dates."""
    days = sorted(set(a) & set(b))
    if len(days) < 3:
        raise MetricsError(f"At least three common dates are needed, found {len(days)}.")
    x = np.array([a[day] for day in days], dtype=float)
    y = np.array([b[day] for day in days], dtype=float)
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        raise MetricsError("Cannot correlate a series with zero variance.")
    return float(np.clip(stats.pearsonr(x, y).statistic, -1.0, 1.0))
