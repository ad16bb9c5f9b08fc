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
"""Synthetic block-production panels with shocks and known ground truth.

Each chain has a set of nodes with production weights summing to one.
Blocks are allocated every day by a multinomial draw over the current weights.
A shock removes part of the weight, either gradually (policy) or at once (infrastructure),
after which removed weight re-enters at `recovery_rate * resource_flexibility` per day.
A fraction `resource_flexibility` of the re-entering weight returns to the original nodes,
the rest goes to one new node per day.
A consensus upgrade changes the number of nodes and redraws their weights.

The mapping from resource flexibility to re-entry is a modeling choice.
Random numbers come from NumPy's PCG64 generator, seeded per chain.
"""

import json
import logging
import math
import os
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field, replace
from datetime import date, timedelta
from enum import StrEnum

import numpy as np

from .artifacts import Provenance, write_json_artifact
from .ingestion import NodeDayRecord, write_node_day_file
from .metrics import DailyDistribution, MetricsRow, metrics_row
from .utils import parse_day

__all__ = (
    "ChainConfig",
    "EventSimulation",
    "GroundTruth",
    "Scenario",
    "ShockConfig",
    "ShockKind",
    "SimulationError",
    "SimulationResult",
    "WeightDistribution",
    "expected_metrics",
    "load_scenario",
    "recovery_day",
    "simulate_chain",
    "simulate_event_panel",
)


logger = logging.getLogger(__name__)

DEFAULT_START = date(2021, 1, 1)


class SimulationError(ValueError):
    """A scenario is invalid or the simulation reaches a degenerate state."""


class WeightDistribution(StrEnum):
    UNIFORM = "uniform"
    POWER_LAW = "power_law"
    DIRICHLET = "dirichlet"


class ShockKind(StrEnum):
    POLICY_ROLLING = "policy_rolling"
    INFRASTRUCTURE_INSTANT = "infrastructure_instant"
    CONSENSUS_UPGRADE = "consensus_upgrade"


@dataclass(frozen=True)
class ChainConfig:
    chain_id: str
    n_nodes: int
    weight_distribution: WeightDistribution = WeightDistribution.UNIFORM
    alpha: float = 1.0
    """Exponent of the power-law weights `k**-alpha`."""
    concentration: float = 1.0
    """Concentration parameter of the Dirichlet weights."""
    blocks_per_day: int = 1000
    resource_flexibility: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.n_nodes < 1:
            raise SimulationError(f"{self.chain_id}: n_nodes must be at least one.")
        if self.blocks_per_day < 1:
            raise SimulationError(f"{self.chain_id}: blocks_per_day must be at least one.")
        if not 0 <= self.resource_flexibility <= 1:
            raise SimulationError(f"{self.chain_id}: resource_flexibility must be in [0, 1].")
        if self.alpha < 0 or self.concentration <= 0:
            raise SimulationError(f"{self.chain_id}: invalid weight distribution parameters.")


@dataclass(frozen=True)
class ShockConfig:
    kind: ShockKind
    event_date: date
    affected_share: float = 0.0
    """Fraction of the total weight removed by the shock."""
    rollout_days: int = 0
    """Days over which a policy shock removes weight linearly."""
    recovery_rate: float = 0.0
    """Maximum re-entering weight per day, before scaling with resource flexibility."""
    upgrade_node_multiplier: float = 1.0

    def __post_init__(self):
        if not 0 <= self.affected_share <= 1:
            raise SimulationError(f"affected_share must be in [0, 1], got {self.affected_share}.")
        if self.rollout_days < 0:
            raise SimulationError("rollout_days must be non-negative.")
        if self.recovery_rate < 0:
            raise SimulationError("recovery_rate must be non-negative.")
        if self.upgrade_node_multiplier <= 0:
            raise SimulationError("upgrade_node_multiplier must be positive.")


@dataclass(frozen=True)
class GroundTruth:
    """Per-day expected metrics (the infinite-blocks limit) and removed weight."""

    chain_id: str
    days: tuple[date, ...]
    removed_share: tuple[float, ...]
    expected: tuple[MetricsRow, ...]

    def expected_series(self, name: str = "entropy") -> dict[date, float]:
        return {row.day: float(getattr(row, name)) for row in self.expected}

    def to_dict(self) -> dict:
        return {
            "chain_id": self.chain_id,
            "days": [day.isoformat() for day in self.days],
            "removed_share": list(self.removed_share),
            "expected": {
                name: [float(getattr(row, name)) for row in self.expected]
                for name in ("entropy", "nodes", "gini", "nakamoto", "hhi")
            },
        }


@dataclass(frozen=True)
class SimulationResult:
    records: tuple[NodeDayRecord, ...]
    truth: GroundTruth


def _initial_weights(config: ChainConfig, n_nodes: int, rng: np.random.Generator) -> np.ndarray:
    match config.weight_distribution:
        case WeightDistribution.UNIFORM:
            weights = np.ones(n_nodes)
        case WeightDistribution.POWER_LAW:
            weights = np.arange(1, n_nodes + 1, dtype=float) ** -config.alpha
        case WeightDistribution.DIRICHLET:
            weights = rng.dirichlet(np.full(n_nodes, config.concentration))
    return weights / weights.sum()


@dataclass
class _Removal:
    """Running state of one weight-removing shock."""

    shock: ShockConfig
    start: int
    amounts: dict[str, float]
    total: float
    per_day: float
    flexibility: float
    reentered: float = 0.0
    fresh: dict[str, float] = field(default_factory=dict)

    def fraction(self, t: int) -> float:
        if t < self.start:
            return 0.0
        if self.shock.kind == ShockKind.POLICY_ROLLING and self.shock.rollout_days > 0:
            return min(1.0, (t - self.start + 1) / self.shock.rollout_days)
        return 1.0

    def advance(self, t: int, chain_id: str):
        if t <= self.start or self.per_day == 0:
            return
        increment = min(self.fraction(t) * self.total - self.reentered, self.per_day)
        if increment <= 0:
            return
        self.reentered += increment
        fresh = (1 - self.flexibility) * increment
        if fresh > 0:
            node_id = f"{chain_id}-new-{self.start:05d}-{t - self.start:05d}"
            self.fresh[node_id] = fresh

    def apply(self, weights: dict[str, float], t: int):
        f = self.fraction(t)
        if f == 0:
            return
        restored = self.flexibility * self.reentered / self.total if self.total > 0 else 0.0
        for node_id, amount in self.amounts.items():
            weights[node_id] = max(weights[node_id] - f * amount + restored * amount, 0.0)
        weights.update(self.fresh)


def _select_affected(
    available: Mapping[str, float], share: float, rng: np.random.Generator
) -> dict[str, float]:
    """Pick whole nodes in random order until the share is covered, the last one partially.

    Only the weight in `available` can be removed, so nodes hit by earlier shocks
    contribute what those shocks left.
    """
    node_ids = list(available)
    needed = share
    amounts = {}
    for index in rng.permutation(len(node_ids)):
        if needed <= 0:
            break
        node_id = node_ids[index]
        amount = min(available[node_id], needed)
        if amount <= 0:
            continue
        amounts[node_id] = amount
        needed -= amount
    return amounts


def expected_metrics(
    weights: Sequence[float] | np.ndarray,
    blocks_per_day: int = 1,
    chain_id: str = "",
    day: date = DEFAULT_START,
    node_ids: Sequence[str] | None = None,
) -> MetricsRow:
    """Metrics of the weight vector itself, i.e. the limit of infinitely many blocks per day.

    Zero weights are ignored. The number of blocks per day does not enter the limit.
    """
    if blocks_per_day < 1:
        raise SimulationError("blocks_per_day must be at least one.")
    weights = np.asarray(weights, dtype=float)
    if node_ids is None:
        node_ids = [f"n{i:06d}" for i in range(len(weights))]
    positive = weights > 0
    if not positive.any():
        raise SimulationError(f"All weights of {chain_id} are zero on {day}.")
    dist = DailyDistribution(
        chain_id,
        day,
        tuple(float(w) for w in weights[positive]),
        tuple(n for n, keep in zip(node_ids, positive, strict=True) if keep),
    )
    return metrics_row(dist)


def simulate_chain(
    config: ChainConfig,
    shocks: Iterable[ShockConfig],
    n_days: int,
    start_date: date = DEFAULT_START,
) -> SimulationResult:
    """Simulate daily block production of one chain.

    Parameters
    ----------
    config
        The chain and its seed.
    shocks
        Shocks hitting this chain, each within the simulated period.
        A consensus upgrade must precede all weight-removing shocks.
    n_days
        Number of simulated days, starting at `start_date`.
    start_date
        The first simulated day.

    Returns
    -------
    result
        Node-day records and the ground truth (expected metrics and removed share per day).
    """
    if n_days < 1:
        raise SimulationError("n_days must be at least one.")
    shocks = sorted(shocks, key=lambda s: s.event_date)
    for shock in shocks:
        offset = (shock.event_date - start_date).days
        if not 0 <= offset < n_days:
            raise SimulationError(
                f"{config.chain_id}: shock on {shock.event_date} is outside the simulated period."
            )
    upgrades = [s for s in shocks if s.kind == ShockKind.CONSENSUS_UPGRADE]
    removals = [s for s in shocks if s.kind != ShockKind.CONSENSUS_UPGRADE]
    if upgrades and removals and upgrades[-1].event_date > removals[0].event_date:
        raise SimulationError(f"{config.chain_id}: an upgrade cannot follow a removal shock.")

    rng = np.random.default_rng(np.random.PCG64(config.seed))
    n_nodes = config.n_nodes
    base = dict(
        zip(
            (f"{config.chain_id}-{k:05d}" for k in range(n_nodes)),
            _initial_weights(config, n_nodes, rng),
            strict=True,
        )
    )
    pending = {(shock.event_date - start_date).days: [] for shock in shocks}
    for shock in shocks:
        pending[(shock.event_date - start_date).days].append(shock)
    states: list[_Removal] = []

    records = []
    days = []
    removed_share = []
    expected = []
    for t in range(n_days):
        day = start_date + timedelta(days=t)
        for shock in pending.get(t, []):
            if shock.kind == ShockKind.CONSENSUS_UPGRADE:
                n_nodes = max(1, round(n_nodes * shock.upgrade_node_multiplier))
                base = dict(
                    zip(
                        (f"{config.chain_id}-{k:05d}" for k in range(n_nodes)),
                        _initial_weights(config, n_nodes, rng),
                        strict=True,
                    )
                )
            else:
                available = dict(base)
                for state in states:
                    for node_id, amount in state.amounts.items():
                        available[node_id] -= amount
                amounts = _select_affected(available, shock.affected_share, rng)
                states.append(
                    _Removal(
                        shock,
                        t,
                        amounts,
                        math.fsum(amounts.values()),
                        shock.recovery_rate * config.resource_flexibility,
                        config.resource_flexibility,
                    )
                )

        weights = dict(base)
        for state in states:
            state.advance(t, config.chain_id)
            state.apply(weights, t)
        node_ids = [node_id for node_id, w in weights.items() if w > 0]
        values = np.array([weights[node_id] for node_id in node_ids])
        total = values.sum() if len(values) > 0 else 0.0
        if total <= 0:
            raise SimulationError(f"{config.chain_id}: no active weight on {day}.")

        counts = rng.multinomial(config.blocks_per_day, values / total)
        records.extend(
            NodeDayRecord(config.chain_id, day, node_id, float(count))
            for node_id, count in zip(node_ids, counts, strict=True)
            if count > 0
        )
        days.append(day)
        removed_share.append(max(1.0 - float(total), 0.0))
        expected.append(
            expected_metrics(values, config.blocks_per_day, config.chain_id, day, node_ids)
        )

    truth = GroundTruth(config.chain_id, tuple(days), tuple(removed_share), tuple(expected))
    return SimulationResult(tuple(records), truth)


def recovery_day(truth: GroundTruth, event_date: date, eps: float = 0.01) -> date | None:
    """First day after the post-event trough with expected entropy back within `eps`.

    The reference is the expected entropy on the day before the event.
    Returns `None` if the entropy does not recover within the simulated period.
    """
    series = truth.expected_series("entropy")
    before = [day for day in series if day < event_date]
    if len(before) == 0:
        raise SimulationError(f"No simulated days before {event_date}.")
    reference = series[max(before)]
    after = sorted(day for day in series if day >= event_date)
    if len(after) == 0:
        return None
    trough = min(after, key=lambda day: (series[day], day))
    for day in after:
        if day >= trough and series[day] >= reference - eps:
            return day
    return None


#
# Scenarios and event panels
#


@dataclass(frozen=True)
class Scenario:
    """A treated chain with its shocks and a set of unshocked control chains."""

    treated: ChainConfig
    shocks: tuple[ShockConfig, ...]
    controls: tuple[ChainConfig, ...]
    n_days: int
    start_date: date = DEFAULT_START
    exposures: Mapping[str, float] = field(default_factory=dict)

    def with_seed(self, seed: int) -> "Scenario":
        """Derive independent per-chain seeds from one master seed."""
        seeds = np.random.SeedSequence(seed).generate_state(1 + len(self.controls))
        return replace(
            self,
            treated=replace(self.treated, seed=int(seeds[0])),
            controls=tuple(
                replace(control, seed=int(s))
                for control, s in zip(self.controls, seeds[1:], strict=True)
            ),
        )


def _chain_config(data: Mapping) -> ChainConfig:
    data = dict(data)
    data.pop("shocks", None)
    data.pop("exposure", None)
    if "weight_distribution" in data:
        data["weight_distribution"] = WeightDistribution(data["weight_distribution"])
    return ChainConfig(**data)


def _shock_config(data: Mapping) -> ShockConfig:
    data = dict(data)
    data["kind"] = ShockKind(data["kind"])
    data["event_date"] = parse_day(data["event_date"])
    return ShockConfig(**data)


def load_scenario(path: str) -> Scenario:
    """Load a scenario from a JSON document.

    The document has the keys `n_days`, `start_date` (optional), `treated` and `controls`.
    Chain objects use the field names of `ChainConfig`, plus an optional `exposure`.
    The treated chain carries a list `shocks` of objects with the field names of `ShockConfig`.
    """
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SimulationError(f"{path}: invalid JSON: {exc.msg}.") from exc
    try:
        treated = data["treated"]
        exposures = {
            chain["chain_id"]: float(chain["exposure"])
            for chain in [treated, *data.get("controls", [])]
            if "exposure" in chain
        }
        return Scenario(
            treated=_chain_config(treated),
            shocks=tuple(_shock_config(shock) for shock in treated.get("shocks", [])),
            controls=tuple(_chain_config(chain) for chain in data.get("controls", [])),
            n_days=int(data["n_days"]),
            start_date=parse_day(data["start_date"]) if "start_date" in data else DEFAULT_START,
            exposures=exposures,
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, SimulationError):
            raise
        raise SimulationError(f"{path}: invalid scenario: {exc}") from exc


@dataclass(frozen=True)
class EventSimulation:
    results: Mapping[str, SimulationResult]
    att_path: Mapping[date, float]
    """Expected treated entropy minus its pre-shock level, i.e. the counterfactual."""


def simulate_event_panel(
    scenario: Scenario,
    out_dir: str | None = None,
    provenance: Provenance | None = None,
) -> EventSimulation:
    """Simulate the treated and control chains of a scenario.

    When `out_dir` is given, one node-day file `<chain_id>.csv` per chain
    and `ground_truth.json` are written to it.
    """
    chain_ids = [scenario.treated.chain_id, *(c.chain_id for c in scenario.controls)]
    if len(set(chain_ids)) != len(chain_ids):
        raise SimulationError(f"Duplicate chain ids in scenario: {chain_ids}")
    results = {
        scenario.treated.chain_id: simulate_chain(
            scenario.treated, scenario.shocks, scenario.n_days, scenario.start_date
        )
    }
    for control in scenario.controls:
        results[control.chain_id] = simulate_chain(
            control, (), scenario.n_days, scenario.start_date
        )

    # Without shocks, the treated weights would stay at their initial values.
    truth = results[scenario.treated.chain_id].truth
    entropy = truth.expected_series("entropy")
    first_shock = min((s.event_date for s in scenario.shocks), default=None)
    if first_shock is None or first_shock == scenario.start_date:
        reference = entropy[scenario.start_date]
    else:
        reference = entropy[first_shock - timedelta(days=1)]
    att_path = {day: value - reference for day, value in entropy.items()}

    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        for chain_id, result in results.items():
            write_node_day_file(
                os.path.join(out_dir, f"{chain_id}.csv"), result.records, provenance=provenance
            )
        write_json_artifact(
            os.path.join(out_dir, "ground_truth.json"),
            {
                "treated_chain": scenario.treated.chain_id,
                "event_date": None if first_shock is None else first_shock.isoformat(),
                "exposures": dict(scenario.exposures),
                "att_path": {day.isoformat(): value for day, value in att_path.items()},
                "chains": {chain_id: r.truth.to_dict() for chain_id, r in results.items()},
            },
            provenance,
        )
    return EventSimulation(results, att_path)
