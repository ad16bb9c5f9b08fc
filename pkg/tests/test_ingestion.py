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
"""Unit tests for decentralab.ingestion."""

import json
import logging
from datetime import UTC, date, datetime

import pytest
from path import Path

from decentralab.artifacts import Provenance
from decentralab.ingestion import (
    IngestionError,
    LabelRegistry,
    NodeDayRecord,
    RawBlockRecord,
    RewardShare,
    SeriesRow,
    assemble_panel,
    forward_fill,
    load_label_registry,
    parse_node_day_file,
    parse_raw_block_file,
    read_series_file,
    restrict_panel,
    write_node_day_file,
    write_series_file,
)
from decentralab.utils import date_range

DAY = date(2022, 9, 15)


def test_parse_node_day_csv(uniform_nodes: Path):
    records = parse_node_day_file(uniform_nodes)
    assert [r.node_id for r in records] == ["n0", "n1", "n2", "n3"]
    assert all(r.blocks == 25.0 and r.day == DAY and r.chain_id == "eth" for r in records)


def test_parse_node_day_column_order_and_comments(path_tmp: Path):
    path = path_tmp / "nodes.tsv"
    path.write_text(
        "# decentralab artifact format version 1\n"
        "\n"
        "node_id\tblocks\tday\tchain_id\n"
        "pool-a\t2.5\t2021-05-15\tbtc\n"
    )
    (record,) = parse_node_day_file(path, delimiter="\t")
    assert record == NodeDayRecord("btc", date(2021, 5, 15), "pool-a", 2.5)


def test_parse_node_day_jsonl(path_tmp: Path):
    path = path_tmp / "nodes.jsonl"
    rows = [
        {"chain_id": "sol", "day": "2022-01-01", "node_id": "v1", "blocks": 3},
        {"chain_id": "sol", "day": "2022-01-01", "node_id": "v2", "blocks": 0},
    ]
    path.write_text("".join(json.dumps(row) + "\n" for row in rows))
    (record,) = parse_node_day_file(path, "jsonl")
    assert record.node_id == "v1"
    assert record.blocks == 3.0


def test_parse_node_day_drops_zero_rows(path_tmp: Path, caplog):
    path = path_tmp / "nodes.csv"
    path.write_text("chain_id,day,node_id,blocks\neth,2022-09-15,a,0\neth,2022-09-15,b,1\n")
    with caplog.at_level(logging.WARNING, logger="decentralab"):
        records = parse_node_day_file(path)
    assert len(records) == 1
    assert "Dropped 1 zero-production rows" in caplog.text


def test_parse_node_day_duplicate(path_tmp: Path):
    path = path_tmp / "nodes.csv"
    path.write_text("chain_id,day,node_id,blocks\neth,2022-09-15,a,1\neth,2022-09-15,a,2\n")
    with pytest.raises(IngestionError, match="lines 2 and 3"):
        parse_node_day_file(path)


@pytest.mark.parametrize(
    ("row", "message"),
    [
        ("eth,2022-09-15,a,-1", "non-negative"),
        ("eth,2022-09-15,a,many", "cannot parse block count"),
        ("eth,15-09-2022,a,1", "cannot parse day"),
        ("eth,2022-09-15,a", "expected 4 fields"),
        ("eth,2022-09-15,,1", "empty chain_id or node_id"),
    ],
)
def test_parse_node_day_invalid_rows(path_tmp: Path, row: str, message: str):
    path = path_tmp / "nodes.csv"
    path.write_text(f"chain_id,day,node_id,blocks\n{row}\n")
    with pytest.raises(IngestionError, match=message):
        parse_node_day_file(path)


def test_parse_node_day_header(path_tmp: Path):
    path = path_tmp / "nodes.csv"
    path.write_text("chain,day,node,blocks\n")
    with pytest.raises(IngestionError, match="header lacks columns"):
        parse_node_day_file(path)
    with pytest.raises(IngestionError, match="Unsupported"):
        parse_node_day_file(path, "xml")


@pytest.mark.parametrize("fmt", ["csv", "jsonl"])
def test_write_node_day_file(path_tmp: Path, fmt: str):
    records = [
        NodeDayRecord("eth", DAY, "a", 1 / 3),
        NodeDayRecord("eth", DAY, "b", 12.0),
    ]
    path = path_tmp / f"nodes.{fmt}"
    write_node_day_file(path, records, fmt, Provenance(("decentralab",), (), "1.0"))
    assert parse_node_day_file(path, fmt) == records


def test_write_node_day_file_rejects_commas(path_tmp: Path):
    with pytest.raises(IngestionError):
        write_node_day_file(path_tmp / "x.csv", [NodeDayRecord("eth", DAY, "a,b", 1.0)])


def test_node_day_record_validation():
    with pytest.raises(IngestionError):
        NodeDayRecord("eth", DAY, "a", 0.0)
    with pytest.raises(IngestionError):
        NodeDayRecord("eth", DAY, "a", float("inf"))


def test_raw_block_record_validation():
    timestamp = datetime(2022, 9, 15, tzinfo=UTC)
    block = RawBlockRecord("eth", 10, timestamp, (RewardShare("a", 0.5), RewardShare("b", 0.5)))
    assert block.day == DAY
    with pytest.raises(IngestionError):
        RawBlockRecord("eth", 10, timestamp, ())
    with pytest.raises(IngestionError):
        RawBlockRecord("eth", 10, timestamp, (RewardShare("a", 0.9),))
    with pytest.raises(IngestionError):
        RawBlockRecord("eth", -1, timestamp, (RewardShare("a", 1.0),))


def _write_blocks(path: Path, blocks: list[dict]):
    path.write_text("".join(json.dumps(block) + "\n" for block in blocks))


def test_parse_raw_block_file(path_tmp: Path):
    path = path_tmp / "blocks.jsonl"
    _write_blocks(
        path,
        [
            {
                "chain_id": "btc",
                "height": 1,
                "timestamp": "2021-05-15T23:59:59Z",
                "reward_recipients": [
                    {"address": "a", "share": 0.6000001},
                    {"address": "b", "share": 0.4},
                ],
            },
            {
                "chain_id": "eth",
                "height": 2,
                "timestamp": "2022-09-15T12:00:00+00:00",
                "reward_recipients": [{"address": "builder", "share": 1}],
                "transfers": [{"from": "builder", "to": "val", "amount": 0.05}],
            },
        ],
    )
    first, second = parse_raw_block_file(path)
    assert first.day == date(2021, 5, 15)
    assert sum(rs.share for rs in first.reward_recipients) == pytest.approx(1.0, abs=1e-12)
    assert second.transfers[0].sender == "builder"
    assert second.transfers[0].recipient == "val"
    assert second.transfers[0].amount == 0.05


@pytest.mark.parametrize(
    ("block", "message"),
    [
        ({"chain_id": "btc", "height": 5, "timestamp": "2021-01-01T00:00:00Z"}, "missing keys"),
        (
            {
                "chain_id": "btc",
                "height": 5,
                "timestamp": "2021-01-01T00:00:00Z",
                "reward_recipients": [{"address": "a", "share": 0.7}],
            },
            "block 5 of btc sum to",
        ),
        (
            {
                "chain_id": "eth",
                "height": 6,
                "timestamp": "2021-01-01T00:00:00Z",
                "reward_recipients": [{"address": "a", "share": 1.0}],
                "transfers": [{"from": "a", "to": "b", "amount": -1}],
            },
            "negative transfer",
        ),
        (
            {
                "chain_id": "eth",
                "height": -6,
                "timestamp": "2021-01-01T00:00:00Z",
                "reward_recipients": [{"address": "a", "share": 1.0}],
            },
            "non-negative integer",
        ),
        (
            {
                "chain_id": "eth",
                "height": 7,
                "timestamp": "yesterday",
                "reward_recipients": [{"address": "a", "share": 1.0}],
            },
            "timestamp",
        ),
    ],
)
def test_parse_raw_block_errors(path_tmp: Path, block: dict, message: str):
    path = path_tmp / "blocks.jsonl"
    _write_blocks(path, [block])
    with pytest.raises(IngestionError, match=message):
        parse_raw_block_file(path)


def test_parse_raw_block_duplicate_height(path_tmp: Path):
    block = {
        "chain_id": "btc",
        "height": 9,
        "timestamp": "2021-01-01T00:00:00Z",
        "reward_recipients": [{"address": "a", "share": 1.0}],
    }
    path = path_tmp / "blocks.jsonl"
    _write_blocks(path, [block, block])
    with pytest.raises(IngestionError, match="lines 1 and 2"):
        parse_raw_block_file(path)


def test_label_registry(path_tmp: Path):
    path = path_tmp / "registry.json"
    path.write_text(
        json.dumps(
            {
                "mev_builders": ["B"],
                "builder_alternates": {"B2": "B"},
                "builder_proposers": ["B"],
                "known_proposers": ["v1"],
                "node_groups": {"v1": "CEX"},
            }
        )
    )
    registry = load_label_registry(path)
    assert registry.canonical("B2") == "B"
    assert registry.canonical("v1") == "v1"
    assert registry.is_builder("B2")
    assert not registry.is_builder("v1")
    assert registry.group("v1") == "CEX"
    assert registry.group("v2") == "other"


def test_label_registry_invalid(path_tmp: Path):
    path = path_tmp / "registry.json"
    path.write_text(json.dumps({"mev_builder": []}))
    with pytest.raises(IngestionError, match="unknown keys"):
        load_label_registry(path)
    with pytest.raises(IngestionError):
        LabelRegistry(mev_builders=frozenset({"B"}), builder_alternates={"X": "Y"})
    with pytest.raises(IngestionError):
        LabelRegistry(builder_proposers=frozenset({"B"}))


def test_series_file_round_trip(path_tmp: Path):
    rows = [
        SeriesRow("btc", date(2021, 5, 15), {"entropy": 3.25, "price": 1 / 7}),
        SeriesRow("eth", date(2021, 5, 15), {"entropy": 5.5, "price": 2.0}),
    ]
    path = path_tmp / "series.csv"
    write_series_file(path, rows, ["entropy", "price"], Provenance(("decentralab",), (), "1.0"))
    assert read_series_file(path) == rows


def test_read_series_file_errors(path_tmp: Path):
    path = path_tmp / "series.csv"
    path.write_text("day,chain_id,entropy\n")
    with pytest.raises(IngestionError, match="header"):
        read_series_file(path)
    path.write_text("chain_id,day,entropy\nbtc,2021-01-01,1\nbtc,2021-01-01,2\n")
    with pytest.raises(IngestionError, match="duplicate"):
        read_series_file(path)
    path.write_text("chain_id,day,entropy\nbtc,2021-01-01,high\n")
    with pytest.raises(IngestionError):
        read_series_file(path)


def test_forward_fill():
    weekly = {date(2021, 1, 4): 1.0, date(2021, 1, 11): 2.0}
    daily = forward_fill(weekly, date(2021, 1, 1), date(2021, 1, 12))
    assert date(2021, 1, 3) not in daily
    assert daily[date(2021, 1, 4)] == 1.0
    assert daily[date(2021, 1, 10)] == 1.0
    assert daily[date(2021, 1, 12)] == 2.0
    # Observations before the range still carry over.
    assert forward_fill(weekly, date(2021, 1, 5), date(2021, 1, 5)) == {date(2021, 1, 5): 1.0}


def _rows(chains: list[str], first: date, last: date, skip=()) -> list[SeriesRow]:
    return [
        SeriesRow(chain, day, {"entropy": float(i)})
        for chain in chains
        for i, day in enumerate(date_range(first, last))
        if (chain, day) not in skip
    ]


def test_assemble_panel():
    rows = _rows(["btc", "eth"], date(2021, 5, 10), date(2021, 5, 20))
    panel = assemble_panel(rows, date(2021, 5, 15), "btc", exposures={"btc": 0.5})
    assert len(panel) == 22
    assert panel.chains == ("btc", "eth")
    assert panel.controls == ("eth",)
    assert panel.balanced
    obs = panel.observations[5]
    assert (obs.chain_id, obs.day) == ("btc", date(2021, 5, 15))
    assert (obs.chain_indicator, obs.after, obs.during, obs.day_index) == (1, 1, 0, 0)
    assert obs.exposure == 0.5
    before = panel.observations[4]
    assert (before.after, before.day_index) == (0, -1)
    assert all(obs.exposure == 0.0 for obs in panel if obs.chain_id == "eth")
    assert panel.series("eth", "entropy")[date(2021, 5, 20)] == 10.0


def test_assemble_panel_during_window():
    rows = _rows(["btc", "eth"], date(2021, 5, 10), date(2021, 5, 20))
    panel = assemble_panel(rows, date(2021, 5, 15), "btc", during_end=date(2021, 5, 17))
    flags = {obs.day.day: (obs.during, obs.after) for obs in panel if obs.chain_id == "btc"}
    assert flags[14] == (0, 0)
    assert flags[15] == (1, 0)
    assert flags[17] == (1, 0)
    assert flags[18] == (0, 1)


def test_assemble_panel_time_varying_exposure_and_covariates():
    days = date_range(date(2021, 5, 10), date(2021, 5, 12))
    rows = _rows(["btc", "eth"], days[0], days[-1])
    panel = assemble_panel(
        rows,
        days[1],
        "btc",
        exposures={"btc": {day: 0.1 * i for i, day in enumerate(days)}},
        covariates={"price": {chain: {day: 7.0 for day in days} for chain in ["btc", "eth"]}},
    )
    assert [obs.exposure for obs in panel if obs.chain_id == "btc"] == [0.0, 0.1, 0.2]
    assert all(obs.covariates == {"price": 7.0} for obs in panel)


def test_assemble_panel_gaps(caplog):
    skip = {("eth", date(2021, 5, 12))}
    rows = _rows(["btc", "eth"], date(2021, 5, 10), date(2021, 5, 20), skip)
    with caplog.at_level(logging.WARNING, logger="decentralab"):
        panel = assemble_panel(rows, date(2021, 5, 15), "btc")
    assert not panel.balanced
    assert panel.gaps["eth"] == (date(2021, 5, 12),)
    assert panel.gaps["btc"] == ()
    assert "Chain eth lacks 1 of 11 days" in caplog.text


def test_assemble_panel_errors():
    rows = _rows(["btc", "eth"], date(2021, 5, 10), date(2021, 5, 20))
    with pytest.raises(IngestionError, match="absent"):
        assemble_panel(rows, date(2021, 5, 15), "sol")
    with pytest.raises(IngestionError, match="outside the data range"):
        assemble_panel(rows, date(2021, 6, 15), "btc")
    with pytest.raises(IngestionError, match="precedes"):
        assemble_panel(rows, date(2021, 5, 15), "btc", during_end=date(2021, 5, 14))
    with pytest.raises(IngestionError, match="Duplicate"):
        assemble_panel(rows + rows[:1], date(2021, 5, 15), "btc")
    with pytest.raises(IngestionError, match="fraction"):
        assemble_panel(rows, date(2021, 5, 15), "btc", exposures={"btc": 1.5})
    with pytest.raises(IngestionError, match="Covariate"):
        assemble_panel(rows, date(2021, 5, 15), "btc", covariates={"price": {"btc": {}}})


def test_restrict_panel():
    rows = _rows(["btc", "eth"], date(2021, 5, 1), date(2021, 5, 31))
    panel = restrict_panel(assemble_panel(rows, date(2021, 5, 15), "btc"), 3)
    assert panel.days[0] == date(2021, 5, 12)
    assert panel.days[-1] == date(2021, 5, 18)
    assert len(panel) == 14
    with pytest.raises(IngestionError):
        restrict_panel(panel, 0)
