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
"""Tests for the decentralab command-line interface."""

import argparse
import json
import math
from datetime import date, timedelta

import pytest
from path import Path
from stepup.core.config import ConfigLoader

from decentralab.artifacts import FIRST_LINE
from decentralab.cli import (
    CommandError,
    decentralab_subcommand,
    parse_bandwidths,
    parse_pairs,
    run,
)

FIRST = date(2022, 3, 1)
EVENT = date(2022, 5, 1)
LEVELS = {"c1": 2.0, "c2": 2.5, "c3": 3.1, "c4": 3.6}


def data_lines(path: Path) -> list[str]:
    return [line for line in path.read_text().splitlines() if not line.startswith("#")]


def write_lines(path: Path, lines: list[str]) -> Path:
    path.write_text("".join(f"{line}\n" for line in lines))
    return path


@pytest.fixture
def panel_file(path_tmp: Path) -> Path:
    """Series file with additive controls and a treated chain that drops by 0.345."""
    lines = ["chain_id,day,entropy"]
    for k in range(140):
        day = FIRST + timedelta(days=k)
        t = (day - EVENT).days
        trend = 0.1 * math.sin(t / 3) + 0.002 * t
        for chain, level in LEVELS.items():
            lines.append(f"{chain},{day.isoformat()},{level + trend!r}")
        lines.append(f"btc,{day.isoformat()},{2.9 + trend - (0.345 if t >= 0 else 0.0)!r}")
    return write_lines(path_tmp / "panel.csv", lines)


def test_parse_bandwidths():
    assert parse_bandwidths("30") == [30]
    assert parse_bandwidths("10..50") == [10, 20, 30, 40, 50]
    assert parse_bandwidths("10..20", 5) == [10, 15, 20]
    for text in ["ten", "50..10", "1..x"]:
        with pytest.raises(CommandError):
            parse_bandwidths(text)


def test_parse_pairs():
    assert parse_pairs(["btc=0.6", "ltc=0"]) == {"btc": 0.6, "ltc": 0.0}
    with pytest.raises(CommandError):
        parse_pairs(["btc"])
    with pytest.raises(CommandError):
        parse_pairs(["btc=high"])


def test_metrics(uniform_nodes: Path, path_tmp: Path, capsys):
    out = path_tmp / "out"
    assert run(["metrics", "--input", uniform_nodes, "--out", out]) == 0
    lines = (out / "metrics.csv").read_text().splitlines()
    assert lines[0] == FIRST_LINE
    assert "# input" in lines[3]
    assert data_lines(out / "metrics.csv") == [
        "chain_id,day,entropy,nodes,gini,nakamoto,hhi",
        "eth,2022-09-15,2.0,4,0.0,3,0.25",
    ]
    assert (out / "metrics.svg").read_text().count("<svg") == 1
    assert "Wrote metrics of 1" in capsys.readouterr().out


def test_metrics_unknown_metric(uniform_nodes: Path, path_tmp: Path, capsys):
    assert run(["metrics", "--input", uniform_nodes, "--metric", "vibes", "--out", path_tmp]) == 1
    assert "CommandError" in capsys.readouterr().err


def test_missing_input_file(path_tmp: Path, capsys):
    assert run(["metrics", "--input", path_tmp / "missing.csv", "--out", path_tmp]) == 1
    assert "FileNotFoundError" in capsys.readouterr().err


@pytest.mark.parametrize(
    "argv",
    [
        ["did"],
        ["did", "--input", "x.csv", "--treated", "btc"],
        ["did", "--input", "x.csv", "--treated", "btc", "--event-date", "2022-05-01",
         "--cluster", "country"],
        ["metrics", "--input", "x.csv", "--format", "xml"],
        ["teleport"],
    ],
)
def test_usage_errors(argv: list[str]):
    with pytest.raises(SystemExit) as excinfo:
        run(argv)
    assert excinfo.value.code == 2


def test_sdid_bandwidth_sweep(panel_file: Path, path_tmp: Path, capsys):
    argv = ["sdid", "--input", panel_file, "--event-date", "2022-05-01", "--treated", "btc"]
    argv += ["--bandwidth", "10..50", "--step", "10", "--out", path_tmp]
    assert run(argv) == 0
    table = data_lines(path_tmp / "sdid.txt")
    rows = [line for line in table if line.startswith("+/-")]
    assert [row.split()[0] for row in rows] == ["+/-10", "+/-20", "+/-30", "+/-40", "+/-50"]
    assert all(row.split()[2].startswith("-0.345") for row in rows)
    data = json.loads((path_tmp / "sdid.json").read_text())
    assert [r["bandwidth"] for r in data["results"]] == [10, 20, 30, 40, 50]
    assert data["results"][0]["att"] == pytest.approx(-0.345, abs=1e-6)
    assert data["provenance"]["command"][:2] == ["decentralab", "sdid"]
    assert "+/-50 days" in capsys.readouterr().out


def test_sdid_bad_bandwidth(panel_file: Path, path_tmp: Path, capsys):
    argv = ["sdid", "--input", panel_file, "--event-date", "2022-05-01", "--treated", "btc"]
    assert run([*argv, "--bandwidth", "ten", "--out", path_tmp]) == 1
    assert "CommandError" in capsys.readouterr().err


def test_did_sweep(panel_file: Path, path_tmp: Path):
    argv = ["sweep", "--input", panel_file, "--event-date", "2022-05-01", "--treated", "btc"]
    argv += ["--bandwidth", "20..40", "--estimator", "did", "--cluster", "chain"]
    assert run([*argv, "--out", path_tmp]) == 0
    data = json.loads((path_tmp / "sweep.json").read_text())
    assert list(data["results"]) == ["+/-20", "+/-30", "+/-40"]
    assert data["results"]["+/-20"]["clustering"] == "by_chain"


def test_config_file(panel_file: Path, path_tmp: Path):
    config = path_tmp / "config.json"
    config.write_text(
        json.dumps(
            {"input": panel_file, "event-date": "2022-05-01", "treated": "btc", "cluster": "none"}
        )
    )
    assert run(["did", "--config", config, "--out", path_tmp / "a"]) == 0
    data = json.loads((path_tmp / "a" / "did.json").read_text())
    assert data["results"]["(1)"]["clustering"] == "none"
    assert str(config) in [entry["path"] for entry in data["provenance"]["inputs"]]
    # Explicit flags override the config file.
    assert run(["did", "--config", config, "--cluster", "chain", "--out", path_tmp / "b"]) == 0
    data = json.loads((path_tmp / "b" / "did.json").read_text())
    assert data["results"]["(1)"]["clustering"] == "by_chain"


def test_config_file_errors(path_tmp: Path):
    config = path_tmp / "config.json"
    config.write_text(json.dumps({"flux": 3}))
    with pytest.raises(SystemExit) as excinfo:
        run(["metrics", "--config", config])
    assert excinfo.value.code == 2
    config.write_text("[1, 2]")
    with pytest.raises(SystemExit):
        run(["metrics", "--config", config])


def test_stepup_tool(panel_file: Path, path_tmp: Path):
    parser = argparse.ArgumentParser(prog="stepup")
    subparsers = parser.add_subparsers(dest="tool", required=True)
    tool = decentralab_subcommand(subparsers, ConfigLoader())
    argv = ["decentralab", "did", "--input", panel_file, "--event-date", "2022-05-01"]
    args = parser.parse_args([*argv, "--treated", "btc", "--out", path_tmp])
    assert args.cluster == "chain-month"
    assert not hasattr(args, "config")
    tool(args)
    data = json.loads((path_tmp / "did.json").read_text())
    assert data["results"]["(1)"]["clustering"] == "by_chain_month"


def test_lagged_did(panel_file: Path, path_tmp: Path):
    argv = ["lagged-did", "--input", panel_file, "--event-date", "2022-05-01", "--treated", "btc"]
    assert run([*argv, "--lag-step", "14", "--max-lag", "3", "--out", path_tmp]) == 0
    lags = data_lines(path_tmp / "lagged_did_lags.csv")
    assert lags[0] == "lag,estimate,ci_low,ci_high"
    assert [line.split(",")[0] for line in lags[1:]] == ["-3", "-2", "-1", "0", "1", "2", "3"]
    assert (path_tmp / "lagged_did_lags.svg").exists()


def test_event_study(path_tmp: Path, capsys):
    lines = ["chain_id,day,entropy"]
    for t in range(-60, 61):
        value = 3.0 + (-0.344 + 0.008 * t if t >= 0 else 0.0)
        lines.append(f"eth,{(EVENT + timedelta(days=t)).isoformat()},{value!r}")
    path = write_lines(path_tmp / "eth.csv", lines)
    argv = ["event-study", "--input", path, "--event-date", "2022-05-01", "--chain", "eth"]
    assert run([*argv, "--out", path_tmp]) == 0
    recovery = json.loads((path_tmp / "recovery.json").read_text())
    assert recovery["jump"] == pytest.approx(-0.344, abs=1e-9)
    assert recovery["post_slope"] == pytest.approx(0.008, abs=1e-9)
    assert recovery["recovery_days"] == pytest.approx(43.0, rel=1e-6)
    data = json.loads((path_tmp / "event_study.json").read_text())
    assert data["results"]["(1)"]["clustering"] == "none"
    assert "Recovery time: 43.0 days" in capsys.readouterr().out
    assert run([*argv[:-1], "doge", "--out", path_tmp]) == 1


def test_attrition(path_tmp: Path):
    lines = ["chain_id,day,node_id,blocks"]
    for t in range(-3, 3):
        day = date(2021, 5, 15) + timedelta(days=t)
        nodes = "abcd" if t <= 0 else "ab"
        lines.extend(f"btc,{day.isoformat()},{node},10" for node in nodes)
    path = write_lines(path_tmp / "btc.csv", lines)
    argv = ["attrition", "--input", path, "--event-date", "2021-05-15", "--lookback", "3"]
    assert run([*argv, "--horizon", "2", "--out", path_tmp]) == 0
    assert data_lines(path_tmp / "attrition.csv") == [
        "day,lost_nodes,lost_share",
        "2021-05-16,2,0.5",
        "2021-05-17,2,0.5",
    ]


def test_exposure_and_correlate(path_tmp: Path):
    lines = ["chain_id,day,hashrate,price"]
    for t in range(-10, 10):
        day = (EVENT + timedelta(days=t)).isoformat()
        lines.append(f"btc,{day},{100.0 if t < 0 else 40.0},{50.0 - t}")
        lines.append(f"ltc,{day},{50.0 + t},{20.0 - t}")
    series = write_lines(path_tmp / "series.csv", lines)
    argv = ["exposure", "--input", series, "--event-date", "2022-05-01", "--out", path_tmp]
    assert run(argv) == 0
    assert data_lines(path_tmp / "exposure.csv") == ["chain_id,exposure", "btc,0.6", "ltc,0.0"]
    argv = ["correlate", "--input", series, "--metric", "hashrate", "--price", series]
    assert run([*argv, "--out", path_tmp]) == 0
    rows = dict(line.split(",") for line in data_lines(path_tmp / "correlation.csv")[1:])
    assert float(rows["btc"]) > 0.8
    assert float(rows["ltc"]) == pytest.approx(-1.0)


SCENARIO = {
    "n_days": 40,
    "start_date": "2021-01-01",
    "treated": {
        "chain_id": "btc",
        "n_nodes": 8,
        "resource_flexibility": 1.0,
        "shocks": [
            {"kind": "infrastructure_instant", "event_date": "2021-01-21", "affected_share": 0.25}
        ],
    },
    "controls": [{"chain_id": "ltc", "n_nodes": 6}, {"chain_id": "doge", "n_nodes": 10}],
}

SIMULATED = ("btc.csv", "doge.csv", "ground_truth.json", "ltc.csv")


def test_simulate_is_deterministic(path_tmp: Path):
    scenario = path_tmp / "scenario.json"
    scenario.write_text(json.dumps(SCENARIO))
    argv = ["simulate", "--scenario", scenario, "--seed", "3", "--out", path_tmp / "sim"]
    assert run(argv) == 0
    first = {name: (path_tmp / "sim" / name).read_bytes() for name in SIMULATED}
    assert run(argv) == 0
    second = {name: (path_tmp / "sim" / name).read_bytes() for name in SIMULATED}
    assert first == second
    assert run([*argv[:4], "4", *argv[5:]]) == 0
    assert (path_tmp / "sim" / "btc.csv").read_bytes() != first["btc.csv"]


def test_end_to_end(path_tmp: Path):
    scenario = path_tmp / "scenario.json"
    scenario.write_text(json.dumps(SCENARIO))
    sim = path_tmp / "sim"
    res = path_tmp / "res"
    assert run(["simulate", "--scenario", scenario, "--out", sim]) == 0
    inputs = [word for name in ("btc", "ltc", "doge") for word in ("--input", sim / f"{name}.csv")]
    assert run(["metrics", *inputs, "--out", res]) == 0
    assert len(data_lines(res / "metrics.csv")) == 1 + 3 * 40

    panel = ["--input", res / "metrics.csv", "--event-date", "2021-01-21", "--treated", "btc"]
    assert run(["did", *panel, "--cluster", "none", "--out", res]) == 0
    did = json.loads((res / "did.json").read_text())["results"]["(1)"]
    assert did["coefficients"]["treatment"] < -0.3
    report = (res / "did.txt").read_bytes()
    assert run(["did", *panel, "--cluster", "none", "--out", res]) == 0
    assert (res / "did.txt").read_bytes() == report

    assert run(["sdid", *panel, "--bandwidth", "5..15", "--step", "5", "--out", res]) == 0
    results = json.loads((res / "sdid.json").read_text())["results"]
    assert len(results) == 3
    assert all(r["att"] < -0.3 for r in results)
    assert all(r["n_placebos"] == 200 for r in results)


def test_large_panel_pipeline(path_tmp: Path):
    scenario = path_tmp / "scenario.json"
    large = {
        "n_days": 200,
        "start_date": "2021-01-01",
        "treated": {
            "chain_id": "btc",
            "n_nodes": 1000,
            "shocks": [
                {
                    "kind": "infrastructure_instant",
                    "event_date": "2021-04-11",
                    "affected_share": 0.25,
                }
            ],
        },
        "controls": [{"chain_id": "ltc", "n_nodes": 1000}, {"chain_id": "doge", "n_nodes": 1000}],
    }
    scenario.write_text(json.dumps(large))
    sim = path_tmp / "sim"
    assert run(["simulate", "--scenario", scenario, "--seed", "2", "--out", sim]) == 0
    inputs = [word for name in ("btc", "ltc", "doge") for word in ("--input", sim / f"{name}.csv")]
    panel = ["--input", path_tmp / "metrics.csv", "--event-date", "2021-04-11", "--treated", "btc"]
    reports = []
    for _ in range(2):
        assert run(["metrics", *inputs, "--out", path_tmp]) == 0
        assert run(["did", *panel, "--out", path_tmp]) == 0
        reports.append(
            [(path_tmp / name).read_bytes() for name in ("metrics.csv", "did.txt", "did.json")]
        )
    assert reports[0] == reports[1]
    assert len(data_lines(path_tmp / "metrics.csv")) == 1 + 3 * 200
    did = json.loads((path_tmp / "did.json").read_text())["results"]["(1)"]
    # About 0.22 bits lost when a quarter of 1000 equal nodes drops out at 1000 blocks per day.
    assert -0.3 < did["coefficients"]["treatment"] < -0.15
