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
"""The `decentralab` command-line interface.

Every subcommand reads flat files, writes its artifacts atomically to the `--out` directory
and embeds a provenance header in each of them.
The environment variable `DECENTRALAB_LOG` sets the log level.
"""

import argparse
import json
import sys
from collections.abc import Callable, Sequence

from path import Path
from rich.console import Console
from stepup.core.config import ConfigLoader

from .artifacts import Provenance, write_json_artifact, write_svg_artifact, write_text_artifact
from .attribution import (
    aggregate_node_days,
    attribute_blocks,
    node_attrition,
    write_quarantine_report,
)
from .econometrics import Clustering, did, did_bandwidth_sweep, event_study, lagged_did
from .econometrics import multi_period_did
from .ingestion import (
    Panel,
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
from .metrics import (
    DEFAULT_THRESHOLD,
    METRIC_NAMES,
    distributions_from_records,
    exposure_drawdown,
    knockout_series,
    metrics_table,
    mev_prevalence,
    pearson_correlation,
    recovery_time,
    write_metrics_file,
)
from .report import (
    plot_series,
    regression_table,
    sdid_sweep_table,
    write_lag_report,
    write_regression_report,
)
from .sdid import sdid_bandwidth_sweep
from .shocklab import load_scenario, simulate_event_panel
from .utils import configure_logging, format_decimal, parse_day

__all__ = ("add_commands", "build_parser", "decentralab_subcommand", "execute", "main", "run")


CLUSTER_CHOICES = {
    "none": Clustering.NONE,
    "chain": Clustering.BY_CHAIN,
    "chain-month": Clustering.BY_CHAIN_MONTH,
    "chain-x-month": Clustering.BY_CHAIN_X_MONTH,
}

DEFAULTS = {
    "out": ".",
    "format": None,
    "threshold": DEFAULT_THRESHOLD,
    "metric": "entropy",
    "cluster": "chain-month",
    "seed": 0,
    "step": 10,
    "estimator": "sdid",
    "lookback": 30,
    "horizon": 30,
    "peak_window": 30,
    "trough_window": 30,
    "column": "hashrate",
    "price_column": "price",
}

REQUIRED = {
    "metrics": ("input",),
    "did": ("input", "event_date", "treated"),
    "lagged-did": ("input", "event_date", "treated", "lag_step", "max_lag"),
    "multiperiod-did": ("input", "event_date", "treated", "during_end"),
    "event-study": ("input", "event_date", "chain"),
    "sdid": ("input", "event_date", "treated", "bandwidth"),
    "sweep": ("input", "event_date", "treated", "bandwidth"),
    "simulate": ("scenario",),
    "knockout": ("input", "registry"),
    "attrition": ("input", "event_date"),
    "correlate": ("input", "price"),
    "attribute": ("input",),
    "exposure": ("input", "event_date"),
}

LIST_OPTIONS = ("input", "exposure", "chain_threshold", "exclude")


class CommandError(ValueError):
    """Invalid combination of command-line options, detected after parsing."""


#
# Option parsing
#


def parse_bandwidths(text: str, step: int = 10) -> list[int]:
    """Parse a bandwidth `N` or an inclusive range `A..B` traversed with `step`."""
    text = str(text).strip()
    try:
        if ".." in text:
            first, last = (int(word) for word in text.split("..", 1))
            if step < 1 or last < first:
                raise CommandError(f"Invalid bandwidth range {text} with step {step}.")
            return list(range(first, last + 1, step))
        return [int(text)]
    except ValueError as exc:
        if isinstance(exc, CommandError):
            raise
        raise CommandError(f"Invalid bandwidth '{text}'. Use N or A..B.") from exc


def parse_pairs(items: Sequence[str]) -> dict[str, float]:
    """Parse repeated `key=value` options with numeric values."""
    result = {}
    for item in items:
        key, sep, value = str(item).partition("=")
        if sep == "" or key == "":
            raise CommandError(f"Expected key=value, got '{item}'.")
        try:
            result[key] = float(value)
        except ValueError as exc:
            raise CommandError(f"Value of '{key}' is not a number: '{value}'.") from exc
    return result


def _add_panel_options(parser: argparse.ArgumentParser):
    parser.add_argument(
        "--event-date", help="Treatment date (YYYY-MM-DD), first day with after = 1."
    )
    parser.add_argument("--treated", help="Chain id of the treated chain.")
    parser.add_argument("--metric", help="Dependent variable. [default=entropy]")
    parser.add_argument(
        "--exposure",
        action="append",
        help="Exposure of a chain as chain=fraction. Can be repeated.",
    )
    parser.add_argument(
        "--covariates",
        help="Series file with covariates, forward-filled to daily values per chain.",
    )
    parser.add_argument(
        "--cluster",
        help="Covariance estimator: none, chain, chain-month or chain-x-month. "
        "[default=chain-month]",
    )
    parser.add_argument(
        "--month-fe",
        action="store_true",
        default=None,
        help="Absorb calendar-month fixed effects.",
    )


def build_parser(loader: ConfigLoader | None = None) -> argparse.ArgumentParser:
    """Construct the argument parser of the `decentralab` script."""
    parser, _ = _build_parser(loader)
    return parser


def _build_parser(
    loader: ConfigLoader | None,
) -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(
        prog="decentralab",
        description="Measure consensus decentralization and estimate the effect of shocks on it. "
        "The log level is set with the environment variable DECENTRALAB_LOG.",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    commands = add_commands(subparsers, ConfigLoader() if loader is None else loader)
    return parser, commands


def add_commands(
    subparsers, loader: ConfigLoader, config_option: bool = True
) -> dict[str, argparse.ArgumentParser]:
    """Add one subparser per command and return them by name.

    Built-in defaults are set first. The StepUp configuration loaded by `loader` overrides them.
    """
    commands = {}

    def add(name: str, help_text: str) -> argparse.ArgumentParser:
        sub = subparsers.add_parser(name, help=help_text)
        if config_option:
            sub.add_argument(
                "--config", help="JSON file with option values. Explicit flags take precedence."
            )
        sub.add_argument("--out", help="Output directory. [default=.]")
        commands[name] = sub
        return sub

    sub = add("metrics", "Compute daily decentralization metrics from node-day files.")
    sub.add_argument("--input", action="append", help="Node-day file. Can be repeated.")
    sub.add_argument("--format", choices=["csv", "jsonl"], help="Input format. [default=auto]")
    sub.add_argument("--threshold", type=float, help="Nakamoto threshold. [default=0.51]")
    sub.add_argument(
        "--chain-threshold",
        action="append",
        help="Nakamoto threshold of one chain as chain=fraction. Can be repeated.",
    )
    sub.add_argument("--metric", help="Metric to plot. [default=entropy]")

    sub = add("did", "Difference-in-differences on a metric panel.")
    sub.add_argument("--input", action="append", help="Series file. Can be repeated.")
    _add_panel_options(sub)
    sub.add_argument("--bandwidth", help="Restrict to +/- N days around the event.")
    sub.add_argument("--with-exposure", action="store_true", default=None)
    sub.add_argument(
        "--interactions",
        action="store_true",
        default=None,
        help="Interact the treatment with each covariate.",
    )

    sub = add("lagged-did", "Difference-in-differences with lagged treatment dummies.")
    sub.add_argument("--input", action="append", help="Series file. Can be repeated.")
    _add_panel_options(sub)
    sub.add_argument("--lag-step", type=int, help="Days per lag bucket.")
    sub.add_argument("--max-lag", type=int, help="Number of lag buckets on each side.")

    sub = add("multiperiod-did", "Difference-in-differences with during and after periods.")
    sub.add_argument("--input", action="append", help="Series file. Can be repeated.")
    _add_panel_options(sub)
    sub.add_argument("--during-end", help="Last day of the during period (YYYY-MM-DD).")
    sub.add_argument("--time-varying", action="store_true", default=None)
    sub.add_argument("--with-exposure", action="store_true", default=None)

    sub = add("event-study", "Jump and slope change of a single series at an event.")
    sub.add_argument("--input", action="append", help="Series file.")
    sub.add_argument("--event-date", help="Event date (YYYY-MM-DD).")
    sub.add_argument("--chain", help="Chain id of the series.")
    sub.add_argument("--metric", help="Column to analyze. [default=entropy]")
    sub.add_argument("--cluster", help="Covariance estimator. [default=none]")

    for name, help_text in [
        ("sdid", "Synthetic difference-in-differences."),
        ("sweep", "Re-estimate an estimator over a range of bandwidths."),
    ]:
        sub = add(name, help_text)
        sub.add_argument("--input", action="append", help="Series file. Can be repeated.")
        _add_panel_options(sub)
        sub.add_argument("--bandwidth", help="Bandwidth N or range A..B in days.")
        sub.add_argument("--step", type=int, help="Step of a bandwidth range. [default=10]")
        sub.add_argument("--uniform-weights", action="store_true", default=None)
        sub.add_argument("--sparse", action="store_true", default=None)
        sub.add_argument(
            "--resamples",
            type=int,
            help="Resampled placebos, 0 for leave-one-out. [default=200 below 10 controls]",
        )
        sub.add_argument("--seed", type=int, help="Seed of resampled placebos. [default=0]")
        if name == "sweep":
            sub.add_argument("--estimator", choices=["sdid", "did"], help="[default=sdid]")

    sub = add("simulate", "Simulate a shock scenario with known ground truth.")
    sub.add_argument("--scenario", help="Scenario JSON file.")
    sub.add_argument("--seed", type=int, help="Master seed. [default=0]")

    sub = add("knockout", "Daily entropy with each labeled node group excluded.")
    sub.add_argument("--input", action="append", help="Node-day file. Can be repeated.")
    sub.add_argument("--registry", help="Label registry JSON file.")
    sub.add_argument("--exclude", action="append", help="Group to knock out. Can be repeated.")

    sub = add("attrition", "Fraction of pre-event production lost after an event.")
    sub.add_argument("--input", action="append", help="Node-day file of one chain.")
    sub.add_argument("--event-date", help="Event date (YYYY-MM-DD).")
    sub.add_argument("--lookback", type=int, help="Days before the event. [default=30]")
    sub.add_argument("--horizon", type=int, help="Days after the event. [default=30]")

    sub = add("correlate", "Correlation of a metric with a price series, per chain.")
    sub.add_argument("--input", action="append", help="Metric series file. Can be repeated.")
    sub.add_argument("--price", help="Series file with prices.")
    sub.add_argument("--metric", help="[default=entropy]")
    sub.add_argument("--price-column", help="[default=price]")

    sub = add("attribute", "Attribute raw blocks to producers.")
    sub.add_argument("--input", action="append", help="Raw block file. Can be repeated.")
    sub.add_argument("--registry", help="Label registry JSON file.")

    sub = add("exposure", "Peak-to-trough hashrate drawdown per chain.")
    sub.add_argument("--input", action="append", help="Hashrate series file.")
    sub.add_argument("--event-date", help="Event date (YYYY-MM-DD).")
    sub.add_argument("--column", help="Column with the hashrate. [default=hashrate]")
    sub.add_argument("--peak-window", type=int, help="[default=30]")
    sub.add_argument("--trough-window", type=int, help="[default=30]")

    for name, sub in commands.items():
        dests = vars(sub.parse_args([]))
        sub.set_defaults(**{dest: value for dest, value in DEFAULTS.items() if dest in dests})
        if name == "event-study":
            sub.set_defaults(cluster="none")
        loader.patch_parser(sub)
    return commands


def decentralab_subcommand(subparsers, loader: ConfigLoader) -> Callable:
    """Register all commands under `stepup decentralab`."""
    parser = subparsers.add_parser(
        "decentralab", help="Measure consensus decentralization and estimate shock effects."
    )
    commands = add_commands(
        parser.add_subparsers(dest="command", required=True), loader, config_option=False
    )

    def decentralab_tool(args: argparse.Namespace):
        _check_args(commands[args.command], args)
        if execute(args, sys.argv) != 0:
            sys.exit(1)

    return decentralab_tool


def _load_config_file(
    sub: argparse.ArgumentParser, path: str, command: str
) -> dict[str, object]:
    """Option values from a `--config` file, keyed by destination."""
    try:
        config = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        sub.error(f"Could not load config file {path}: {exc}")
    if not isinstance(config, dict):
        sub.error(f"Config file {path} must contain a JSON object.")
    dests = vars(sub.parse_args([]))
    values = {}
    for key, value in config.items():
        dest = key.replace("-", "_")
        if dest == "config" or dest not in dests:
            sub.error(f"Unknown option '{key}' for {command} in {path}.")
        values[dest] = value
    return values


def _parse_args(
    parser: argparse.ArgumentParser,
    commands: dict[str, argparse.ArgumentParser],
    argv: list[str],
) -> argparse.Namespace:
    """Parse the command line, with values from `--config` as defaults of the command."""
    args = parser.parse_args(argv)
    if args.config is None:
        return args
    sub = commands[args.command]
    values = _load_config_file(sub, args.config, args.command)
    sub.set_defaults(**{dest: v for dest, v in values.items() if dest not in LIST_OPTIONS})
    args = parser.parse_args(argv)
    # Repeated options are replaced, not extended, by the command line.
    for dest in LIST_OPTIONS:
        if dest in values and getattr(args, dest) is None:
            value = values[dest]
            setattr(args, dest, value if isinstance(value, list) else [value])
    return args


def _check_args(sub: argparse.ArgumentParser, args: argparse.Namespace):
    """Report missing required options and fill in empty repeated options."""
    missing = [
        "--" + dest.replace("_", "-")
        for dest in REQUIRED[args.command]
        if getattr(args, dest) is None
    ]
    if len(missing) > 0:
        sub.error(f"{args.command}: the following options are required: {', '.join(missing)}")
    for dest in LIST_OPTIONS:
        if hasattr(args, dest) and getattr(args, dest) is None:
            setattr(args, dest, [])
    if hasattr(args, "cluster") and args.cluster not in CLUSTER_CHOICES:
        sub.error(f"--cluster must be one of {', '.join(CLUSTER_CHOICES)}.")


def _input_paths(args: argparse.Namespace) -> list[str]:
    paths = list(getattr(args, "input", []))
    for dest in ("config", "covariates", "registry", "scenario", "price"):
        value = getattr(args, dest, None)
        if value is not None:
            paths.append(value)
    return paths


#
# Shared steps
#


def _load_panel(args: argparse.Namespace, during_end: str | None = None) -> Panel:
    rows = []
    for path in args.input:
        rows.extend(read_series_file(path))
    event_date = parse_day(args.event_date)
    covariates = None
    if args.covariates is not None:
        first = min(row.day for row in rows)
        last = max(row.day for row in rows)
        covariates = {}
        for row in read_series_file(args.covariates):
            for name, value in row.values.items():
                covariates.setdefault(name, {}).setdefault(row.chain_id, {})[row.day] = value
        covariates = {
            name: {chain: forward_fill(obs, first, last) for chain, obs in per_chain.items()}
            for name, per_chain in covariates.items()
        }
    return assemble_panel(
        rows,
        event_date,
        args.treated,
        None if during_end is None else parse_day(during_end),
        parse_pairs(args.exposure),
        covariates,
    )


def _covariate_names(args: argparse.Namespace) -> list[str]:
    if args.covariates is None:
        return []
    return sorted({name for row in read_series_file(args.covariates) for name in row.values})


def _read_node_days(args: argparse.Namespace) -> list:
    records = []
    for path in args.input:
        fmt = getattr(args, "format", None)
        if fmt is None:
            fmt = "jsonl" if str(path).endswith((".jsonl", ".json")) else "csv"
        records.extend(parse_node_day_file(path, fmt))
    return records


def _column(row: SeriesRow, name: str, path: str) -> float:
    if name not in row.values:
        raise CommandError(f"Column '{name}' not found in {path}.")
    return row.values[name]


def _print_lines(console: Console, lines: Sequence[str]):
    for line in lines:
        console.print(line, markup=False)


#
# Commands
#


def metrics_tool(args: argparse.Namespace, out: Path, provenance: Provenance, console: Console):
    """Node-day files to daily metric rows and a plot of one metric."""
    if args.metric not in METRIC_NAMES:
        raise CommandError(
            f"Unknown metric '{args.metric}'. Choose from {', '.join(METRIC_NAMES)}."
        )
    rows = metrics_table(
        distributions_from_records(_read_node_days(args)),
        parse_pairs(args.chain_threshold),
        args.threshold,
    )
    write_metrics_file(out / "metrics.csv", rows, provenance)
    series = {}
    for row in rows:
        series.setdefault(row.chain_id, {})[row.day] = float(row.as_values()[args.metric])
    write_svg_artifact(
        out / "metrics.svg", plot_series(series, ylabel=args.metric), provenance
    )
    console.print(f"Wrote metrics of {len(rows)} chain-days to {out / 'metrics.csv'}")


def did_tool(args: argparse.Namespace, out: Path, provenance: Provenance, console: Console):
    panel = _load_panel(args)
    if args.bandwidth is not None:
        panel = restrict_panel(panel, parse_bandwidths(args.bandwidth)[0])
    result = did(
        panel,
        dependent=args.metric,
        with_exposure=bool(args.with_exposure),
        covariates=_covariate_names(args),
        interactions=bool(args.interactions),
        clustering=CLUSTER_CHOICES[args.cluster],
        month_fe=bool(args.month_fe),
    )
    write_regression_report(out / "did", [result], provenance=provenance)
    _print_lines(console, regression_table([result]))


def lagged_did_tool(args: argparse.Namespace, out: Path, provenance: Provenance, console: Console):
    result = lagged_did(
        _load_panel(args),
        args.lag_step,
        args.max_lag,
        dependent=args.metric,
        clustering=CLUSTER_CHOICES[args.cluster],
        month_fe=bool(args.month_fe),
    )
    write_lag_report(out / "lagged_did", result, provenance, title=f"Treated: {args.treated}")
    _print_lines(console, regression_table([result]))


def multiperiod_did_tool(
    args: argparse.Namespace, out: Path, provenance: Provenance, console: Console
):
    result = multi_period_did(
        _load_panel(args, args.during_end),
        time_varying=bool(args.time_varying),
        with_exposure=args.with_exposure,
        dependent=args.metric,
        clustering=CLUSTER_CHOICES[args.cluster],
        month_fe=bool(args.month_fe),
    )
    write_regression_report(out / "multiperiod_did", [result], provenance=provenance)
    _print_lines(console, regression_table([result]))


def event_study_tool(
    args: argparse.Namespace, out: Path, provenance: Provenance, console: Console
):
    """Event study of one chain, with the implied recovery time."""
    series = {}
    for path in args.input:
        for row in read_series_file(path):
            if row.chain_id == args.chain:
                series[row.day] = _column(row, args.metric, path)
    if len(series) == 0:
        raise CommandError(f"No rows of chain '{args.chain}' in {', '.join(args.input)}.")
    event_date = parse_day(args.event_date)
    result = event_study(series, event_date, CLUSTER_CHOICES[args.cluster], args.metric)
    jump = result.coefficients["after"]
    post_slope = result.coefficients["day"] + result.coefficients["after_day"]
    recovery = recovery_time(jump, post_slope) if jump < 0 else recovery_time(jump, -post_slope)
    write_regression_report(out / "event_study", [result], provenance=provenance)
    write_json_artifact(
        out / "recovery.json",
        {"jump": jump, "post_slope": post_slope, "recovery_days": recovery},
        provenance,
    )
    write_svg_artifact(
        out / "event_study.svg",
        plot_series({args.chain: series}, event_date, ylabel=args.metric),
        provenance,
    )
    _print_lines(console, regression_table([result]))
    if recovery is None:
        console.print("The post-event slope does not point towards recovery.")
    else:
        console.print(f"Recovery time: {recovery:.1f} days")


def _sdid_options(args: argparse.Namespace) -> dict:
    return {
        "dependent": args.metric,
        "uniform_weights": bool(args.uniform_weights),
        "sparse": bool(args.sparse),
        "n_resamples": args.resamples,
        "seed": args.seed,
    }


def sdid_tool(args: argparse.Namespace, out: Path, provenance: Provenance, console: Console):
    """Synthetic DiD at one bandwidth or a sweep table over a range of bandwidths."""
    bandwidths = parse_bandwidths(args.bandwidth, args.step)
    results = sdid_bandwidth_sweep(_load_panel(args), bandwidths, **_sdid_options(args))
    table = sdid_sweep_table(results)
    write_text_artifact(out / "sdid.txt", table, provenance)
    write_json_artifact(out / "sdid.json", {"results": [r.to_dict() for r in results]}, provenance)
    _print_lines(console, table)


def sweep_tool(args: argparse.Namespace, out: Path, provenance: Provenance, console: Console):
    """Bandwidth sweep of SDiD or DiD."""
    bandwidths = parse_bandwidths(args.bandwidth, args.step)
    panel = _load_panel(args)
    if args.estimator == "sdid":
        results = sdid_bandwidth_sweep(panel, bandwidths, **_sdid_options(args))
        table = sdid_sweep_table(results)
        write_text_artifact(out / "sweep.txt", table, provenance)
        write_json_artifact(
            out / "sweep.json", {"results": [r.to_dict() for r in results]}, provenance
        )
    else:
        pairs = did_bandwidth_sweep(
            panel,
            bandwidths,
            dependent=args.metric,
            clustering=CLUSTER_CHOICES[args.cluster],
            month_fe=bool(args.month_fe),
        )
        titles = [f"+/-{bw}" for bw, _ in pairs]
        results = [result for _, result in pairs]
        write_regression_report(out / "sweep", results, titles, provenance)
        table = regression_table(results, titles)
    _print_lines(console, table)


def simulate_tool(args: argparse.Namespace, out: Path, provenance: Provenance, console: Console):
    scenario = load_scenario(args.scenario).with_seed(args.seed)
    simulation = simulate_event_panel(scenario, out, provenance)
    for chain_id, result in simulation.results.items():
        console.print(f"Simulated {chain_id}: {len(result.records)} node-day records")


def knockout_tool(args: argparse.Namespace, out: Path, provenance: Provenance, console: Console):
    registry = load_label_registry(args.registry)
    rows = knockout_series(
        distributions_from_records(_read_node_days(args)),
        registry,
        args.exclude if len(args.exclude) > 0 else None,
    )
    columns = list(rows[0].values) if len(rows) > 0 else ["entropy"]
    write_series_file(out / "knockout.csv", rows, columns, provenance)
    console.print(f"Wrote knockout entropy for {len(columns) - 1} groups to {out / 'knockout.csv'}")


def attrition_tool(args: argparse.Namespace, out: Path, provenance: Provenance, console: Console):
    points = node_attrition(
        _read_node_days(args), parse_day(args.event_date), args.lookback, args.horizon
    )
    lines = ["day,lost_nodes,lost_share"]
    lines.extend(
        f"{p.day.isoformat()},{p.lost_nodes},{format_decimal(p.lost_share)}" for p in points
    )
    write_text_artifact(out / "attrition.csv", lines, provenance)
    if len(points) > 0:
        last = points[-1]
        console.print(
            f"After {len(points)} days: {last.lost_nodes} nodes lost, "
            f"{last.lost_share:.1%} of pre-event production"
        )


def correlate_tool(args: argparse.Namespace, out: Path, provenance: Provenance, console: Console):
    metric = {}
    for path in args.input:
        for row in read_series_file(path):
            metric.setdefault(row.chain_id, {})[row.day] = _column(row, args.metric, path)
    prices = {}
    for row in read_series_file(args.price):
        prices.setdefault(row.chain_id, {})[row.day] = _column(row, args.price_column, args.price)
    correlations = {
        chain_id: pearson_correlation(metric[chain_id], prices[chain_id])
        for chain_id in sorted(set(metric) & set(prices))
    }
    if len(correlations) == 0:
        raise CommandError("No chain has both metric and price data.")
    lines = ["chain_id,correlation"]
    lines.extend(f"{chain},{format_decimal(r)}" for chain, r in correlations.items())
    write_text_artifact(out / "correlation.csv", lines, provenance)
    _print_lines(console, lines)


def attribute_tool(args: argparse.Namespace, out: Path, provenance: Provenance, console: Console):
    """Raw blocks to a node-day file, a quarantine report and daily MEV prevalence."""
    blocks = []
    for path in args.input:
        blocks.extend(parse_raw_block_file(path))
    registry = None if args.registry is None else load_label_registry(args.registry)
    report = attribute_blocks(blocks, registry)
    write_node_day_file(out / "nodes.csv", aggregate_node_days(report.outcomes), "csv", provenance)
    write_quarantine_report(out / "quarantine.csv", report.quarantine, provenance)
    prevalence = mev_prevalence(report.outcomes)
    write_series_file(
        out / "mev.csv", prevalence, ["builder_share", "builder_proposer_fraction"], provenance
    )
    console.print(
        f"Attributed {len(blocks) - len(report.quarantine)} of {len(blocks)} blocks, "
        f"quarantined {len(report.quarantine)}"
    )


def exposure_tool(args: argparse.Namespace, out: Path, provenance: Provenance, console: Console):
    event_date = parse_day(args.event_date)
    series = {}
    for path in args.input:
        for row in read_series_file(path):
            series.setdefault(row.chain_id, {})[row.day] = _column(row, args.column, path)
    lines = ["chain_id,exposure"]
    for chain_id, values in sorted(series.items()):
        drawdown = exposure_drawdown(values, event_date, args.peak_window, args.trough_window)
        lines.append(f"{chain_id},{format_decimal(drawdown)}")
    write_text_artifact(out / "exposure.csv", lines, provenance)
    _print_lines(console, lines)


TOOLS: dict[str, Callable] = {
    "metrics": metrics_tool,
    "did": did_tool,
    "lagged-did": lagged_did_tool,
    "multiperiod-did": multiperiod_did_tool,
    "event-study": event_study_tool,
    "sdid": sdid_tool,
    "sweep": sweep_tool,
    "simulate": simulate_tool,
    "knockout": knockout_tool,
    "attrition": attrition_tool,
    "correlate": correlate_tool,
    "attribute": attribute_tool,
    "exposure": exposure_tool,
}


def execute(
    args: argparse.Namespace, command_line: Sequence[str], console: Console | None = None
) -> int:
    """Run the tool of a parsed command and return the exit status.

    Domain and I/O errors are printed and give status 1.
    """
    if console is None:
        console = Console(highlight=False)
    error_console = Console(stderr=True, highlight=False)
    configure_logging(console=error_console)
    try:
        out = Path(args.out)
        out.makedirs_p()
        provenance = Provenance.from_inputs(command_line, _input_paths(args))
        TOOLS[args.command](args, out, provenance, console)
    except (ValueError, OSError) as exc:
        error_console.print(f"{type(exc).__name__}: {exc}", style="red", markup=False)
        return 1
    return 0


def run(
    argv: Sequence[str] | None = None,
    console: Console | None = None,
    loader: ConfigLoader | None = None,
) -> int:
    """Run one command and return the exit status.

    Usage errors raise `SystemExit` with status 2 from argparse.
    Domain and I/O errors are printed and give status 1.
    """
    if argv is None:
        argv = sys.argv[1:]
    argv = [str(word) for word in argv]
    parser, commands = _build_parser(loader)
    args = _parse_args(parser, commands, argv)
    _check_args(commands[args.command], args)
    return execute(args, ["decentralab", *argv], console)


def main():
    """Entry point of the `decentralab` script."""
    sys.exit(run())
