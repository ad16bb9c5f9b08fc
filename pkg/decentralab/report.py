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
"""Rendering of estimation results: star tables, plot series and static SVG plots."""

import io
import math
from collections.abc import Mapping, Sequence
from datetime import date

import matplotlib as mpl
from matplotlib.figure import Figure

from .artifacts import Provenance, write_json_artifact, write_svg_artifact, write_text_artifact
from .econometrics import LagEstimate, RegressionResult, lag_coefficients
from .sdid import SdidResult

__all__ = (
    "LAG_COLUMNS",
    "lag_series_lines",
    "plot_lag_series",
    "plot_series",
    "regression_table",
    "sdid_sweep_table",
    "significance_stars",
    "write_lag_report",
    "write_regression_report",
)


LAG_COLUMNS = ("lag", "estimate", "ci_low", "ci_high")

CLUSTER_NOTES = {
    "none": "Heteroskedasticity-robust standard errors in parentheses.",
    "by_chain": "Standard errors clustered by blockchain in parentheses.",
    "by_chain_month": "Standard errors clustered by blockchain and month in parentheses.",
    "by_chain_x_month": "Standard errors clustered by blockchain-month in parentheses.",
}

STAR_NOTE = "* p<0.05, ** p<0.01, *** p<0.001"

SVG_RC = {"svg.hashsalt": "decentralab", "svg.fonttype": "none"}


def significance_stars(p_value: float) -> str:
    """Stars for p < 0.001, 0.01 and 0.05."""
    if math.isnan(p_value):
        return ""
    if p_value < 0.001:
        return "***"
    if p_value < 0.01:
        return "**"
    if p_value < 0.05:
        return "*"
    return ""


def _format_number(value: float, digits: int) -> str:
    if math.isnan(value):
        return "nan"
    text = f"{value:.{digits}f}"
    # Avoid "-0.000" for values that round to zero.
    return text[1:] if text.startswith("-") and float(text) == 0 else text


def _align(rows: Sequence[Sequence[str]]) -> list[str]:
    widths = [max(len(row[i]) for row in rows) for i in range(len(rows[0]))]
    lines = []
    for row in rows:
        cells = [row[0].ljust(widths[0])]
        cells.extend(cell.rjust(width) for cell, width in zip(row[1:], widths[1:], strict=True))
        lines.append("  ".join(cells).rstrip())
    return lines


def regression_table(
    results: Sequence[RegressionResult],
    titles: Sequence[str] | None = None,
    digits: int = 3,
) -> list[str]:
    """Side-by-side coefficient table with parenthesized standard errors and stars.

    Terms appear in order of first occurrence over all columns.
    """
    if titles is None:
        titles = [f"({i + 1})" for i in range(len(results))]
    terms = []
    for result in results:
        terms.extend(term for term in result.terms if term not in terms)
    rows = [["", *titles]]
    for term in terms:
        estimates = [term]
        errors = [""]
        for result in results:
            if term in result.coefficients:
                estimate = _format_number(result.coefficients[term], digits)
                estimates.append(estimate + significance_stars(result.p_value(term)).ljust(3))
                errors.append(f"({_format_number(result.std_errors[term], digits)})   ")
            else:
                estimates.append("")
                errors.append("")
        rows.extend([estimates, errors])
    rows.append(["Observations", *(f"{result.n_obs}   " for result in results)])
    rows.append(["R2", *(f"{_format_number(r.r_squared, digits)}   " for r in results)])
    lines = _align(rows)
    rule = "-" * max(len(line) for line in lines)
    notes = sorted({CLUSTER_NOTES[str(result.spec.clustering)] for result in results})
    fixed = sorted({fe for result in results for fe in result.spec.fixed_effects})
    footer = [*notes]
    if len(fixed) > 0:
        footer.append(f"Fixed effects: {', '.join(fixed)}.")
    footer.append(STAR_NOTE)
    for result in results:
        footer.extend(f"Warning: {warning}" for warning in result.warnings)
    return [rule, lines[0], rule, *lines[1:-2], rule, *lines[-2:], rule, *footer]


def lag_series_lines(lags: Sequence[LagEstimate]) -> list[str]:
    """Plot-ready series of lag coefficients with 95% confidence bounds."""
    lines = [",".join(LAG_COLUMNS)]
    lines.extend(
        f"{lag.lag},{lag.estimate!r},{lag.ci_low!r},{lag.ci_high!r}" for lag in lags
    )
    return lines


def sdid_sweep_table(results: Sequence[SdidResult], digits: int = 3) -> list[str]:
    """One row per bandwidth with the ATT, its placebo standard error and placebo count."""
    rows = [["Bandwidth", "ATT", "SE", "Placebos"]]
    for result in results:
        p_value = _normal_p_value(result.att, result.placebo_se)
        rows.append(
            [
                f"+/-{result.bandwidth} days",
                _format_number(result.att, digits) + significance_stars(p_value).ljust(3),
                f"({_format_number(result.placebo_se, digits)})",
                str(result.n_placebos),
            ]
        )
    lines = _align(rows)
    rule = "-" * max(len(line) for line in lines)
    return [
        rule,
        lines[0],
        rule,
        *lines[1:],
        rule,
        "Standard errors derived from placebo tests in parentheses.",
        STAR_NOTE,
    ]


def _normal_p_value(estimate: float, se: float) -> float:
    from scipy import stats

    if se == 0:
        return math.nan if estimate == 0 else 0.0
    return float(2 * stats.norm.sf(abs(estimate / se)))


def _svg(fig: Figure) -> str:
    buffer = io.StringIO()
    with mpl.rc_context(SVG_RC):
        fig.savefig(buffer, format="svg", metadata={"Date": None})
    return buffer.getvalue()


def plot_lag_series(lags: Sequence[LagEstimate], title: str = "", ylabel: str = "") -> str:
    """Lag coefficients with 95% error bars as an SVG document."""
    with mpl.rc_context(SVG_RC):
        fig = Figure(figsize=(6, 3.5))
        ax = fig.add_subplot()
        x = [lag.lag for lag in lags]
        y = [lag.estimate for lag in lags]
        yerr = [
            [lag.estimate - lag.ci_low for lag in lags],
            [lag.ci_high - lag.estimate for lag in lags],
        ]
        ax.axhline(0, color="0.6", lw=0.8)
        ax.axvline(-0.5, color="0.6", lw=0.8, ls="--")
        ax.errorbar(x, y, yerr=yerr, fmt="o", color="C0", capsize=3)
        ax.set_xlabel("Lag")
        ax.set_ylabel(ylabel)
        ax.set_title(title)
        fig.tight_layout()
        return _svg(fig)


def plot_series(
    series: Mapping[str, Mapping[date, float]],
    event_date: date | None = None,
    title: str = "",
    ylabel: str = "",
) -> str:
    """Daily series of several chains as an SVG document."""
    with mpl.rc_context(SVG_RC):
        fig = Figure(figsize=(6, 3.5))
        ax = fig.add_subplot()
        for label, values in sorted(series.items()):
            days = sorted(values)
            ax.plot(days, [values[day] for day in days], label=label, lw=1)
        if event_date is not None:
            ax.axvline(event_date, color="0.4", lw=0.8, ls="--")
        ax.set_ylabel(ylabel)
        ax.set_title(title)
        ax.legend()
        fig.autofmt_xdate()
        fig.tight_layout()
        return _svg(fig)


def write_regression_report(
    prefix: str,
    results: Sequence[RegressionResult],
    titles: Sequence[str] | None = None,
    provenance: Provenance | None = None,
):
    """Write `<prefix>.txt` (star table) and `<prefix>.json` (all estimates)."""
    write_text_artifact(f"{prefix}.txt", regression_table(results, titles), provenance)
    if titles is None:
        titles = [f"({i + 1})" for i in range(len(results))]
    write_json_artifact(
        f"{prefix}.json",
        {"results": {t: r.to_dict() for t, r in zip(titles, results, strict=True)}},
        provenance,
    )


def write_lag_report(
    prefix: str,
    result: RegressionResult,
    provenance: Provenance | None = None,
    title: str = "",
):
    """Write the regression report plus `<prefix>_lags.csv` and `<prefix>_lags.svg`."""
    write_regression_report(prefix, [result], provenance=provenance)
    lags = lag_coefficients(result)
    write_text_artifact(f"{prefix}_lags.csv", lag_series_lines(lags), provenance)
    write_svg_artifact(
        f"{prefix}_lags.svg",
        plot_lag_series(lags, title=title, ylabel=result.spec.dependent),
        provenance,
    )
