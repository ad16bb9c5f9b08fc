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
"""Least-squares estimation of difference-in-differences and event-study specifications.

A specification is an ordered list of terms.
Each term is the product of factors evaluated on a panel observation:

- `chain`: the treated-chain indicator,
- `after`, `during`: the period indicators,
- `day`: the signed number of days since the event,
- `exposure`: the exposure of the chain (possibly time-varying),
- `cov:<name>`: a named covariate,
- `lag:<k>`: one if the observation falls in lag bucket `k`,
  i.e. `day // lag_step == k`.

A term without factors is the intercept.
"""

import logging
import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field, replace
from datetime import date
from enum import StrEnum

import numpy as np
import statsmodels.api as sm
from scipy import stats
from statsmodels.regression.linear_model import RegressionResultsWrapper
from statsmodels.stats.sandwich_covariance import cov_cluster_2groups

from .ingestion import Panel, PanelObservation, restrict_panel
from .utils import RANK_TOL, month_key

__all__ = (
    "AFTER",
    "CHAIN",
    "CI_Z",
    "INTERCEPT",
    "REFERENCE_LAG",
    "TREATMENT",
    "Clustering",
    "EstimationError",
    "LagEstimate",
    "RankDeficiencyError",
    "RegressionResult",
    "RegressionSpec",
    "Term",
    "did",
    "did_bandwidth_sweep",
    "event_study",
    "lag_coefficients",
    "lag_term_name",
    "lagged_did",
    "multi_period_did",
    "ols",
    "variance_inflation",
    "zscore_covariates",
    "zscore_panel_covariates",
)


logger = logging.getLogger(__name__)

# Critical value of the 95% confidence intervals.
CI_Z = 1.96

# Lag bucket omitted from lagged DiD as the reference period.
REFERENCE_LAG = -1


class EstimationError(ValueError):
    """A specification cannot be estimated on the given panel."""


class RankDeficiencyError(EstimationError):
    """The design matrix does not have full column rank."""

    def __init__(self, terms: Sequence[str]):
        super().__init__(f"Design matrix is rank deficient. Collinear terms: {', '.join(terms)}")
        self.terms = tuple(terms)


class Clustering(StrEnum):
    NONE = "none"
    """Heteroskedasticity-robust (HC1) covariance."""
    BY_CHAIN = "by_chain"
    BY_CHAIN_MONTH = "by_chain_month"
    """Two-way clustering by chain and by calendar month."""
    BY_CHAIN_X_MONTH = "by_chain_x_month"
    """One-way clustering on chain-month cells."""


@dataclass(frozen=True)
class Term:
    name: str
    factors: tuple[str, ...] = ()

    def evaluate(self, obs: PanelObservation, lag_step: int | None = None) -> float:
        value = 1.0
        for factor in self.factors:
            value *= _factor_value(obs, factor, lag_step)
        return value


def _factor_value(obs: PanelObservation, factor: str, lag_step: int | None) -> float:
    match factor:
        case "chain":
            return float(obs.chain_indicator)
        case "after":
            return float(obs.after)
        case "during":
            return float(obs.during)
        case "day":
            return float(obs.day_index)
        case "exposure":
            return obs.exposure
    kind, _, arg = factor.partition(":")
    if kind == "cov":
        if arg not in obs.covariates:
            raise EstimationError(f"Covariate '{arg}' missing for {obs.chain_id} on {obs.day}.")
        return obs.covariates[arg]
    if kind == "lag":
        if lag_step is None:
            raise EstimationError(f"Factor '{factor}' requires a lag step.")
        return float(obs.day_index // lag_step == int(arg))
    raise EstimationError(f"Unknown factor '{factor}'.")


INTERCEPT = Term("intercept")
TREATMENT = Term("treatment", ("after", "chain"))
CHAIN = Term("chain", ("chain",))
AFTER = Term("after", ("after",))
DURING = Term("during", ("during",))
DAY = Term("day", ("day",))


def lag_term_name(lag: int) -> str:
    return f"treatment_lag_{lag}"


@dataclass(frozen=True)
class RegressionSpec:
    """The dependent variable, terms, fixed effects and clustering of a regression."""

    dependent: str
    terms: tuple[Term, ...]
    fixed_effects: frozenset[str] = frozenset()
    clustering: Clustering = Clustering.BY_CHAIN_MONTH
    lag_step: int | None = None

    def __post_init__(self):
        names = [term.name for term in self.terms]
        if len(set(names)) != len(names):
            raise EstimationError(f"Duplicate term names in {names}.")
        factor_sets = [tuple(sorted(term.factors)) for term in self.terms]
        if len(set(factor_sets)) != len(factor_sets):
            raise EstimationError("Two terms have the same factors.")
        has_lags = any(f.startswith("lag:") for term in self.terms for f in term.factors)
        if has_lags:
            if ("after", "chain") in factor_sets:
                raise EstimationError("Lag dummies cannot be combined with the plain treatment.")
            if self.lag_step is None or self.lag_step < 1:
                raise EstimationError("Lag dummies require a positive lag step.")
        unknown = set(self.fixed_effects) - {"month"}
        if len(unknown) > 0:
            raise EstimationError(f"Unsupported fixed effects {sorted(unknown)}.")

    @property
    def term_names(self) -> tuple[str, ...]:
        return tuple(term.name for term in self.terms)


@dataclass(frozen=True, eq=False)
class RegressionResult:
    """Estimates, clustered covariance and fit diagnostics of one regression."""

    spec: RegressionSpec
    coefficients: Mapping[str, float]
    std_errors: Mapping[str, float]
    covariance: np.ndarray
    residuals: np.ndarray
    r_squared: float
    n_obs: int
    n_clusters: Mapping[str, int] = field(default_factory=dict)
    warnings: tuple[str, ...] = ()

    @property
    def terms(self) -> tuple[str, ...]:
        """Names of the estimated terms, in the order of the covariance matrix."""
        return tuple(self.coefficients)

    def t_stat(self, term: str) -> float:
        estimate = self.coefficients[term]
        se = self.std_errors[term]
        if se == 0:
            return math.nan if estimate == 0 else math.copysign(math.inf, estimate)
        return estimate / se

    def p_value(self, term: str) -> float:
        """Two-sided p-value with a normal reference distribution."""
        t = self.t_stat(term)
        if math.isnan(t):
            return math.nan
        if math.isinf(t):
            return 0.0
        return float(2 * stats.norm.sf(abs(t)))

    def conf_int(self, term: str) -> tuple[float, float]:
        """95% confidence interval."""
        estimate = self.coefficients[term]
        se = self.std_errors[term]
        return estimate - CI_Z * se, estimate + CI_Z * se

    def to_dict(self) -> dict:
        """Serializable summary, without residuals."""
        return {
            "dependent": self.spec.dependent,
            "terms": list(self.terms),
            "coefficients": dict(self.coefficients),
            "std_errors": dict(self.std_errors),
            "p_values": {term: self.p_value(term) for term in self.terms},
            "clustering": str(self.spec.clustering),
            "fixed_effects": sorted(self.spec.fixed_effects),
            "n_clusters": dict(self.n_clusters),
            "n_obs": self.n_obs,
            "r_squared": self.r_squared,
            "covariance": self.covariance.tolist(),
            "warnings": list(self.warnings),
        }


#
# Estimation engine
#


def _cluster_codes(labels: Sequence) -> np.ndarray:
    """Integer codes numbered by order of first appearance."""
    codes = {}
    return np.array([codes.setdefault(label, len(codes)) for label in labels], dtype=int)


def _design(
    observations: Sequence[PanelObservation], spec: RegressionSpec
) -> tuple[np.ndarray, np.ndarray]:
    y = np.array([obs.value(spec.dependent) for obs in observations], dtype=float)
    X = np.array(
        [[term.evaluate(obs, spec.lag_step) for term in spec.terms] for obs in observations],
        dtype=float,
    ).reshape(len(observations), len(spec.terms))
    return y, X


def _demean(a: np.ndarray, codes: np.ndarray) -> np.ndarray:
    """Subtract group means (within transformation)."""
    ngroup = codes.max() + 1
    counts = np.bincount(codes, minlength=ngroup).astype(float)
    sums = np.zeros((ngroup, *a.shape[1:]))
    np.add.at(sums, codes, a)
    means = sums / counts.reshape(-1, *([1] * (a.ndim - 1)))
    return a - means[codes]


def _check_rank(X: np.ndarray, names: Sequence[str]):
    n, k = X.shape
    if n <= k:
        raise EstimationError(f"Only {n} observations for {k} coefficients.")
    _, s, vt = np.linalg.svd(X, full_matrices=False)
    small = s < RANK_TOL * s[0] if s[0] > 0 else np.ones(k, dtype=bool)
    if small.any():
        null = np.abs(vt[small])
        null /= null.max(axis=1, keepdims=True)
        involved = [names[j] for j in range(k) if null[:, j].max() > 1e-8]
        raise RankDeficiencyError(involved)


def _fit(
    y: np.ndarray,
    X: np.ndarray,
    observations: Sequence[PanelObservation],
    clustering: Clustering,
) -> tuple[RegressionResultsWrapper, np.ndarray, dict[str, int]]:
    """Fit by OLS and return the results, the covariance and the number of clusters."""
    model = sm.OLS(y, X)
    if clustering == Clustering.NONE:
        fitted = model.fit(cov_type="HC1")
        return fitted, fitted.cov_params(), {}
    chains = _cluster_codes([obs.chain_id for obs in observations])
    months = _cluster_codes([month_key(obs.day) for obs in observations])
    if clustering == Clustering.BY_CHAIN:
        dims = {"chain": chains}
    elif clustering == Clustering.BY_CHAIN_X_MONTH:
        dims = {
            "chain_x_month": _cluster_codes(
                [(obs.chain_id, month_key(obs.day)) for obs in observations]
            )
        }
    else:
        # A dimension with a single cluster coincides with the intersection.
        dims = {
            name: codes for name, codes in (("chain", chains), ("month", months)) if codes.max() > 0
        }
        if len(dims) == 0:
            raise EstimationError("Two-way clustering needs at least two chains or two months.")
    n_clusters = {name: int(codes.max() + 1) for name, codes in dims.items()}
    if len(dims) == 2:
        fitted = model.fit()
        covariance = cov_cluster_2groups(fitted, chains, months, use_correction=True)[0]
        return fitted, covariance, n_clusters
    ((name, codes),) = dims.items()
    if n_clusters[name] < 2:
        raise EstimationError(f"Clustering by {name} needs at least two clusters.")
    fitted = model.fit(cov_type="cluster", cov_kwds={"groups": codes, "use_correction": True})
    return fitted, fitted.cov_params(), n_clusters


def _floor_eigenvalues(covariance: np.ndarray) -> np.ndarray:
    """Symmetrize and clip negative eigenvalues of a two-way clustered covariance."""
    covariance = 0.5 * (covariance + covariance.T)
    evals, evecs = np.linalg.eigh(covariance)
    if evals.min() < 0:
        covariance = (evecs * np.clip(evals, 0, None)) @ evecs.T
    return covariance


def ols(observations: Iterable[PanelObservation], spec: RegressionSpec) -> RegressionResult:
    """Estimate a specification by ordinary least squares.

    Parameters
    ----------
    observations
        The panel rows used in the regression, e.g. a `Panel`.
    spec
        The specification. With month fixed effects, the dependent variable and all terms
        are demeaned per calendar month and the intercept is absorbed.

    Returns
    -------
    result
        Coefficients and standard errors for the estimated terms,
        with the covariance clustered as requested.
        A warning is attached when there are fewer clusters than coefficients.
    """
    observations = list(observations)
    if len(observations) == 0:
        raise EstimationError("No observations.")
    y, X = _design(observations, spec)
    names = list(spec.term_names)
    n_absorbed = 0
    if "month" in spec.fixed_effects:
        codes = _cluster_codes([month_key(obs.day) for obs in observations])
        keep = [i for i, term in enumerate(spec.terms) if len(term.factors) > 0]
        X = _demean(X[:, keep], codes)
        y = _demean(y, codes)
        names = [names[i] for i in keep]
        n_absorbed = int(codes.max() + 1)
    _check_rank(X, names)

    n, k = X.shape
    # The small-sample corrections count the absorbed fixed effects as coefficients.
    k_total = k + n_absorbed
    if n <= k_total:
        raise EstimationError(f"Only {n} observations for {k_total} coefficients.")
    fitted, covariance, n_clusters = _fit(y, X, observations, spec.clustering)
    beta = np.asarray(fitted.params)
    residuals = np.asarray(fitted.resid)
    covariance = _floor_eigenvalues(np.asarray(covariance) * ((n - k) / (n - k_total)))
    std_errors = np.sqrt(np.clip(np.diag(covariance), 0, None))

    warnings = []
    if len(n_clusters) > 0 and min(n_clusters.values()) < k:
        message = (
            f"Only {min(n_clusters.values())} clusters for {k} coefficients: "
            "clustered standard errors are unreliable."
        )
        logger.warning(message)
        warnings.append(message)

    ss_res = float(residuals @ residuals)
    centered = y - y.mean()
    ss_tot = float(centered @ centered)
    r_squared = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return RegressionResult(
        spec=spec,
        coefficients={name: float(value) for name, value in zip(names, beta, strict=True)},
        std_errors={name: float(se) for name, se in zip(names, std_errors, strict=True)},
        covariance=covariance,
        residuals=residuals,
        r_squared=r_squared,
        n_obs=n,
        n_clusters=n_clusters,
        warnings=tuple(warnings),
    )


def variance_inflation(
    observations: Iterable[PanelObservation], spec: RegressionSpec
) -> dict[str, float]:
    """Variance inflation factor of every non-intercept term.

    Each term is regressed on all other terms plus an intercept.
    The diagnostic is informative only: terms are never dropped based on it.
    """
    observations = list(observations)
    _, X = _design(observations, spec)
    slopes = [i for i, term in enumerate(spec.terms) if len(term.factors) > 0]
    result = {}
    for i in slopes:
        others = [j for j in slopes if j != i]
        A = np.column_stack([np.ones(len(observations)), X[:, others]])
        coef = np.linalg.lstsq(A, X[:, i], rcond=None)[0]
        residual = X[:, i] - A @ coef
        centered = X[:, i] - X[:, i].mean()
        ss_tot = float(centered @ centered)
        ss_res = float(residual @ residual)
        name = spec.terms[i].name
        result[name] = math.inf if ss_res <= 1e-12 * ss_tot or ss_tot == 0 else ss_tot / ss_res
    return result


#
# Covariate standardization
#


def zscore_covariates(
    series: Mapping[date, float], reference_window: tuple[date, date]
) -> dict[date, float]:
    """Standardize a series with the mean and standard deviation of a reference window."""
    first, last = reference_window
    reference = np.array([value for day, value in series.items() if first <= day <= last])
    if len(reference) < 2:
        raise EstimationError(f"Reference window {first} to {last} has fewer than two values.")
    sd = float(np.std(reference, ddof=1))
    if sd == 0:
        raise EstimationError(f"Covariate has zero variance between {first} and {last}.")
    mean = float(np.mean(reference))
    return {day: (value - mean) / sd for day, value in series.items()}


def zscore_panel_covariates(
    observations: Iterable[PanelObservation],
    names: Iterable[str],
    reference_window: tuple[date, date] | None = None,
) -> list[PanelObservation]:
    """Z-score covariates per chain, by default using all pre-event days as reference."""
    observations = list(observations)
    names = list(names)
    if reference_window is None:
        pre_days = [obs.day for obs in observations if obs.day_index < 0]
        if len(pre_days) == 0:
            raise EstimationError("No pre-event observations to standardize covariates.")
        reference_window = (min(pre_days), max(pre_days))
    scored: dict[tuple[str, str], dict[date, float]] = {}
    for chain_id in sorted({obs.chain_id for obs in observations}):
        for name in names:
            series = {}
            for obs in observations:
                if obs.chain_id == chain_id:
                    if name not in obs.covariates:
                        raise EstimationError(
                            f"Covariate '{name}' missing for {chain_id} on {obs.day}."
                        )
                    series[obs.day] = obs.covariates[name]
            scored[chain_id, name] = zscore_covariates(series, reference_window)
    return [
        replace(
            obs,
            covariates={
                **obs.covariates,
                **{name: scored[obs.chain_id, name][obs.day] for name in names},
            },
        )
        for obs in observations
    ]


#
# Specifications
#


def _check_design(observations: Iterable[PanelObservation]) -> list[PanelObservation]:
    observations = list(observations)
    treated = {obs.chain_id for obs in observations if obs.chain_indicator == 1}
    controls = {obs.chain_id for obs in observations if obs.chain_indicator == 0}
    if len(treated) != 1:
        raise EstimationError(f"Expected exactly one treated chain, found {sorted(treated)}.")
    if len(controls) == 0:
        raise EstimationError("At least one control chain is required.")
    return observations


def _fixed_effects(month_fe: bool) -> frozenset[str]:
    return frozenset({"month"}) if month_fe else frozenset()


def did(
    observations: Iterable[PanelObservation],
    dependent: str = "entropy",
    with_exposure: bool = False,
    covariates: Sequence[str] = (),
    interactions: bool = False,
    clustering: Clustering = Clustering.BY_CHAIN_MONTH,
    month_fe: bool = False,
    reference_window: tuple[date, date] | None = None,
) -> RegressionResult:
    """Difference-in-differences with optional exposure and covariates.

    Parameters
    ----------
    observations
        Panel with one treated chain and at least one control.
    dependent
        The outcome, e.g. `entropy`.
    with_exposure
        Add the term `exposure = after * exposure_i`.
    covariates
        Covariates to add after z-scoring them per chain on the reference window.
    interactions
        Also add `treatment_x_<covariate>` for each covariate.
    clustering
        Covariance estimator.
    month_fe
        Absorb calendar-month fixed effects.
    reference_window
        Days used to standardize covariates. Defaults to all pre-event days.
    """
    observations = _check_design(observations)
    terms = [INTERCEPT, TREATMENT, CHAIN, AFTER]
    if with_exposure:
        terms.append(Term("exposure", ("after", "exposure")))
    if len(covariates) > 0:
        observations = zscore_panel_covariates(observations, covariates, reference_window)
        for name in covariates:
            terms.append(Term(name, (f"cov:{name}",)))
        if interactions:
            terms.extend(
                Term(f"treatment_x_{name}", ("after", "chain", f"cov:{name}"))
                for name in covariates
            )
    spec = RegressionSpec(dependent, tuple(terms), _fixed_effects(month_fe), clustering)
    return ols(observations, spec)


def did_bandwidth_sweep(
    panel: Panel, bandwidths: Iterable[int], **kwargs
) -> list[tuple[int, RegressionResult]]:
    """Re-estimate `did` on windows of increasing width around the event."""
    return [(bw, did(restrict_panel(panel, bw), **kwargs)) for bw in bandwidths]


@dataclass(frozen=True)
class LagEstimate:
    lag: int
    estimate: float
    ci_low: float
    ci_high: float


def lagged_did(
    observations: Iterable[PanelObservation],
    lag_step: int,
    max_lag: int,
    dependent: str = "entropy",
    clustering: Clustering = Clustering.BY_CHAIN_MONTH,
    month_fe: bool = False,
) -> RegressionResult:
    """Difference-in-differences with one treatment dummy per lag bucket.

    Bucket `k` covers the days `[k * lag_step, (k + 1) * lag_step)` relative to the event.
    Buckets `-max_lag` to `max_lag` are used, with bucket -1 as the omitted reference.
    Observations outside these buckets are dropped.
    """
    if lag_step < 1 or max_lag < 1:
        raise EstimationError("Lag step and maximum lag must be at least one.")
    observations = _check_design(observations)
    first, last = -max_lag * lag_step, (max_lag + 1) * lag_step - 1
    window = [obs for obs in observations if first <= obs.day_index <= last]
    lags = range(-max_lag, max_lag + 1)
    present = {(obs.chain_indicator, obs.day_index // lag_step) for obs in window}
    missing = [lag for lag in lags if (1, lag) not in present or (0, lag) not in present]
    if len(missing) > 0:
        raise EstimationError(f"Panel lacks treated or control data in lag buckets {missing}.")
    terms = [INTERCEPT, CHAIN, AFTER]
    terms.extend(
        Term(lag_term_name(lag), ("chain", f"lag:{lag}")) for lag in lags if lag != REFERENCE_LAG
    )
    spec = RegressionSpec(
        dependent, tuple(terms), _fixed_effects(month_fe), clustering, lag_step=lag_step
    )
    return ols(window, spec)


def lag_coefficients(result: RegressionResult) -> list[LagEstimate]:
    """Lag estimates with 95% intervals, including the reference bucket at zero."""
    lags = {}
    for term in result.spec.terms:
        for factor in term.factors:
            if factor.startswith("lag:"):
                lag = int(factor[4:])
                estimate = result.coefficients[term.name]
                lags[lag] = LagEstimate(lag, estimate, *result.conf_int(term.name))
    lags[REFERENCE_LAG] = LagEstimate(REFERENCE_LAG, 0.0, 0.0, 0.0)
    return [lags[lag] for lag in sorted(lags)]


def multi_period_did(
    panel: Panel,
    time_varying: bool = False,
    with_exposure: bool | None = None,
    dependent: str = "entropy",
    clustering: Clustering = Clustering.BY_CHAIN_MONTH,
    month_fe: bool = False,
) -> RegressionResult:
    """Difference-in-differences with separate during and after periods.

    The exposure enters as `during * exposure_i`, since exposure builds up during the rollout.
    With `time_varying`, the treatment and exposure terms are interacted with `day`
    and a base `day` term is added.
    By default, the exposure term is included when any observation has a nonzero exposure.
    """
    if panel.during_end is None:
        raise EstimationError("Multi-period DiD requires a panel with a during window.")
    observations = _check_design(panel)
    if with_exposure is None:
        with_exposure = any(obs.exposure != 0 for obs in observations)
    if time_varying:
        terms = [
            Term("during_treatment_day", ("during", "chain", "day")),
            Term("after_treatment_day", ("after", "chain", "day")),
        ]
        if with_exposure:
            terms.append(Term("exposure_day", ("during", "exposure", "day")))
        terms.extend([CHAIN, DURING, AFTER, DAY, INTERCEPT])
    else:
        terms = [
            Term("during_treatment", ("during", "chain")),
            Term("after_treatment", ("after", "chain")),
        ]
        if with_exposure:
            terms.append(Term("exposure", ("during", "exposure")))
        terms.extend([CHAIN, DURING, AFTER, INTERCEPT])
    spec = RegressionSpec(dependent, tuple(terms), _fixed_effects(month_fe), clustering)
    return ols(observations, spec)


def event_study(
    series: Mapping[date, float],
    event_date: date,
    clustering: Clustering = Clustering.NONE,
    name: str = "value",
) -> RegressionResult:
    """Single-series regression `y = intercept + after + day + after * day`.

    The coefficient of `after` is the jump at the event, `day` the pre-event slope
    and `after_day` the change in slope.
    """
    days = sorted(series)
    if len(days) == 0 or days[0] >= event_date or days[-1] < event_date:
        raise EstimationError(f"The series must have data before and from {event_date} onward.")
    observations = [
        PanelObservation(
            chain_id="series",
            day=day,
            values={name: float(series[day])},
            chain_indicator=0,
            after=int(day >= event_date),
            during=0,
            day_index=(day - event_date).days,
            exposure=0.0,
        )
        for day in days
    ]
    terms = (INTERCEPT, AFTER, DAY, Term("after_day", ("after", "day")))
    return ols(observations, RegressionSpec(name, terms, clustering=clustering))
