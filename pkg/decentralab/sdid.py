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
"""Synthetic difference-in-differences with placebo standard errors.

Unit weights fit the pre-event trend of the treated chain with a convex combination
of control chains. Time weights fit the mean post-event control outcome with a convex
combination of pre-event days. Both are regularized least-squares problems on the
probability simplex, solved with Frank-Wolfe iterations and an exact line search.
"""

import logging
from collections.abc import Iterable
from dataclasses import dataclass
from datetime import date

import numpy as np

from .econometrics import EstimationError
from .ingestion import Panel
from .utils import FW_MAX_ITER, FW_TOL

__all__ = (
    "DEFAULT_RESAMPLES",
    "MIN_LEAVE_ONE_OUT",
    "SdidEstimate",
    "SdidResult",
    "SimplexFit",
    "sdid",
    "sdid_bandwidth_sweep",
    "sdid_estimate",
    "sdid_matrices",
    "simplex_least_squares",
    "sparsify",
)


logger = logging.getLogger(__name__)

DEFAULT_RESAMPLES = 200
MIN_LEAVE_ONE_OUT = 10


@dataclass(frozen=True)
class SimplexFit:
    weights: np.ndarray
    objective: float
    iterations: int
    converged: bool


def simplex_least_squares(
    A: np.ndarray,
    b: np.ndarray,
    eta: float,
    x0: np.ndarray | None = None,
    max_iter: int = FW_MAX_ITER,
    tol: float = FW_TOL,
) -> SimplexFit:
    """Minimize `eta * ||x||^2 + ||A x - b||^2` over the probability simplex.

    Parameters
    ----------
    A, b
        The least-squares problem.
    eta
        Ridge penalty.
    x0
        Starting point, uniform weights by default.
    max_iter
        Iteration cap.
    tol
        The iterations stop when the objective decreases by no more than this amount.

    Returns
    -------
    fit
        The weights, the final objective and convergence information.
        The result is deterministic for given inputs.
    """
    k = A.shape[1]
    x = np.full(k, 1.0 / k) if x0 is None else np.asarray(x0, dtype=float) / np.sum(x0)
    Ax = A @ x
    Atb = A.T @ b
    previous = np.inf
    for iteration in range(max_iter):
        residual = Ax - b
        objective = float(eta * (x @ x) + residual @ residual)
        if previous - objective <= tol:
            return SimplexFit(x, objective, iteration, True)
        previous = objective
        gradient = A.T @ Ax - Atb + eta * x
        j = int(np.argmin(gradient))
        direction = -x
        direction[j] += 1.0
        d_err = A[:, j] - Ax
        numerator = -float(gradient @ direction)
        denominator = float(d_err @ d_err + eta * (direction @ direction))
        if denominator <= 0:
            return SimplexFit(x, objective, iteration, True)
        step = min(max(numerator / denominator, 0.0), 1.0)
        x = x + step * direction
        Ax = Ax + step * d_err
        x[x < 0] = 0.0
        total = x.sum()
        x /= total
        Ax /= total
    residual = Ax - b
    logger.warning("Frank-Wolfe did not converge in %d iterations", max_iter)
    return SimplexFit(x, float(eta * (x @ x) + residual @ residual), max_iter, False)


def sparsify(weights: np.ndarray) -> np.ndarray:
    """Zero weights not above a quarter of the largest weight and renormalize."""
    result = np.where(weights <= weights.max() / 4, 0.0, weights)
    return result / result.sum()


def _solve_weights(
    Y_controls: np.ndarray,
    y_treated: np.ndarray,
    n_pre: int,
    zeta_omega: float,
    zeta_lambda: float,
    sparse: bool,
) -> tuple[np.ndarray, np.ndarray, int]:
    """Unit and time weights, both fitted with an intercept."""
    n_controls = Y_controls.shape[0]

    # Time weights: regress mean post-event outcomes of controls on their pre-event outcomes.
    pre = Y_controls[:, :n_pre]
    post_mean = Y_controls[:, n_pre:].mean(axis=1)
    collapsed = np.column_stack([pre, post_mean])
    # Intercept: center each day across controls.
    collapsed = collapsed - collapsed.mean(axis=0, keepdims=True)
    eta_lambda = n_controls * zeta_lambda**2
    fit_lambda = simplex_least_squares(collapsed[:, :n_pre], collapsed[:, n_pre], eta_lambda)

    # Unit weights: regress the pre-event treated path on the control paths.
    stacked = np.column_stack([pre.T, y_treated[:n_pre]])
    stacked = stacked - stacked.mean(axis=0, keepdims=True)
    eta_omega = n_pre * zeta_omega**2
    fit_omega = simplex_least_squares(stacked[:, :n_controls], stacked[:, n_controls], eta_omega)

    iterations = fit_lambda.iterations + fit_omega.iterations
    time_weights = fit_lambda.weights
    unit_weights = fit_omega.weights
    if sparse:
        fit_lambda = simplex_least_squares(
            collapsed[:, :n_pre], collapsed[:, n_pre], eta_lambda, sparsify(time_weights)
        )
        fit_omega = simplex_least_squares(
            stacked[:, :n_controls], stacked[:, n_controls], eta_omega, sparsify(unit_weights)
        )
        iterations += fit_lambda.iterations + fit_omega.iterations
        time_weights = fit_lambda.weights
        unit_weights = fit_omega.weights
    return unit_weights, time_weights, iterations


def _noise_level(Y_controls: np.ndarray, n_pre: int) -> float:
    """Standard deviation of first differences of pre-event control outcomes."""
    if n_pre < 2:
        raise EstimationError("At least two pre-event days are needed.")
    diffs = np.diff(Y_controls[:, :n_pre], axis=1)
    if diffs.size < 2:
        return 0.0
    return float(np.std(diffs, ddof=1))


def _att(
    Y_controls: np.ndarray,
    y_treated: np.ndarray,
    n_pre: int,
    unit_weights: np.ndarray,
    time_weights: np.ndarray,
) -> float:
    treated_diff = y_treated[n_pre:].mean() - time_weights @ y_treated[:n_pre]
    control_diff = Y_controls[:, n_pre:].mean(axis=1) - Y_controls[:, :n_pre] @ time_weights
    return float(treated_diff - unit_weights @ control_diff)


@dataclass(frozen=True)
class SdidEstimate:
    att: float
    unit_weights: np.ndarray
    time_weights: np.ndarray
    zeta_omega: float
    zeta_lambda: float
    noise_level: float
    iterations: int


def sdid_estimate(
    Y_controls: np.ndarray,
    y_treated: np.ndarray,
    n_pre: int,
    uniform_weights: bool = False,
    zeta_omega: float | None = None,
    zeta_lambda: float | None = None,
    sparse: bool = False,
) -> SdidEstimate:
    """Synthetic DiD on outcome matrices.

    `Y_controls` has one row per control and one column per day,
    `y_treated` one value per day. The first `n_pre` days precede the event.
    """
    n_controls, n_days = Y_controls.shape
    n_post = n_days - n_pre
    if n_pre < 1 or n_post < 1:
        raise EstimationError("At least one pre-event and one post-event day are needed.")
    if uniform_weights:
        unit_weights = np.full(n_controls, 1.0 / n_controls)
        time_weights = np.full(n_pre, 1.0 / n_pre)
        att = _att(Y_controls, y_treated, n_pre, unit_weights, time_weights)
        return SdidEstimate(att, unit_weights, time_weights, 0.0, 0.0, 0.0, 0)
    noise = _noise_level(Y_controls, n_pre)
    constant = np.ptp(Y_controls[:, :n_pre], axis=1).max() == 0
    if constant and (zeta_omega is None or zeta_lambda is None):
        raise EstimationError("Degenerate pre-event period: control outcomes do not vary.")
    if zeta_omega is None:
        # One treated chain.
        zeta_omega = n_post**0.25 * noise
    if zeta_lambda is None:
        zeta_lambda = 1e-6 * noise
    unit_weights, time_weights, iterations = _solve_weights(
        Y_controls, y_treated, n_pre, zeta_omega, zeta_lambda, sparse
    )
    return SdidEstimate(
        _att(Y_controls, y_treated, n_pre, unit_weights, time_weights),
        unit_weights,
        time_weights,
        zeta_omega,
        zeta_lambda,
        noise,
        iterations,
    )


@dataclass(frozen=True, eq=False)
class SdidResult:
    """Synthetic DiD estimate with its weights and placebo standard error."""

    att: float
    unit_weights: dict[str, float]
    """Weight per control chain, on the simplex."""
    time_weights: dict[date, float]
    """Weight per pre-event day, on the simplex."""
    placebo_se: float
    n_placebos: int
    placebo_atts: tuple[float, ...] = ()
    bandwidth: int | None = None
    zeta_omega: float = 0.0
    zeta_lambda: float = 0.0
    noise_level: float = 0.0
    iterations: int = 0

    def to_dict(self) -> dict:
        return {
            "att": self.att,
            "placebo_se": self.placebo_se,
            "n_placebos": self.n_placebos,
            "placebo_atts": list(self.placebo_atts),
            "bandwidth": self.bandwidth,
            "unit_weights": dict(self.unit_weights),
            "time_weights": {day.isoformat(): w for day, w in self.time_weights.items()},
            "zeta_omega": self.zeta_omega,
            "zeta_lambda": self.zeta_lambda,
            "noise_level": self.noise_level,
            "iterations": self.iterations,
        }


def sdid_matrices(
    panel: Panel, bandwidth: int, dependent: str = "entropy"
) -> tuple[np.ndarray, np.ndarray, tuple[str, ...], tuple[date, ...], int]:
    """Outcome matrices on the window `[-bandwidth, bandwidth]` around the event.

    Returns the control outcomes (controls x days), the treated outcomes,
    the control ids, the days and the number of pre-event days.
    """
    if bandwidth < 2:
        raise EstimationError("The bandwidth must be at least two days.")
    window = [obs for obs in panel if -bandwidth <= obs.day_index <= bandwidth]
    days = tuple(sorted({obs.day for obs in window}))
    values = {(obs.chain_id, obs.day): obs.value(dependent) for obs in window}
    controls = panel.controls
    missing = [
        (chain, day.isoformat())
        for chain in (panel.treated_chain, *controls)
        for day in days
        if (chain, day) not in values
    ]
    if len(missing) > 0:
        raise EstimationError(f"Synthetic DiD needs a balanced window, missing {missing[:5]}.")
    n_pre = sum(day < panel.event_date for day in days)
    if n_pre < 2 or n_pre == len(days):
        raise EstimationError(
            "Synthetic DiD needs at least two pre-event days and one post-event day."
        )
    Y_controls = np.array([[values[chain, day] for day in days] for chain in controls])
    y_treated = np.array([values[panel.treated_chain, day] for day in days])
    return Y_controls, y_treated, controls, days, n_pre


def sdid(
    panel: Panel,
    bandwidth: int,
    dependent: str = "entropy",
    uniform_weights: bool = False,
    zeta_omega: float | None = None,
    zeta_lambda: float | None = None,
    sparse: bool = False,
    n_resamples: int | None = None,
    seed: int = 0,
) -> SdidResult:
    """Estimate the effect on the treated chain with synthetic difference-in-differences.

    Parameters
    ----------
    panel
        Panel with one treated chain and at least two controls.
    bandwidth
        Days before and after the event to include.
        Pre-event days are `[-bandwidth, -1]` and post-event days `[0, bandwidth]`.
    dependent
        The outcome.
    uniform_weights
        Skip the weight optimization and use uniform unit and time weights.
    zeta_omega, zeta_lambda
        Override the regularization of the unit and time weights.
        The defaults scale with the standard deviation of first differences
        of pre-event control outcomes.
    sparse
        Zero small weights and refit.
    n_resamples
        The number of random draws of a pseudo-treated control and a subset of the other
        controls that make up the placebo distribution. With zero, every control is
        reassigned treatment once. By default, panels with fewer than ten controls use
        200 draws and larger panels reassign every control once.
    seed
        Seed of the resampled placebos.

    Returns
    -------
    result
        The ATT, weights and the standard deviation of placebo ATTs,
        scaled by `sqrt(G / (G - 1))` for `G` distinct pseudo-treated controls.
    """
    Y_controls, y_treated, controls, days, n_pre = sdid_matrices(panel, bandwidth, dependent)
    if len(controls) < 2:
        raise EstimationError(f"Synthetic DiD needs at least two controls, found {len(controls)}.")
    options = (uniform_weights, zeta_omega, zeta_lambda, sparse)
    estimate = sdid_estimate(Y_controls, y_treated, n_pre, *options)

    if n_resamples is None:
        n_resamples = DEFAULT_RESAMPLES if len(controls) < MIN_LEAVE_ONE_OUT else 0
    indices = range(len(controls))
    if n_resamples == 0:
        draws = [(i, tuple(j for j in indices if j != i)) for i in indices]
    else:
        rng = np.random.default_rng(np.random.PCG64(seed))
        subset_size = max(1, len(controls) - 2)
        draws = []
        for _ in range(n_resamples):
            order = [int(j) for j in rng.permutation(len(controls))]
            draws.append((order[0], tuple(sorted(order[1 : 1 + subset_size]))))

    # Draws repeat when there are few controls.
    cache = {}
    placebo_atts = []
    pseudo_treated = set()
    for draw in draws:
        if draw not in cache:
            pseudo, others = draw
            cache[draw] = _placebo(Y_controls[list(others)], Y_controls[pseudo], n_pre, options)
        if cache[draw] is not None:
            placebo_atts.append(cache[draw])
            pseudo_treated.add(draw[0])
    if len(pseudo_treated) < 2:
        raise EstimationError("Placebo estimates for fewer than two controls could be computed.")
    # Small-sample correction for the number of distinct pseudo-treated controls.
    n_pseudo = len(pseudo_treated)
    placebo_se = float(np.std(placebo_atts) * np.sqrt(n_pseudo / (n_pseudo - 1)))

    return SdidResult(
        att=estimate.att,
        unit_weights={
            chain: float(w) for chain, w in zip(controls, estimate.unit_weights, strict=True)
        },
        time_weights={
            day: float(w) for day, w in zip(days[:n_pre], estimate.time_weights, strict=True)
        },
        placebo_se=placebo_se,
        n_placebos=len(placebo_atts),
        placebo_atts=tuple(placebo_atts),
        bandwidth=bandwidth,
        zeta_omega=estimate.zeta_omega,
        zeta_lambda=estimate.zeta_lambda,
        noise_level=estimate.noise_level,
        iterations=estimate.iterations,
    )


def _placebo(
    Y_controls: np.ndarray, y_pseudo: np.ndarray, n_pre: int, options: tuple
) -> float | None:
    try:
        return sdid_estimate(Y_controls, y_pseudo, n_pre, *options).att
    except EstimationError as exc:
        logger.warning("Skipped placebo: %s", exc)
        return None


def sdid_bandwidth_sweep(
    panel: Panel, bandwidths: Iterable[int], **kwargs
) -> list[SdidResult]:
    """Re-estimate `sdid` for several bandwidths."""
    return [sdid(panel, bandwidth, **kwargs) for bandwidth in bandwidths]
