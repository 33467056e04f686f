"""
Calibration and accuracy diagnostics.

Window-endpoint spread and RMSE with their ratio and correlation, rank
histograms of the truth among members, and the across-trial bias-variance
split of the analysis-mean error.
"""

from __future__ import annotations

import math
from collections.abc import Sequence

import numpy as np
from scipy import stats as sps

from .errors import InsufficientDataError, InvalidInputError
from .models import (
    AssimilationRun,
    BiasVarianceTable,
    RankHistogram,
    SummaryRow,
    WindowSeries,
)


def _pearson(a: np.ndarray, b: np.ndarray) -> float:
    if a.size < 2 or np.ptp(a) == 0 or np.ptp(b) == 0:
        return math.nan
    return float(sps.pearsonr(a, b)[0])


# ---------------------------------------------------------------------------
# Spread / skill
# ---------------------------------------------------------------------------

def window_series(run: AssimilationRun, truth: np.ndarray) -> WindowSeries:
    """Spread, RMSE and spread-skill ratio at every window end.

    sigma_w = sqrt(trace(P^a)/n) and RMSE_w = ||mean - truth|| / sqrt(n).
    gamma_w is NaN where RMSE_w is zero; such windows are left out of
    gamma_bar and rho. Headline spread and RMSE are root-mean-of-squares
    over windows.

    Args:
        run: Assimilation run with endpoint analyses.
        truth: True states indexed by global time, shape (K+1, n).

    Raises:
        InsufficientDataError: If fewer than 2 windows are available.
    """
    W = len(run.endpoint_analyses)
    if W < 2:
        raise InsufficientDataError(f"spread-skill correlation needs >= 2 windows, got {W}")
    states = np.asarray(truth, dtype=float)

    sigma_w = np.empty(W)
    rmse_w = np.empty(W)
    for i, (k, members) in enumerate(zip(run.endpoint_times, run.endpoint_analyses)):
        n, n_members = members.shape
        mean = members.mean(axis=1)
        anomaly = members - mean[:, None]
        sigma_w[i] = math.sqrt(float(np.sum(anomaly**2)) / (n_members - 1) / n)
        rmse_w[i] = float(np.linalg.norm(mean - states[k])) / math.sqrt(n)

    gamma_w = np.full(W, np.nan)
    defined = rmse_w > 0
    gamma_w[defined] = sigma_w[defined] / rmse_w[defined]
    gamma_bar = float(np.mean(gamma_w[defined])) if defined.any() else math.nan

    return WindowSeries(
        sigma_w=sigma_w,
        rmse_w=rmse_w,
        gamma_w=gamma_w,
        gamma_bar=gamma_bar,
        rho=_pearson(sigma_w[defined], rmse_w[defined]),
        spread=float(np.sqrt(np.mean(sigma_w**2))),
        rmse=float(np.sqrt(np.mean(rmse_w**2))),
        spread_mean_of_roots=float(np.mean(sigma_w)),
        rmse_mean_of_roots=float(np.mean(rmse_w)),
    )


# ---------------------------------------------------------------------------
# Rank histograms
# ---------------------------------------------------------------------------

def truth_ranks(
    members: np.ndarray,
    truth: np.ndarray,
    rng: np.random.Generator,
) -> np.ndarray:
    """Rank of each truth component among the N member values, in [1, N+1].

    Rank = #(members strictly below) + 1, plus one fair coin per tied member.
    The generator is only touched when a tie occurs.
    """
    ensemble = np.asarray(members, dtype=float)
    values = np.asarray(truth, dtype=float)
    if ensemble.ndim != 2 or ensemble.shape[0] != values.size:
        raise InvalidInputError(
            f"members shape {ensemble.shape} does not match truth length {values.size}"
        )
    below = np.sum(ensemble < values[:, None], axis=1)
    ties = np.sum(ensemble == values[:, None], axis=1)
    ranks = below + 1
    n_ties = int(ties.sum())
    if n_ties:
        flips = rng.integers(0, 2, size=n_ties)
        owners = np.repeat(np.arange(values.size), ties)
        ranks = ranks + np.bincount(owners, weights=flips, minlength=values.size).astype(int)
    return ranks


def rank_counts(
    run: AssimilationRun,
    rng: np.random.Generator,
) -> np.ndarray:
    """Histogram counts (N+1 bins) over the run's native analysis times and all components."""
    if not run.native_analyses:
        raise InsufficientDataError(f"{run.method} run has no analyses to rank")
    n_members = run.native_analyses[0].shape[1]
    counts = np.zeros(n_members + 1, dtype=int)
    for members, state in zip(run.native_analyses, run.truth_at_analysis):
        ranks = truth_ranks(members, state, rng)
        counts += np.bincount(ranks - 1, minlength=n_members + 1)
    return counts


def rank_stats(counts: np.ndarray) -> tuple[float, float]:
    """(chi^2 against a uniform histogram, flatness = std(f_b) / (1/(N+1))).

    Raises:
        InsufficientDataError: If the counts sum to zero.
    """
    observed = np.asarray(counts, dtype=float)
    total = float(observed.sum())
    if total <= 0:
        raise InsufficientDataError("rank histogram has zero total count")
    chi2 = float(sps.chisquare(observed).statistic)
    frequencies = observed / total
    flatness = float(np.std(frequencies)) * observed.size
    return chi2, flatness


def rank_histogram(counts: np.ndarray) -> RankHistogram:
    """Wrap aggregated counts with their uniformity statistics."""
    observed = np.asarray(counts, dtype=int)
    chi2, flatness = rank_stats(observed)
    return RankHistogram(
        counts=observed, total=int(observed.sum()), chi2=chi2, flatness=flatness,
    )


# ---------------------------------------------------------------------------
# Bias-variance
# ---------------------------------------------------------------------------

def bias_variance(runs: Sequence[AssimilationRun], truth: np.ndarray) -> BiasVarianceTable:
    """Across-trial split of the analysis-mean MSE at each window end.

    All runs must share truth and observations. Norms are total (not divided
    by n) and the variance divisor is the number of trials, so
    mse_w = bias2_w + var_w.

    Raises:
        InsufficientDataError: With fewer than 2 runs.
        InvalidInputError: If the runs do not cover the same window ends.
    """
    if len(runs) < 2:
        raise InsufficientDataError(f"bias-variance needs >= 2 trials, got {len(runs)}")
    times = runs[0].endpoint_times
    if any(r.endpoint_times != times for r in runs[1:]):
        raise InvalidInputError("all trials must cover the same window ends")

    states = np.asarray(truth, dtype=float)[times]
    means = np.stack([r.endpoint_means for r in runs])
    trial_mean = means.mean(axis=0)

    bias2_w = np.sum((trial_mean - states) ** 2, axis=1)
    var_w = np.mean(np.sum((means - trial_mean) ** 2, axis=2), axis=0)
    mse_w = np.mean(np.sum((means - states) ** 2, axis=2), axis=0)
    return BiasVarianceTable(
        bias2_w=bias2_w,
        var_w=var_w,
        mse_w=mse_w,
        bias2=float(bias2_w.mean()),
        variance=float(var_w.mean()),
        mse=float(mse_w.mean()),
    )


# ---------------------------------------------------------------------------
# Across-trial summary
# ---------------------------------------------------------------------------

def summarize_trials(method: str, series: Sequence[WindowSeries]) -> SummaryRow:
    """Mean and sample std (ddof=1) of the headline metrics over trials.

    NaN entries (undefined gamma_bar or rho) are skipped. The std is 0 with one
    defined value, and both are NaN when no trial defines the metric.
    """
    if not series:
        raise InsufficientDataError(f"no surviving trials to summarize for {method}")

    def spread_of(values: list[float]) -> tuple[float, float]:
        arr = np.asarray(values, dtype=float)
        defined = arr[~np.isnan(arr)]
        if defined.size == 0:
            return math.nan, math.nan
        std = float(np.std(defined, ddof=1)) if defined.size > 1 else 0.0
        return float(np.mean(defined)), std

    spread_mean, spread_std = spread_of([s.spread for s in series])
    rmse_mean, rmse_std = spread_of([s.rmse for s in series])
    gamma_mean, gamma_std = spread_of([s.gamma_bar for s in series])
    rho_mean, rho_std = spread_of([s.rho for s in series])
    return SummaryRow(
        method=method,
        spread_mean=spread_mean,
        spread_std=spread_std,
        rmse_mean=rmse_mean,
        rmse_std=rmse_std,
        gamma_bar_mean=gamma_mean,
        gamma_bar_std=gamma_std,
        rho_mean=rho_mean,
        rho_std=rho_std,
        n_trials=len(series),
        spread_mean_of_roots=float(np.mean([s.spread_mean_of_roots for s in series])),
        rmse_mean_of_roots=float(np.mean([s.rmse_mean_of_roots for s in series])),
    )
