"""
Seeded experiment orchestration.

Every random draw comes from a substream
default_rng(SeedSequence([base_seed, trial, tag, *extra])) with the tags in
config.STREAM_TAGS, so results do not depend on task order or n_jobs.
(trial, method) tasks are dispatched with joblib and aggregated afterwards.
"""

from __future__ import annotations

import logging
from collections.abc import Callable

import numpy as np
from joblib import Parallel, delayed

from . import config, theory_checks
from .diagnostics import (
    bias_variance,
    rank_counts,
    rank_histogram,
    summarize_trials,
    window_series,
)
from .dynamics import spin_up_truth, truth_trajectory
from .ensemble import initial_ensemble
from .errors import InsufficientDataError, InvalidInputError
from .filters import run_filter
from .models import CheckReport, ObsOperator, ResultBundle, TrialResult
from .observation import record_digest, synthesize_observations
from .settings import ExperimentConfig

logger = logging.getLogger(__name__)

_PERTURB_STREAMS = {"seq_enkf": "perturb_seq", "fourd_enkf": "perturb_4d"}


def derive_rng(base_seed: int, trial: int, stream: str, *extra: int) -> np.random.Generator:
    """Independent generator for one (seed, trial, stream) triple."""
    tag = config.STREAM_TAGS[stream]
    return np.random.default_rng(np.random.SeedSequence([base_seed, trial, tag, *extra]))


def generate_truth_and_observations(
    cfg: ExperimentConfig,
    trial: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Truth at k = 0..K and observations z_1..z_K for one trial.

    With share_truth every trial draws from trial 0's stream and gets the same
    record. Otherwise the spin-up start is nudged per trial so truths differ too.
    """
    params = cfg.model_params()
    source = 0 if cfg.share_truth else trial
    rng = derive_rng(cfg.seed, source, "truth_obs")
    offset = None
    if not cfg.share_truth:
        offset = config.SPINUP_KICK * rng.standard_normal(cfg.n)

    x0 = spin_up_truth(params, cfg.spinup_time, offset=offset)
    truth = truth_trajectory(x0, cfg.K, params)
    H = ObsOperator.regular(cfg.n, cfg.m)
    observations = synthesize_observations(H, truth[1:], cfg.sigma_obs, rng)
    return truth, observations


def run_trial_method(
    cfg: ExperimentConfig,
    method: str,
    trial: int,
    truth: np.ndarray,
    observations: np.ndarray,
) -> TrialResult:
    """Run one method on one trial and compute its per-trial diagnostics."""
    filter_config = cfg.to_filter_config(method)
    init_rng = derive_rng(cfg.seed, trial, "init_ensemble")
    members = initial_ensemble(truth[0], cfg.N, cfg.sigma_init, init_rng)
    stream = _PERTURB_STREAMS.get(method)
    perturb_rng = derive_rng(cfg.seed, trial, stream) if stream else None

    run = run_filter(filter_config, truth, observations, members, perturb_rng)
    if run.diverged:
        return TrialResult(method=method, trial=trial, run=run, series=None, rank_counts=None)

    try:
        series = window_series(run, truth)
    except InsufficientDataError as exc:
        logger.warning("%s trial %d: no spread-skill series (%s)", method, trial, exc)
        series = None
    tie_rng = derive_rng(cfg.seed, trial, "rank_ties", config.METHODS.index(method))
    counts = rank_counts(run, tie_rng)
    return TrialResult(method=method, trial=trial, run=run, series=series, rank_counts=counts)


def run_experiment(
    cfg: ExperimentConfig,
    on_result: Callable[[int, int, TrialResult], None] | None = None,
) -> ResultBundle:
    """Run every configured method on every trial and aggregate.

    Args:
        cfg: Validated experiment configuration.
        on_result: Called as on_result(index, total, result) as tasks finish,
            in submission order.

    Returns:
        ResultBundle with per-trial records, rank histograms, bias-variance
        tables and summary rows. Divergent trials are kept in `trials` but
        excluded from every aggregate.
    """
    cfg.validate()
    records: dict[int, tuple[np.ndarray, np.ndarray]] = {}
    for trial in range(cfg.n_trials):
        if cfg.share_truth and trial > 0:
            records[trial] = records[0]
        else:
            records[trial] = generate_truth_and_observations(cfg, trial)

    tasks = [(trial, method) for trial in range(cfg.n_trials) for method in cfg.methods]
    logger.debug("dispatching %d tasks on %d jobs", len(tasks), cfg.n_jobs)
    outputs = Parallel(n_jobs=cfg.n_jobs, return_as="generator")(
        delayed(run_trial_method)(cfg, method, trial, *records[trial])
        for trial, method in tasks
    )

    bundle = ResultBundle()
    for index, result in enumerate(outputs, start=1):
        bundle.trials.append(result)
        if on_result is not None:
            on_result(index, len(tasks), result)

    for trial, (truth, observations) in records.items():
        bundle.hashes[trial] = (record_digest(truth), record_digest(observations))

    for method in cfg.methods:
        _aggregate(cfg, method, bundle, records[0][0])
    return bundle


def _aggregate(
    cfg: ExperimentConfig,
    method: str,
    bundle: ResultBundle,
    shared_truth: np.ndarray,
) -> None:
    surviving = bundle.surviving(method)
    dropped = [t.trial for t in bundle.trials if t.method == method and t.run.diverged]
    if dropped:
        logger.warning("%s: excluding diverged trials %s from aggregates", method, dropped)
    if not surviving:
        logger.warning("%s: no surviving trials", method)
        return

    bundle.rank_histograms[method] = rank_histogram(
        np.sum([t.rank_counts for t in surviving], axis=0)
    )

    series = [t.series for t in surviving if t.series is not None]
    if series:
        bundle.summaries[method] = summarize_trials(method, series)

    if not cfg.share_truth:
        logger.warning("%s: bias-variance skipped, trials do not share truth", method)
    elif len(surviving) < 2:
        logger.warning("%s: bias-variance needs >= 2 surviving trials", method)
    else:
        bundle.bias_variance[method] = bias_variance([t.run for t in surviving], shared_truth)


# ---------------------------------------------------------------------------
# Theory checks
# ---------------------------------------------------------------------------

def check_theory(name: str, **overrides: float | None) -> CheckReport:
    """Run one named property check with defaults from config.THEORY_DEFAULTS.

    Args:
        name: Check name as used by `dax check-theory`.
        **overrides: d, N, reps, kappa, n, sigma, ratio or seed; None keeps
            the default.

    Raises:
        InvalidInputError: Unknown check name or bad parameters.
    """
    if name not in config.THEORY_DEFAULTS:
        raise InvalidInputError(f"unknown theory check '{name}'")
    params: dict[str, float] = {"seed": config.BASE_SEED, **config.THEORY_DEFAULTS[name]}
    params.update({key: value for key, value in overrides.items() if value is not None})

    rng = derive_rng(int(params["seed"]), 0, "theory")
    d = int(params["d"])
    kappa = int(params.get("kappa", 1))
    N = int(params.get("N", 2))
    reps = int(params.get("reps", 0))
    sigma = float(params.get("sigma", config.SIGMA_OBS))

    if name == "perturbation-variance":
        gain = rng.standard_normal((int(params["n"]), d))
        return theory_checks.enkf_perturbation_variance_check(
            gain, sigma**2 * np.eye(d), N, reps, rng,
        )
    if name == "windowed-noise":
        return theory_checks.windowed_noise_check(sigma, d, N, reps, rng)

    spectrum = theory_checks.geometric_spectrum(
        d, config.SPECTRUM_TOP, float(params.get("ratio", config.SPECTRUM_RATIO)),
    )
    mu_e = np.ones(d) if name == "truncation-bias" else None
    model = theory_checks.spectral_model(spectrum, kappa, rng, mu_e)

    if name == "truncation-bias":
        return theory_checks.truncation_bias_report(model)
    check = {
        "unbiasedness": theory_checks.cov_unbiasedness_check,
        "wishart": theory_checks.wishart_frobenius_check,
        "eigen-perturbation": theory_checks.eigen_perturbation_check,
        "fourth-moment": theory_checks.fourth_moment_check,
        "frobenius-rate": theory_checks.frobenius_rate_check,
        "projector-scaling": theory_checks.projector_scaling_check,
    }[name]
    return check(model, N, reps, rng)
