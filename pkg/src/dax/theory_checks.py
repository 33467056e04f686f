"""
Monte-Carlo property checks on synthetic Gaussian residual models.

Population mean, covariance and eigenstructure are known exactly, so each
check compares a sampled statistic against a closed form, a deterministic
inequality or a convergence rate, and returns a CheckReport.
"""

from __future__ import annotations

import math
from collections.abc import Iterator

import numpy as np
import scipy.linalg
from scipy.stats import ortho_group

from . import config
from .errors import InvalidInputError
from .linalg import sym_eig_desc
from .models import CheckReport, GaussianResidualModel

BATCH_SIZE = 1000


# ---------------------------------------------------------------------------
# Synthetic models
# ---------------------------------------------------------------------------

def residual_model(
    sigma_e: np.ndarray,
    kappa: int,
    mu_e: np.ndarray | None = None,
) -> GaussianResidualModel:
    """Model with a given SPD covariance; eigenpairs computed once."""
    cov = np.asarray(sigma_e, dtype=float)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise InvalidInputError(f"sigma_e must be square, got shape {cov.shape}")
    d = cov.shape[0]
    if not 1 <= kappa <= d:
        raise InvalidInputError(f"kappa must lie in [1, {d}], got {kappa}")
    eigen = sym_eig_desc(cov)
    if eigen.values[-1] <= 0:
        raise InvalidInputError("sigma_e must be positive definite")
    mean = np.zeros(d) if mu_e is None else np.asarray(mu_e, dtype=float).ravel()
    if mean.size != d:
        raise InvalidInputError(f"mu_e must have length {d}, got {mean.size}")
    return GaussianResidualModel(mu_e=mean, sigma_e=cov, eigen=eigen, kappa=kappa)


def spectral_model(
    eigenvalues: np.ndarray,
    kappa: int,
    rng: np.random.Generator,
    mu_e: np.ndarray | None = None,
) -> GaussianResidualModel:
    """Model with prescribed eigenvalues and Haar-random eigenvectors."""
    values = np.sort(np.asarray(eigenvalues, dtype=float))[::-1]
    d = values.size
    basis = np.eye(1) if d == 1 else ortho_group.rvs(dim=d, random_state=rng)
    cov = (basis * values) @ basis.T
    cov = 0.5 * (cov + cov.T)
    return residual_model(cov, kappa, mu_e)


def geometric_spectrum(d: int, top: float = 2.0, ratio: float = 0.5) -> np.ndarray:
    """top, top·ratio, top·ratio^2, ...; d=2 gives (2, 1)."""
    return top * ratio ** np.arange(d)


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------

def _draw_batches(
    model: GaussianResidualModel,
    N: int,
    reps: int,
    rng: np.random.Generator,
) -> Iterator[np.ndarray]:
    """Yield residual ensembles in batches of shape (b, d, N)."""
    factor = scipy.linalg.cholesky(model.sigma_e, lower=True)
    remaining = reps
    while remaining > 0:
        b = min(BATCH_SIZE, remaining)
        noise = rng.standard_normal((b, model.d, N))
        yield model.mu_e[None, :, None] + factor @ noise
        remaining -= b


def _sample_covariances(samples: np.ndarray) -> np.ndarray:
    n_members = samples.shape[2]
    centered = samples - samples.mean(axis=2, keepdims=True)
    return centered @ centered.transpose(0, 2, 1) / (n_members - 1)


def _require(N: int, reps: int, min_reps: int, name: str) -> None:
    if N < 2:
        raise InvalidInputError(f"{name}: N must be >= 2, got {N}")
    if reps < min_reps:
        raise InvalidInputError(f"{name}: reps must be >= {min_reps}, got {reps}")


def _relative_error(estimate: float, exact: float) -> float:
    return abs(estimate - exact) / exact if exact > 0 else math.inf


def _frobenius_errors(model: GaussianResidualModel, N: int, reps: int, rng) -> np.ndarray:
    """Per-replication ||C - Sigma||_F^2."""
    chunks = []
    for batch in _draw_batches(model, N, reps, rng):
        diff = _sample_covariances(batch) - model.sigma_e
        chunks.append(np.sum(diff**2, axis=(1, 2)))
    return np.concatenate(chunks)


def _frobenius_mse(model: GaussianResidualModel, N: int, reps: int, rng) -> float:
    return float(np.mean(_frobenius_errors(model, N, reps, rng)))


def shrinkage_exponent(values: np.ndarray, batch: int) -> float:
    """Rate at which the spread of batch means falls with batch size.

    Compares batch means over `batch` and `4 * batch` replications; the
    log-ratio of their standard deviations, base 4, is 0.5 for an error that
    shrinks as 1/sqrt(reps).
    """
    data = np.asarray(values, dtype=float)
    n_large = data.size // (4 * batch)
    if n_large < 2:
        raise InvalidInputError(f"need at least {8 * batch} values, got {data.size}")
    data = data[: n_large * 4 * batch]
    small = np.std(data.reshape(-1, batch).mean(axis=1), ddof=1)
    large = np.std(data.reshape(-1, 4 * batch).mean(axis=1), ddof=1)
    return float(np.log(small / large) / np.log(4.0))


def wishart_exact(sigma_e: np.ndarray, N: int) -> float:
    """E||C - Sigma||_F^2 = ((tr Sigma)^2 + tr(Sigma^2)) / (N - 1) for Gaussian draws."""
    cov = np.asarray(sigma_e, dtype=float)
    return (np.trace(cov) ** 2 + np.trace(cov @ cov)) / (N - 1)


# ---------------------------------------------------------------------------
# Checks
# ---------------------------------------------------------------------------

def cov_unbiasedness_check(
    model: GaussianResidualModel,
    N: int,
    reps: int,
    rng: np.random.Generator,
) -> CheckReport:
    """Average of C_E over reps lies within 4 standard errors of Sigma_E entrywise."""
    _require(N, reps, config.MIN_REPS_UNBIASEDNESS, "unbiasedness")
    total = np.zeros((model.d, model.d))
    total_sq = np.zeros((model.d, model.d))
    for batch in _draw_batches(model, N, reps, rng):
        covs = _sample_covariances(batch)
        total += covs.sum(axis=0)
        total_sq += (covs**2).sum(axis=0)

    mean = total / reps
    variance = np.maximum(total_sq / reps - mean**2, 0.0) * reps / (reps - 1)
    se = np.sqrt(variance / reps)
    error = np.abs(mean - model.sigma_e)
    limit = config.UNBIASEDNESS_SE_MULTIPLE * se + config.BOUND_SLACK
    passed = bool(np.all(error <= limit))
    worst = float(np.max(error / np.maximum(se, np.finfo(float).tiny)))
    return CheckReport(
        name="unbiasedness",
        passed=passed,
        metrics={"max_abs_error": float(error.max()), "max_se_multiple": worst, "reps": reps},
        message=f"max |mean(C_E) - Sigma_E| = {worst:.2f} SE "
                f"(limit {config.UNBIASEDNESS_SE_MULTIPLE:g})",
    )


def wishart_frobenius_check(
    model: GaussianResidualModel,
    N: int,
    reps: int,
    rng: np.random.Generator,
) -> CheckReport:
    """MC E||C_E - Sigma_E||_F^2 within 5% of the Wishart closed form.

    The MC error must also shrink as 1/sqrt(reps): batch means over 4x as
    many replications have half the spread, up to SHRINKAGE_EXPONENT_TOL.
    """
    _require(N, reps, config.MIN_REPS_MOMENT, "wishart")
    exact = wishart_exact(model.sigma_e, N)
    errors = _frobenius_errors(model, N, reps, rng)
    estimate = float(np.mean(errors))
    rel = _relative_error(estimate, exact)
    exponent = shrinkage_exponent(errors, config.SHRINKAGE_BATCH)
    shrinks = abs(exponent - 0.5) <= config.SHRINKAGE_EXPONENT_TOL
    return CheckReport(
        name="wishart",
        passed=rel <= config.MOMENT_REL_TOL and shrinks,
        metrics={
            "estimate": estimate,
            "exact": exact,
            "rel_error": rel,
            "rel_error_half_reps": _relative_error(float(np.mean(errors[: reps // 2])), exact),
            "shrinkage_exponent": exponent,
        },
        message=(
            f"E||C-Sigma||_F^2 = {estimate:.6g} vs exact {exact:.6g} ({rel:.2%}); "
            f"MC error ~ reps^-{exponent:.2f}"
        ),
    )


def perturbation_margins(
    sigma_e: np.ndarray,
    c_e: np.ndarray,
    kappa: int,
) -> dict[str, float]:
    """Weyl and Davis-Kahan slacks for one (population, sample) covariance pair.

    Returns:
        weyl_lhs: max_i |lambda_hat_i - lambda_i|.
        op_norm: ||C - Sigma||_2.
        projector_error: ||P_hat_kappa - P_kappa||_F.
        dk_bound: 2 sqrt(2 kappa) ||C - Sigma||_2 / delta_kappa.
        dk_tight_bound: sqrt(2 kappa) ||C - Sigma||_2 / delta_kappa.
    """
    population = sym_eig_desc(sigma_e)
    sample = sym_eig_desc(c_e)
    values = population.values
    gap = values[kappa - 1] - values[kappa] if kappa < values.size else values[-1]
    if not gap > 0:
        raise InvalidInputError(f"eigen-gap at kappa={kappa} must be > 0, got {gap}")

    op_norm = float(np.linalg.norm(c_e - sigma_e, ord=2))
    proj = population.vectors[:, :kappa] @ population.vectors[:, :kappa].T
    proj_hat = sample.vectors[:, :kappa] @ sample.vectors[:, :kappa].T
    tight = math.sqrt(2 * kappa) * op_norm / gap
    return {
        "weyl_lhs": float(np.max(np.abs(sample.values - values))),
        "op_norm": op_norm,
        "projector_error": float(np.linalg.norm(proj_hat - proj)),
        "dk_bound": 2.0 * tight,
        "dk_tight_bound": tight,
    }


def eigen_perturbation_check(
    model: GaussianResidualModel,
    N: int,
    reps: int,
    rng: np.random.Generator,
) -> CheckReport:
    """Weyl and Davis-Kahan bounds on every replication; zero violations allowed.

    The projector bound uses the population gap, which needs the constant
    2 sqrt(2 kappa) / delta_kappa to hold deterministically. Exceedances of
    the sharper sqrt(2 kappa) / delta_kappa form are counted but do not fail.
    """
    if N < 2 or reps < 1:
        raise InvalidInputError("eigen-perturbation needs N >= 2 and reps >= 1")
    if not model.delta_kappa > 0:
        raise InvalidInputError(f"eigen-gap delta_kappa must be > 0, got {model.delta_kappa}")

    weyl_violations = dk_violations = tight_exceedances = 0
    worst_dk_ratio = 0.0
    for batch in _draw_batches(model, N, reps, rng):
        for c_e in _sample_covariances(batch):
            margins = perturbation_margins(model.sigma_e, c_e, model.kappa)
            if margins["weyl_lhs"] > margins["op_norm"] + config.BOUND_SLACK:
                weyl_violations += 1
            if margins["projector_error"] > margins["dk_bound"] + config.BOUND_SLACK:
                dk_violations += 1
            if margins["projector_error"] > margins["dk_tight_bound"] + config.BOUND_SLACK:
                tight_exceedances += 1
            if margins["dk_bound"] > 0:
                worst_dk_ratio = max(
                    worst_dk_ratio, margins["projector_error"] / margins["dk_bound"]
                )

    passed = weyl_violations == 0 and dk_violations == 0
    return CheckReport(
        name="eigen-perturbation",
        passed=passed,
        metrics={
            "weyl_violations": weyl_violations,
            "dk_violations": dk_violations,
            "dk_tight_exceedances": tight_exceedances,
            "max_dk_ratio": worst_dk_ratio,
            "reps": reps,
        },
        message=f"{weyl_violations} Weyl and {dk_violations} Davis-Kahan violations "
                f"over {reps} replications",
    )


def enkf_perturbation_variance_check(
    K: np.ndarray,
    R_L: np.ndarray,
    N: int,
    reps: int,
    rng: np.random.Generator,
) -> CheckReport:
    """Variance of the mean gain-mapped perturbation (1/N) sum_j K eps_j vs tr(K R K^T)/N."""
    _require(N, reps, config.MIN_REPS_MOMENT, "perturbation-variance")
    gain = np.atleast_2d(np.asarray(K, dtype=float))
    noise_cov = np.atleast_2d(np.asarray(R_L, dtype=float))
    if gain.shape[1] != noise_cov.shape[0]:
        raise InvalidInputError(f"K shape {gain.shape} incompatible with R shape {noise_cov.shape}")

    exact = float(np.trace(gain @ noise_cov @ gain.T)) / N
    noise_model = residual_model(noise_cov, 1)
    total = 0.0
    for batch in _draw_batches(noise_model, N, reps, rng):
        shift = gain @ batch.mean(axis=2).T
        total += float(np.sum(shift**2))
    estimate = total / reps

    if exact == 0:
        passed = estimate <= 1e-12
        rel = 0.0 if passed else math.inf
    else:
        rel = _relative_error(estimate, exact)
        passed = rel <= config.MOMENT_REL_TOL
    return CheckReport(
        name="perturbation-variance",
        passed=passed,
        metrics={"estimate": estimate, "exact": exact, "rel_error": rel},
        message=f"Var(mean K eps) = {estimate:.6g} vs tr(KRK^T)/N = {exact:.6g}",
    )


def _ratio_report(
    name: str,
    small: float,
    large: float,
    band: tuple[float, float],
    inclusive: bool,
    label: str,
) -> CheckReport:
    ratio = small / large if large > 0 else math.inf
    low, high = band
    passed = low <= ratio <= high if inclusive else low < ratio < high
    return CheckReport(
        name=name,
        passed=passed,
        metrics={"at_N": small, "at_2N": large, "ratio": ratio},
        message=f"{label} ratio N/2N = {ratio:.3f} (band {low:g}..{high:g})",
    )


def fourth_moment_check(
    model: GaussianResidualModel,
    N: int,
    reps: int,
    rng: np.random.Generator,
) -> CheckReport:
    """E||e_bar - mu||^4 at N and 2N; O(1/N^2) puts the ratio near 4."""
    _require(N, reps, config.MIN_REPS_MOMENT, "fourth-moment")

    def moment(size: int) -> float:
        total = 0.0
        for batch in _draw_batches(model, size, reps, rng):
            deviation = batch.mean(axis=2) - model.mu_e
            total += float(np.sum(np.sum(deviation**2, axis=1) ** 2))
        return total / reps

    return _ratio_report(
        "fourth-moment", moment(N), moment(2 * N),
        config.FOURTH_MOMENT_RATIO_BAND, True, "E||e_bar-mu||^4",
    )


def frobenius_rate_check(
    model: GaussianResidualModel,
    N: int,
    reps: int,
    rng: np.random.Generator,
) -> CheckReport:
    """E||C_E - Sigma_E||_F^2 at N and 2N; the 1/(N-1) law gives (2N-1)/(N-1)."""
    _require(N, reps, config.MIN_REPS_MOMENT, "frobenius-rate")
    report = _ratio_report(
        "frobenius-rate",
        _frobenius_mse(model, N, reps, rng),
        _frobenius_mse(model, 2 * N, reps, rng),
        config.FROBENIUS_RATIO_BAND, False, "E||C-Sigma||_F^2",
    )
    report.metrics["expected_ratio"] = (2 * N - 1) / (N - 1)
    return report


def windowed_noise_check(
    sigma_obs: float,
    d: int,
    N: int,
    reps: int,
    rng: np.random.Generator,
) -> CheckReport:
    """Sample covariance of N draws from N(0, sigma^2 I_d):
    E||R_hat - R||_F^2 = sigma^4 d (d + 1) / (N - 1).
    """
    _require(N, reps, config.MIN_REPS_MOMENT, "windowed-noise")
    if not sigma_obs > 0:
        raise InvalidInputError(f"sigma_obs must be > 0, got {sigma_obs}")
    model = residual_model(sigma_obs**2 * np.eye(d), 1)
    exact = sigma_obs**4 * d * (d + 1) / (N - 1)
    estimate = _frobenius_mse(model, N, reps, rng)
    rel = _relative_error(estimate, exact)
    return CheckReport(
        name="windowed-noise",
        passed=rel <= config.MOMENT_REL_TOL,
        metrics={"estimate": estimate, "exact": exact, "rel_error": rel},
        message=f"E||R_hat-R||_F^2 = {estimate:.6g} vs {exact:.6g} ({rel:.2%})",
    )


def projector_scaling_check(
    model: GaussianResidualModel,
    N: int,
    reps: int,
    rng: np.random.Generator,
) -> CheckReport:
    """E||(P_hat - P)(e_bar - mu)||^2 at N and 2N; passes when the ratio is >= 2."""
    if N < 2 or reps < 1:
        raise InvalidInputError("projector-scaling needs N >= 2 and reps >= 1")
    if not model.delta_kappa > 0:
        raise InvalidInputError(f"eigen-gap delta_kappa must be > 0, got {model.delta_kappa}")
    projector = model.projector

    def cross_term(size: int) -> float:
        total = 0.0
        for batch in _draw_batches(model, size, reps, rng):
            for members, c_e in zip(batch, _sample_covariances(batch)):
                vectors = sym_eig_desc(c_e).vectors[:, : model.kappa]
                deviation = members.mean(axis=1) - model.mu_e
                total += float(np.sum(((vectors @ vectors.T - projector) @ deviation) ** 2))
        return total / reps

    return _ratio_report(
        "projector-scaling", cross_term(N), cross_term(2 * N),
        (config.PROJECTOR_RATIO_MIN, math.inf), True, "E||(P_hat-P)(e_bar-mu)||^2",
    )


def truncation_bias_report(model: GaussianResidualModel) -> CheckReport:
    """||(I - P_kappa) mu_E||^2 and the discarded eigenvalue tail; no threshold."""
    residual = model.mu_e - model.projector @ model.mu_e
    mean_term = float(residual @ residual)
    tail = float(np.sum(model.eigen.values[model.kappa:]))
    return CheckReport(
        name="truncation-bias",
        passed=True,
        metrics={"mean_out_of_subspace": mean_term, "discarded_tail": tail},
        message=f"||(I-P)mu||^2 = {mean_term:.6g}, sum of discarded eigenvalues = {tail:.6g}",
    )