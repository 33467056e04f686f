"""
Experiment report generation.

Console summaries, progress lines and the CSV/text files written under
`dax run --out`. Floats are written with 17 significant digits; missing
values (undefined ratios) are written as empty fields.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path

from . import config
from .models import CheckReport, ResultBundle, TrialResult


def _fmt(value: float) -> str:
    """17-significant-digit float, empty for NaN."""
    value = float(value)
    if math.isnan(value):
        return ""
    return format(value, config.FLOAT_FORMAT)


def _label(method: str) -> str:
    return config.METHOD_LABELS.get(method, method)


def _ordered_trials(bundle: ResultBundle) -> list[TrialResult]:
    order = {name: i for i, name in enumerate(config.METHODS)}
    return sorted(bundle.trials, key=lambda t: (order.get(t.method, len(order)), t.trial))


def _open_csv(path: Path, fieldnames: list[str]):
    handle = path.open("w", newline="", encoding="utf-8")
    writer = csv.DictWriter(handle, fieldnames=fieldnames, lineterminator="\n")
    writer.writeheader()
    return handle, writer


# ---------------------------------------------------------------------------
# Console output
# ---------------------------------------------------------------------------

def print_trial_progress(index: int, total: int, result: TrialResult) -> None:
    """One `[i/total]` line per finished (trial, method) task."""
    prefix = f"  [{index}/{total}] {_label(result.method):<16} trial {result.trial}"
    if result.run.diverged:
        print(f"{prefix}  DIVERGED ({result.run.failure})")
    elif result.series is None:
        print(f"{prefix}  done ({len(result.run.endpoint_times)} windows)")
    else:
        series = result.series
        print(
            f"{prefix}  spread={series.spread:.3f}  RMSE={series.rmse:.3f}  "
            f"gamma={series.gamma_bar:.3f}  rho={series.rho:.3f}"
        )


def print_console_summary(bundle: ResultBundle) -> None:
    """Print the across-trial summary, rank statistics and bias-variance split."""
    print(f"\n{'=' * 60}")
    print("  Assimilation Summary (mean ± std across trials)")
    print(f"{'=' * 60}")
    if not bundle.summaries:
        print("  No surviving trials with a spread-skill series.")
    for method, row in bundle.summaries.items():
        print(f"  {_label(method)}  ({row.n_trials} trial(s))")
        print(f"    Spread:     {row.spread_mean:.3f} ± {row.spread_std:.3f}")
        print(f"    RMSE:       {row.rmse_mean:.3f} ± {row.rmse_std:.3f}")
        print(f"    Ratio:      {row.gamma_bar_mean:.3f} ± {row.gamma_bar_std:.3f}")
        print(f"    Corr:       {row.rho_mean:.3f} ± {row.rho_std:.3f}")
    print(f"{'=' * 60}")

    if bundle.rank_histograms:
        print("\n  Rank histograms:")
        print(f"  {'-' * 56}")
        for method, hist in bundle.rank_histograms.items():
            print(
                f"  {_label(method):<20} M={hist.total:<8} "
                f"chi2={hist.chi2:<12.1f} flatness={hist.flatness:.3f}"
            )

    if bundle.bias_variance:
        print("\n  Bias-variance (time-averaged, total norms):")
        print(f"  {'-' * 56}")
        for method, table in bundle.bias_variance.items():
            print(
                f"  {_label(method):<20} MSE={table.mse:<9.3f} Bias2={table.bias2:<9.3f} "
                f"Var={table.variance:<9.3f} Bias2/MSE={table.bias_ratio:.0%}"
            )

    diverged = [t for t in bundle.trials if t.run.diverged]
    if diverged:
        print(f"\n  Diverged (excluded): {len(diverged)}")
        for result in diverged:
            print(f"  {_label(result.method):<20} trial {result.trial}: {result.run.failure}")
    print()


def print_check_report(report: CheckReport) -> None:
    """PASS/FAIL block for one theory check."""
    verdict = "PASS" if report.passed else "FAIL"
    print(f"\n{'=' * 60}")
    print(f"  check-theory {report.name}: {verdict}")
    print(f"{'=' * 60}")
    print(f"  {report.message}")
    for key, value in report.metrics.items():
        print(f"  {key:<24} {value:.6g}")
    print()


# ---------------------------------------------------------------------------
# File export
# ---------------------------------------------------------------------------

def export_series_csv(bundle: ResultBundle, filepath: Path) -> None:
    """method,trial,window,k_w,sigma_w,rmse_w,gamma_w for every surviving trial."""
    fieldnames = ["method", "trial", "window", "k_w", "sigma_w", "rmse_w", "gamma_w"]
    handle, writer = _open_csv(filepath, fieldnames)
    with handle:
        for result in _ordered_trials(bundle):
            if result.series is None:
                continue
            series = result.series
            for w, k_w in enumerate(result.run.endpoint_times):
                writer.writerow({
                    "method": result.method,
                    "trial": result.trial,
                    "window": w + 1,
                    "k_w": k_w,
                    "sigma_w": _fmt(series.sigma_w[w]),
                    "rmse_w": _fmt(series.rmse_w[w]),
                    "gamma_w": _fmt(series.gamma_w[w]),
                })


def export_summary_csv(bundle: ResultBundle, filepath: Path) -> None:
    """One row per method; mean-of-roots columns follow the headline metrics."""
    fieldnames = [
        "method", "spread_mean", "spread_std", "rmse_mean", "rmse_std",
        "gamma_bar_mean", "gamma_bar_std", "rho_mean", "rho_std",
        "spread_mean_of_roots", "rmse_mean_of_roots", "n_trials",
    ]
    handle, writer = _open_csv(filepath, fieldnames)
    with handle:
        for method, row in bundle.summaries.items():
            writer.writerow({
                "method": method,
                "spread_mean": _fmt(row.spread_mean),
                "spread_std": _fmt(row.spread_std),
                "rmse_mean": _fmt(row.rmse_mean),
                "rmse_std": _fmt(row.rmse_std),
                "gamma_bar_mean": _fmt(row.gamma_bar_mean),
                "gamma_bar_std": _fmt(row.gamma_bar_std),
                "rho_mean": _fmt(row.rho_mean),
                "rho_std": _fmt(row.rho_std),
                "spread_mean_of_roots": _fmt(row.spread_mean_of_roots),
                "rmse_mean_of_roots": _fmt(row.rmse_mean_of_roots),
                "n_trials": row.n_trials,
            })


def export_ranks_csv(bundle: ResultBundle, filepath: Path) -> None:
    fieldnames = ["method", "rank_bin", "count", "total", "chi2", "flatness"]
    handle, writer = _open_csv(filepath, fieldnames)
    with handle:
        for method, hist in bundle.rank_histograms.items():
            for b, count in enumerate(hist.counts, start=1):
                writer.writerow({
                    "method": method,
                    "rank_bin": b,
                    "count": int(count),
                    "total": hist.total,
                    "chi2": _fmt(hist.chi2),
                    "flatness": _fmt(hist.flatness),
                })


def export_biasvar_csv(bundle: ResultBundle, filepath: Path) -> None:
    """Per-window rows, then one `mean` footer row per method with the time averages."""
    fieldnames = ["method", "window", "bias2", "variance", "mse"]
    handle, writer = _open_csv(filepath, fieldnames)
    with handle:
        for method, table in bundle.bias_variance.items():
            for w in range(table.bias2_w.size):
                writer.writerow({
                    "method": method,
                    "window": w + 1,
                    "bias2": _fmt(table.bias2_w[w]),
                    "variance": _fmt(table.var_w[w]),
                    "mse": _fmt(table.mse_w[w]),
                })
            writer.writerow({
                "method": method,
                "window": "mean",
                "bias2": _fmt(table.bias2),
                "variance": _fmt(table.variance),
                "mse": _fmt(table.mse),
            })


def export_qpca_windows_csv(bundle: ResultBundle, filepath: Path) -> None:
    """Per-window QPCA records: effective rank, leading fraction, projected residual."""
    fieldnames = [
        "trial", "window", "k_w", "effective_kappa",
        "leading_fraction", "projected_residual_norm",
    ]
    handle, writer = _open_csv(filepath, fieldnames)
    with handle:
        for result in _ordered_trials(bundle):
            for info in result.run.window_info:
                writer.writerow({
                    "trial": result.trial,
                    "window": info.window,
                    "k_w": info.k_w,
                    "effective_kappa": info.effective_kappa,
                    "leading_fraction": _fmt(info.leading_fraction),
                    "projected_residual_norm": _fmt(info.projected_residual_norm),
                })


def export_hashes(bundle: ResultBundle, filepath: Path) -> None:
    """SHA-256 of the truth and observation record per trial, plus each run's digest."""
    lines = []
    for trial, (truth_digest, obs_digest) in sorted(bundle.hashes.items()):
        lines.append(f"trial={trial} truth={truth_digest} observations={obs_digest}")
        for result in _ordered_trials(bundle):
            if result.trial == trial:
                lines.append(
                    f"trial={trial} method={result.method} "
                    f"observations={result.run.observation_digest}"
                )
    filepath.write_text("\n".join(lines) + "\n", encoding="utf-8")


def export_all(bundle: ResultBundle, out_dir: str | Path) -> list[Path]:
    """Write every output file under out_dir and return their paths."""
    directory = Path(out_dir)
    directory.mkdir(parents=True, exist_ok=True)
    writers = [
        ("series.csv", export_series_csv),
        ("summary.csv", export_summary_csv),
        ("ranks.csv", export_ranks_csv),
        ("biasvar.csv", export_biasvar_csv),
        ("qpca_windows.csv", export_qpca_windows_csv),
        ("truth_obs_hash.txt", export_hashes),
    ]
    paths = []
    for name, writer in writers:
        path = directory / name
        writer(bundle, path)
        paths.append(path)
    print(f"  Results saved to: {directory}")
    return paths
