"""
Tests for console and file reporting.

Verifies:
  1. export_all writes every output file with the documented headers.
  2. NaN values are written as empty fields.
  3. Console summaries and check reports print without error.
"""

import csv
import math

import numpy as np

from src.dax.models import (
    AssimilationRun,
    BiasVarianceTable,
    CheckReport,
    RankHistogram,
    ResultBundle,
    SummaryRow,
    TrialResult,
    WindowSeries,
)
from src.dax.report import (
    _fmt,
    export_all,
    print_check_report,
    print_console_summary,
)


def _bundle() -> ResultBundle:
    run = AssimilationRun(method="qpca_endcf", endpoint_times=[2, 4], observation_digest="ab")
    series = WindowSeries(
        sigma_w=np.array([1.0, 2.0]),
        rmse_w=np.array([0.0, 1.0]),
        gamma_w=np.array([math.nan, 2.0]),
        gamma_bar=2.0,
        rho=math.nan,
        spread=math.sqrt(2.5),
        rmse=math.sqrt(0.5),
        spread_mean_of_roots=1.5,
        rmse_mean_of_roots=0.5,
    )
    bundle = ResultBundle()
    bundle.trials.append(
        TrialResult(method="qpca_endcf", trial=0, run=run, series=series, rank_counts=np.array([1, 1]))
    )
    bundle.rank_histograms["qpca_endcf"] = RankHistogram(
        counts=np.array([1, 1]), total=2, chi2=0.0, flatness=0.0,
    )
    bundle.summaries["qpca_endcf"] = SummaryRow(
        method="qpca_endcf",
        spread_mean=1.5, spread_std=0.0, rmse_mean=0.7, rmse_std=0.0,
        gamma_bar_mean=2.0, gamma_bar_std=0.0, rho_mean=math.nan, rho_std=math.nan,
        n_trials=1, spread_mean_of_roots=1.5, rmse_mean_of_roots=0.5,
    )
    bundle.bias_variance["qpca_endcf"] = BiasVarianceTable(
        bias2_w=np.array([1.0, 0.0]), var_w=np.array([0.5, 0.5]), mse_w=np.array([1.5, 0.5]),
        bias2=0.5, variance=0.5, mse=1.0,
    )
    bundle.hashes[0] = ("truthhash", "ab")
    return bundle


def _read(path) -> list[dict[str, str]]:
    with path.open(newline="", encoding="utf-8") as handle:
        return list(csv.DictReader(handle))


class TestFormat:

    def test_nan_is_empty(self) -> None:
        assert _fmt(math.nan) == ""

    def test_full_precision(self) -> None:
        assert float(_fmt(0.1)) == 0.1


class TestExportAll:

    def test_files_and_headers(self, tmp_path) -> None:
        paths = export_all(_bundle(), tmp_path)
        names = [p.name for p in paths]
        assert names == [
            "series.csv", "summary.csv", "ranks.csv",
            "biasvar.csv", "qpca_windows.csv", "truth_obs_hash.txt",
        ]

        series = _read(tmp_path / "series.csv")
        assert [row["k_w"] for row in series] == ["2", "4"]
        assert series[0]["gamma_w"] == ""

        summary = _read(tmp_path / "summary.csv")
        assert summary[0]["method"] == "qpca_endcf"
        assert summary[0]["rho_mean"] == ""
        assert summary[0]["n_trials"] == "1"

        biasvar = _read(tmp_path / "biasvar.csv")
        assert [row["window"] for row in biasvar] == ["1", "2", "mean"]

        ranks = _read(tmp_path / "ranks.csv")
        assert [row["rank_bin"] for row in ranks] == ["1", "2"]

        hashes = (tmp_path / "truth_obs_hash.txt").read_text(encoding="utf-8")
        assert "trial=0 truth=truthhash observations=ab" in hashes
        assert "method=qpca_endcf observations=ab" in hashes


class TestConsole:

    def test_summary_prints_every_method(self, capsys) -> None:
        print_console_summary(_bundle())
        out = capsys.readouterr().out
        assert "QPCA-EnDCF" in out
        assert "Bias-variance" in out

    def test_check_report(self, capsys) -> None:
        print_check_report(CheckReport(name="wishart", passed=True, metrics={"rel_error": 0.01}))
        out = capsys.readouterr().out
        assert "check-theory wishart" in out
        assert "rel_error" in out
