"""
Tests for seeded experiment orchestration.

Verifies:
  1. Substreams are reproducible and independent of each other.
  2. Shared-truth trials consume one truth/observation record for every method.
  3. run_experiment aggregates rank histograms, summaries and bias-variance tables.
  4. Re-running a seed exports byte-identical files.
  5. The baseline configuration reproduces the headline ordering: QPCA-EnDCF
     has the higher spread-skill ratio, the flatter rank histogram and the
     lower across-trial variance.
  6. check_theory dispatches by name and applies overrides.
"""

import numpy as np
import pytest

from src.dax.errors import InvalidInputError
from src.dax.harness import (
    check_theory,
    derive_rng,
    generate_truth_and_observations,
    run_experiment,
    run_trial_method,
)
from src.dax.report import export_all
from src.dax.settings import ExperimentConfig


@pytest.fixture
def small_cfg(tmp_path) -> ExperimentConfig:
    cfg = ExperimentConfig(
        n=8, m=4, N=5, L=2, W=3, n_trials=2, spinup_time=2.0, output_dir=str(tmp_path),
    )
    cfg.validate()
    return cfg


class TestSeeding:

    def test_same_triple_same_stream(self) -> None:
        a = derive_rng(42, 1, "init_ensemble").standard_normal(5)
        b = derive_rng(42, 1, "init_ensemble").standard_normal(5)
        np.testing.assert_array_equal(a, b)

    def test_streams_differ(self) -> None:
        a = derive_rng(42, 1, "init_ensemble").standard_normal(5)
        assert not np.array_equal(a, derive_rng(42, 1, "perturb_seq").standard_normal(5))
        assert not np.array_equal(a, derive_rng(42, 2, "init_ensemble").standard_normal(5))
        assert not np.array_equal(a, derive_rng(43, 1, "init_ensemble").standard_normal(5))

    def test_shared_truth_is_trial_independent(self, small_cfg) -> None:
        truth0, obs0 = generate_truth_and_observations(small_cfg, 0)
        truth1, obs1 = generate_truth_and_observations(small_cfg, 1)
        assert truth0.shape == (small_cfg.K + 1, small_cfg.n)
        assert obs0.shape == (small_cfg.K, small_cfg.m)
        np.testing.assert_array_equal(truth0, truth1)
        np.testing.assert_array_equal(obs0, obs1)

    def test_independent_truths_differ(self, small_cfg) -> None:
        small_cfg.share_truth = False
        truth0, _ = generate_truth_and_observations(small_cfg, 0)
        truth1, _ = generate_truth_and_observations(small_cfg, 1)
        assert not np.array_equal(truth0, truth1)


class TestTrialMethod:

    def test_trial_result(self, small_cfg) -> None:
        truth, observations = generate_truth_and_observations(small_cfg, 0)
        result = run_trial_method(small_cfg, "seq_enkf", 0, truth, observations)
        assert not result.run.diverged
        assert result.series is not None
        assert result.series.sigma_w.size == small_cfg.W
        assert result.rank_counts.sum() == small_cfg.n * small_cfg.K

    def test_single_window_has_no_series(self, small_cfg) -> None:
        small_cfg.W = 1
        truth, observations = generate_truth_and_observations(small_cfg, 0)
        result = run_trial_method(small_cfg, "qpca_endcf", 0, truth, observations)
        assert result.series is None
        assert result.rank_counts.sum() == small_cfg.n


class TestRunExperiment:

    def test_aggregates(self, small_cfg) -> None:
        seen = []
        bundle = run_experiment(small_cfg, on_result=lambda i, total, r: seen.append((i, total)))
        assert len(bundle.trials) == 6
        assert seen[-1] == (6, 6)
        assert set(bundle.summaries) == {"seq_enkf", "fourd_enkf", "qpca_endcf"}
        assert bundle.summaries["qpca_endcf"].n_trials == 2

        windows_total = small_cfg.n * small_cfg.W * small_cfg.n_trials
        assert bundle.rank_histograms["seq_enkf"].total == small_cfg.L * windows_total
        assert bundle.rank_histograms["fourd_enkf"].total == windows_total
        assert bundle.rank_histograms["seq_enkf"].counts.size == small_cfg.N + 1

        table = bundle.bias_variance["fourd_enkf"]
        np.testing.assert_allclose(table.bias2_w + table.var_w, table.mse_w, rtol=1e-10)

    def test_methods_share_observations(self, small_cfg) -> None:
        bundle = run_experiment(small_cfg)
        digests = {t.run.observation_digest for t in bundle.trials}
        assert len(digests) == 1
        assert bundle.hashes[0] == bundle.hashes[1]
        assert bundle.hashes[0][1] in digests

    def test_qpca_trials_are_identical_apart_from_initial_ensemble(self, small_cfg) -> None:
        bundle = run_experiment(small_cfg)
        qpca = [t for t in bundle.trials if t.method == "qpca_endcf"]
        assert [info.window for info in qpca[0].run.window_info] == [1, 2, 3]
        assert not np.array_equal(qpca[0].run.endpoint_analyses[0], qpca[1].run.endpoint_analyses[0])

    def test_no_bias_variance_without_shared_truth(self, small_cfg) -> None:
        small_cfg.share_truth = False
        small_cfg.methods = ["qpca_endcf"]
        bundle = run_experiment(small_cfg)
        assert bundle.bias_variance == {}
        assert bundle.hashes[0] != bundle.hashes[1]

    def test_single_trial_skips_bias_variance(self, small_cfg) -> None:
        small_cfg.n_trials = 1
        small_cfg.methods = ["fourd_enkf"]
        bundle = run_experiment(small_cfg)
        assert bundle.bias_variance == {}
        assert bundle.summaries["fourd_enkf"].rmse_std == 0.0

    def test_rerun_exports_identical_bytes(self, small_cfg, tmp_path) -> None:
        first = export_all(run_experiment(small_cfg), tmp_path / "first")
        second = export_all(run_experiment(small_cfg), tmp_path / "second")
        for a, b in zip(first, second):
            assert a.name == b.name
            assert a.read_bytes() == b.read_bytes()


class TestBaselineExperiment:
    """Default configuration, seed 42: QPCA-EnDCF against both EnKF variants."""

    @pytest.fixture(scope="class")
    def bundle(self, tmp_path_factory):
        cfg = ExperimentConfig(seed=42, output_dir=str(tmp_path_factory.mktemp("baseline")))
        cfg.validate()
        return run_experiment(cfg)

    @pytest.mark.parametrize("enkf", ["seq_enkf", "fourd_enkf"])
    def test_spread_skill_ratio_is_higher(self, bundle, enkf) -> None:
        summaries = bundle.summaries
        assert summaries["qpca_endcf"].gamma_bar_mean > summaries[enkf].gamma_bar_mean

    @pytest.mark.parametrize("enkf", ["seq_enkf", "fourd_enkf"])
    def test_rank_histogram_is_flatter(self, bundle, enkf) -> None:
        qpca = bundle.rank_histograms["qpca_endcf"]
        other = bundle.rank_histograms[enkf]
        assert qpca.flatness < other.flatness
        assert qpca.chi2 < other.chi2

    @pytest.mark.parametrize("enkf", ["seq_enkf", "fourd_enkf"])
    def test_variance_is_lower(self, bundle, enkf) -> None:
        assert bundle.bias_variance["qpca_endcf"].variance < bundle.bias_variance[enkf].variance

    def test_no_trial_diverged(self, bundle) -> None:
        assert all(not t.run.diverged for t in bundle.trials)
        assert bundle.summaries["qpca_endcf"].n_trials == 5


class TestCheckTheory:

    def test_truncation_bias_defaults(self) -> None:
        report = check_theory("truncation-bias")
        assert report.passed
        assert report.metrics["discarded_tail"] > 0

    def test_overrides_are_applied(self) -> None:
        report = check_theory("wishart", reps=10_000, seed=7)
        assert report.name == "wishart"
        assert report.passed, report.message

    def test_none_overrides_keep_defaults(self) -> None:
        first = check_theory("windowed-noise", d=None, seed=3)
        second = check_theory("windowed-noise", seed=3)
        assert first.metrics == second.metrics

    def test_unknown_check(self) -> None:
        with pytest.raises(InvalidInputError):
            check_theory("wishart-2")
