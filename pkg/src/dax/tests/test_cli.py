"""
Tests for the dax command-line interface.

Verifies:
  1. `version` prints the package version.
  2. Usage errors exit with status 2 and library errors with status 1.
  3. `check-theory` prints a verdict and exits 1 only on failure.
  4. `run` writes the result files under --out.
"""

import pytest

from src.dax import __version__
from src.dax.cli import main


class TestVersion:

    def test_prints_version(self, capsys) -> None:
        main(["version"])
        assert capsys.readouterr().out.strip() == f"dax {__version__}"


class TestUsageErrors:

    def test_unknown_subcommand(self) -> None:
        with pytest.raises(SystemExit) as excinfo:
            main(["assimilate"])
        assert excinfo.value.code == 2

    def test_unknown_check(self) -> None:
        with pytest.raises(SystemExit) as excinfo:
            main(["check-theory", "no-such-check"])
        assert excinfo.value.code == 2

    def test_missing_config_file(self, tmp_path, capsys) -> None:
        with pytest.raises(SystemExit) as excinfo:
            main(["run", "--config", str(tmp_path / "absent.env")])
        assert excinfo.value.code == 1
        assert "Error:" in capsys.readouterr().err

    def test_invalid_config_value(self, tmp_path, capsys) -> None:
        path = tmp_path / "bad.env"
        path.write_text("kappa=50\n", encoding="utf-8")
        with pytest.raises(SystemExit) as excinfo:
            main(["run", "--config", str(path)])
        assert excinfo.value.code == 1
        assert "kappa" in capsys.readouterr().err


class TestCheckTheory:

    def test_passing_check(self, capsys) -> None:
        main(["check-theory", "wishart", "--reps", "10000"])
        assert "check-theory wishart: PASS" in capsys.readouterr().out

    def test_bad_parameters_exit_1(self, capsys) -> None:
        with pytest.raises(SystemExit) as excinfo:
            main(["check-theory", "wishart", "--reps", "10"])
        assert excinfo.value.code == 1


class TestRun:

    def test_writes_results(self, tmp_path, capsys, monkeypatch) -> None:
        for name in ("DAX_N", "DAX_W", "DAX_L"):
            monkeypatch.delenv(name, raising=False)
        config_path = tmp_path / "small.env"
        config_path.write_text("n=8\nm=4\nN=5\nL=1\nW=2\nspinup_time=2.0\n", encoding="utf-8")
        out_dir = tmp_path / "results"

        main([
            "run", "--config", str(config_path), "--method", "qpca-endcf",
            "--trials", "2", "--seed", "7", "--out", str(out_dir),
        ])

        out = capsys.readouterr().out
        assert "QPCA-EnDCF" in out
        assert "Results saved to" in out
        for name in ("series.csv", "summary.csv", "ranks.csv", "biasvar.csv", "truth_obs_hash.txt"):
            assert (out_dir / name).is_file()
