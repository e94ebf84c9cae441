import subprocess
import sys

import pytest

from conftest import SMALL_CFG
from hetcov.cli import EXIT_IO, EXIT_OK, EXIT_VALIDATION, build_parser, main
from hetcov.io import read_csv, read_manifest


class TestRuns:
    def test_both_engines(self, small_cfg_path, tmp_path):
        out = tmp_path / "run"
        assert main(["--config", str(small_cfg_path), "--out", str(out), "--quiet"]) == EXIT_OK
        manifest = read_manifest(out / "manifest.txt")
        assert manifest["status"] == "ok"
        assert set(manifest["outputs"].split(",")) == {
            "montecarlo_tiers.csv", "montecarlo_network.csv", "assoc_histogram.csv",
            "analytic_tiers.csv", "analytic_network.csv", "comparison.csv",
        }
        rows = read_csv(out / "comparison.csv")
        assert [float(r["gamma_db"]) for r in rows] == [-10.0, 0.0, 10.0]
        for r in rows:
            assert abs(float(r["delta"])) < 0.06
        assert (out / "config.cfg").read_text() == SMALL_CFG

    def test_density_sweep_columns(self, small_cfg_path, tmp_path):
        out = tmp_path / "dens"
        code = main(["--config", str(small_cfg_path), "--out", str(out), "--mode", "montecarlo",
                     "--sweep", "density:1:2,4", "--gamma", "0,5", "--quiet"])
        assert code == EXIT_OK
        rows = read_csv(out / "montecarlo_network.csv")
        assert list(rows[0])[0] == "density_per_m2"
        assert len(rows) == 4

    def test_validate_only(self, small_cfg_path, capsys):
        assert main(["--config", str(small_cfg_path), "--validate-only"]) == EXIT_OK
        assert "ok" in capsys.readouterr().out

    def test_shipped_name(self):
        assert main(["--config", "fig3", "--validate-only", "--quiet"]) == EXIT_OK

    def test_entry_point_module(self, small_cfg_path):
        proc = subprocess.run([sys.executable, "-m", "hetcov", "--config", str(small_cfg_path), "--validate-only"],
                              capture_output=True, text=True)
        assert proc.returncode == 0


class TestFailures:
    def test_empty_sweep(self, small_cfg_path, tmp_path):
        out = tmp_path / "bad"
        assert main(["--config", str(small_cfg_path), "--out", str(out), "--sweep", "gamma:", "--quiet"]) == EXIT_VALIDATION
        record = read_manifest(out / "error.txt")
        assert record["status"] == "failed" and record["exit_code"] == "2"
        assert read_manifest(out / "manifest.txt")["status"] == "failed"

    @pytest.mark.filterwarnings("ignore:.*exponent_nlos <= exponent_los")
    def test_aggregated_validation_errors(self, tmp_path):
        cfg = tmp_path / "c.cfg"
        cfg.write_text(SMALL_CFG.replace("schema_version = 1\n", "").replace("exponent_nlos = 4.28", "exponent_nlos = 1.9"))
        out = tmp_path / "o"
        assert main(["--config", str(cfg), "--out", str(out), "--mode", "analytic", "--quiet"]) == EXIT_VALIDATION
        record = read_manifest(out / "error.txt")
        assert "problem_2" in record

    def test_unwritable_output(self, small_cfg_path, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        assert main(["--config", str(small_cfg_path), "--out", str(blocker / "sub"), "--quiet"]) == EXIT_IO

    def test_missing_config(self, tmp_path):
        assert main(["--config", str(tmp_path / "none.cfg"), "--out", str(tmp_path / "o"), "--quiet"]) == EXIT_IO

    def test_tampered_manifest_config(self, small_cfg_path, tmp_path):
        out = tmp_path / "a"
        main(["--config", str(small_cfg_path), "--out", str(out), "--mode", "montecarlo", "--quiet"])
        (out / "config.cfg").write_text(SMALL_CFG + "\n# edited\n")
        code = main(["--from-manifest", str(out / "manifest.txt"), "--out", str(tmp_path / "b"), "--quiet"])
        assert code == EXIT_VALIDATION

    def test_parser_rejects_unknown_mode(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args(["--mode", "fast"])
