import math
import warnings

import pytest

from conftest import SMALL_CFG
from hetcov.cli import shipped_config
from hetcov.config import load_config, parse_gamma_list, parse_sweep, validate_config
from hetcov.exceptions import ConfigError


def write(tmp_path, text, name="c.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return path


class TestParsing:
    def test_range_is_inclusive(self):
        assert parse_gamma_list("-20:40:2")[-1] == 40.0
        assert len(parse_gamma_list("-20:40:2")) == 31
        assert parse_gamma_list("1, 2,3") == (1.0, 2.0, 3.0)

    def test_bad_range(self):
        with pytest.raises(ValueError):
            parse_gamma_list("1:2")
        with pytest.raises(ValueError):
            parse_gamma_list("1:2:0")

    def test_density_sweep_units(self):
        sweep = parse_sweep("density:2:20,40", 2, 1e-6, "5")
        assert sweep.tier == 1
        assert sweep.densities == pytest.approx((2e-5, 4e-5))
        assert sweep.thresholds.thresholds_db == (5.0,)

    @pytest.mark.parametrize("text", ["gamma:", "density:3:1,2", "density:1:-1", "power:1"])
    def test_bad_sweeps(self, text):
        with pytest.raises(ConfigError):
            parse_sweep(text, 2, 1.0)


class TestLoad:
    def test_small_config(self):
        config, run = load_config(SMALL_CFG)
        assert config.K == 1 and config.n_candidates == 2
        assert config.tiers[0].density == pytest.approx(3e-6)
        assert run["mode"] == "both" and run["density_scale"] == 1e-6

    @pytest.mark.parametrize("name", ["fig2", "fig3"])
    def test_shipped_configs_validate(self, name):
        config, spec = validate_config(shipped_config(name))
        assert config.K == 2
        assert spec.mode in ("analytic", "montecarlo", "both")

    @pytest.mark.filterwarnings("ignore:.*exponent_nlos <= exponent_los")
    def test_problems_are_aggregated(self, tmp_path):
        text = SMALL_CFG.replace("schema_version = 1\n", "").replace("exponent_nlos = 4.28", "exponent_nlos = 1.9")
        with pytest.raises(ConfigError) as exc:
            validate_config(write(tmp_path, text), mode="analytic")
        joined = " ".join(exc.value.problems)
        assert "schema_version" in joined and "exponent_nlos" in joined

    def test_alpha_below_two_needs_window_in_simulation(self, tmp_path):
        text = SMALL_CFG.replace("exponent_nlos = 4.28", "exponent_nlos = 1.9").replace(
            "exponent_los = 2.42", "exponent_los = 1.8")
        with pytest.raises(ConfigError):
            validate_config(write(tmp_path, text), mode="montecarlo")
        ok = text.replace("window_rel_tol = 1e-3", "window_radius = 5000")
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            config, _ = validate_config(write(tmp_path, ok, "ok.cfg"), mode="montecarlo")
        assert config.mc.window_radius == 5000.0

    def test_unknown_keys_and_sections(self, tmp_path):
        text = SMALL_CFG + "\n[extra]\na = 1\n"
        text = text.replace("realizations = 2000", "realizations = 2000\nfoo = 1")
        with pytest.raises(ConfigError) as exc:
            load_config(text)
        assert len(exc.value.problems) == 2

    def test_tier_numbering(self):
        with pytest.raises(ConfigError):
            load_config(SMALL_CFG.replace("[tier.1]", "[tier.2]"))

    def test_kappa_override(self):
        config, _ = load_config(SMALL_CFG.replace("shadow_sigma_los_db = 4", "shadow_sigma_los_db = 4\nkappa = 0.02"))
        assert config.tier(0).kappa == 0.02

    def test_warns_when_los_decays_faster(self):
        with pytest.warns(UserWarning):
            load_config(SMALL_CFG.replace("exponent_los = 2.42", "exponent_los = 4.5"))

    def test_tensor_rule_limited_to_two(self):
        with pytest.raises(ConfigError):
            load_config(SMALL_CFG.replace("n_candidates = 2", "n_candidates = 3").replace(
                "distance_samples = 100", "distance_rule = tensor"))

    def test_empty_sweep(self, tmp_path):
        with pytest.raises(ConfigError):
            validate_config(write(tmp_path, SMALL_CFG), sweep="gamma:")

    def test_sweep_override(self, tmp_path):
        _, spec = validate_config(write(tmp_path, SMALL_CFG), sweep="gamma:0:4:2")
        assert spec.sweep.thresholds.thresholds_db == (0.0, 2.0, 4.0)
