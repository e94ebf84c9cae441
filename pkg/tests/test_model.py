import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hetcov.exceptions import ConfigError
from hetcov.model import (
    BETA,
    MCControls,
    NetworkConfig,
    QuadControls,
    SweepSpec,
    Tier,
    TierParams,
    db_to_linear,
    dbm_to_watts,
    derive_linear,
    linear_to_db,
    watts_to_dbm,
)


class TestUnits:
    def test_reference_points(self):
        assert dbm_to_watts(30.0) == pytest.approx(1.0)
        assert dbm_to_watts(0.0) == pytest.approx(1e-3)
        assert db_to_linear(10.0) == pytest.approx(10.0)
        assert linear_to_db(0.0) == -math.inf

    def test_beta(self):
        assert BETA == pytest.approx(-math.log(10) / 10)

    @given(st.floats(-200, 200))
    def test_dbm_round_trip(self, p):
        assert watts_to_dbm(dbm_to_watts(p)) == pytest.approx(p, abs=1e-9)

    @given(st.floats(-100, 100))
    def test_db_round_trip(self, x):
        assert linear_to_db(db_to_linear(x)) == pytest.approx(x, abs=1e-9)


class TestTierParams:
    def test_derived_constants(self, macro_tier):
        lin = derive_linear(macro_tier)
        assert lin.b_nlos == pytest.approx(10 ** 1.7 * 10 ** (-0.27))
        assert lin.b_los == pytest.approx(10 ** 1.7 * 10 ** (-3.08))
        assert lin.sigma_s_nlos == pytest.approx(8 * math.log(10) / 10)

    def test_rejects_bad_values(self, macro_tier):
        with pytest.raises(ConfigError) as exc:
            TierParams(-1.0, 47, 2.7, 30.8, -4.0, 2.4, -1.0)
        assert len(exc.value.problems) == 3

    def test_warns_when_nlos_decays_slower(self):
        with pytest.warns(UserWarning):
            TierParams(1e-5, 30, 10, 10, 2.5, 3.0)

    def test_with_density(self, macro_tier):
        assert macro_tier.with_density(1e-4).density == 1e-4

    def test_tier_log_means(self, macro_tier):
        tier = Tier(macro_tier, 0.01)
        mu_n, mu_l = tier.mu_s(100.0)
        assert mu_n == pytest.approx(math.log(tier.lin.b_nlos) - 4.28 * math.log(100))
        assert mu_l == pytest.approx(math.log(tier.lin.b_los) - 2.42 * math.log(100))

    def test_negative_kappa(self, macro_tier):
        with pytest.raises(ConfigError):
            Tier(macro_tier, -0.1)


class TestNetworkConfig:
    def test_kappa_overrides(self, macro_tier, small_tier):
        cfg = NetworkConfig((macro_tier, small_tier), 0.01, 2, kappa_overrides=(None, 0.05))
        assert cfg.tier(0).kappa == 0.01
        assert cfg.tier(1).kappa == 0.05
        assert cfg.K == 2

    def test_collects_problems(self, macro_tier):
        with pytest.raises(ConfigError) as exc:
            NetworkConfig((macro_tier,), -1.0, 0, MCControls(realizations=0), QuadControls(inversion_method="x"))
        assert len(exc.value.problems) == 4

    def test_with_tier_density(self, one_tier):
        assert one_tier.with_tier_density(0, 5e-6).tiers[0].density == 5e-6


class TestSweepSpec:
    def test_requires_increasing(self):
        with pytest.raises(ConfigError):
            SweepSpec((0.0, 0.0))
        with pytest.raises(ConfigError):
            SweepSpec(())
        assert SweepSpec((-math.inf, 0, 5)).thresholds_db[0] == -math.inf
