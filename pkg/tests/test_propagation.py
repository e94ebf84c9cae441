import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from hetcov.exceptions import DegenerateSigma
from hetcov.model import Tier, TierParams
from hetcov.propagation import (
    draw_received_power,
    power_cdf_given_r,
    power_mixture,
    power_pdf_given_r,
    prob_los,
    prob_nlos,
)


@pytest.fixture(scope="module")
def tier(macro_tier):
    return Tier(macro_tier, 0.008)


class TestBlockage:
    @given(st.floats(0, 1e5), st.floats(0, 1.0))
    def test_probabilities_sum_to_one(self, r, kappa):
        assert prob_los(r, kappa) + prob_nlos(r, kappa) == 1.0
        assert 0.0 <= prob_los(r, kappa) <= 1.0

    def test_values(self):
        assert prob_los(100.0, 0.01) == pytest.approx(math.exp(-1))
        assert prob_los(0.0, math.inf) == 1.0
        assert prob_nlos(50.0, 0.0) == 0.0


class TestPowerLaw:
    def test_pdf_integrates_to_cdf(self, tier):
        r = 250.0
        hi = 1e-6
        lo = 1e-20
        mass, _ = integrate.quad(lambda u: power_pdf_given_r(math.exp(u), r, tier) * math.exp(u),
                                 math.log(lo), math.log(hi), limit=400)
        assert mass == pytest.approx(power_cdf_given_r(hi, r, tier) - power_cdf_given_r(lo, r, tier), abs=1e-9)

    def test_mixture_weights(self, tier):
        mix = power_mixture(tier, np.array([10.0, 1000.0]))
        assert mix.weight[:, 1] == pytest.approx(np.exp(-0.008 * np.array([10.0, 1000.0])))
        assert np.allclose(mix.weight.sum(axis=-1), 1.0)

    def test_zero_sigma_is_an_atom(self):
        tier = Tier(TierParams(1e-5, 30, 10, 20, 4.0, 2.5), 0.0)
        atom = math.exp(tier.mu_s(100.0)[1])
        assert power_cdf_given_r(atom * 0.999, 100.0, tier) == 0.0
        assert power_cdf_given_r(atom, 100.0, tier) == 1.0
        with pytest.raises(DegenerateSigma):
            power_pdf_given_r(atom, 100.0, tier)

    @given(st.floats(1.0, 5000.0), st.lists(st.floats(-300, 0), min_size=2, max_size=10))
    def test_cdf_monotone(self, r, log10_powers):
        tier = Tier(TierParams(3e-6, 47, 2.7, 30.8, 4.28, 2.42, 8, 4), 0.008)
        x = 10.0 ** np.sort(np.asarray(log10_powers))
        cdf = power_cdf_given_r(x, r, tier)
        assert np.all(np.diff(cdf) >= 0)
        assert np.all((cdf >= 0) & (cdf <= 1))

    def test_draws_follow_blockage(self, tier):
        rng = np.random.default_rng(1)
        _, draw = draw_received_power(tier, np.full(200_000, 100.0), rng)
        assert draw.is_nlos.mean() == pytest.approx(1 - math.exp(-0.8), abs=0.005)

    def test_all_nlos_draws(self, tier):
        _, draw = draw_received_power(tier, np.full(100, 10.0), np.random.default_rng(0), all_nlos=True)
        assert draw.is_nlos.all()
