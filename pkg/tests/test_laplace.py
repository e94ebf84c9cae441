import numpy as np
import pytest
from scipy import special

from hetcov.exceptions import InversionUnstable
from hetcov.laplace import KNOWN_PAIRS, check_density, euler_rule, invert, invert_cdf, self_test, talbot_rule


class TestRules:
    def test_sizes(self):
        assert euler_rule(14).size == 29
        assert talbot_rule(32).size == 32

    def test_unknown_method(self):
        with pytest.raises(ValueError):
            invert(lambda s: 1 / (s + 1), [1.0], "nope")


class TestSelfTest:
    @pytest.mark.parametrize("method,nodes", [("euler", 14), ("talbot", 32)])
    def test_known_pairs(self, method, nodes):
        errors = self_test(method, nodes)
        assert errors["exponential"] < 1e-8 and errors["gamma2"] < 1e-8

    def test_point_mass_cdf(self):
        assert self_test("euler", 14)["point_mass_cdf"] < 1e-3

    def test_pairs_registered(self):
        assert {"exponential", "gamma2"} <= set(KNOWN_PAIRS)


class TestInversion:
    @pytest.mark.parametrize("method", ["euler", "talbot"])
    def test_gamma_cdf(self, method):
        # Gamma(3, 1): transform (1 + s)^-3
        x = np.linspace(0.1, 12, 40)
        approx = invert_cdf(lambda s: (1 + s) ** -3.0, x, method)
        assert np.max(np.abs(approx - special.gammainc(3, x))) < 1e-8

    def test_initial_value(self):
        assert invert(lambda s: 1 / (s + 1), [0.0])[0] == pytest.approx(1.0, abs=1e-9)

    def test_rejects_negative_points(self):
        with pytest.raises(ValueError):
            invert(lambda s: 1 / s, [-1.0])

    def test_check_density(self):
        check_density(np.array([0.0, 1.0, 0.5]))
        with pytest.raises(InversionUnstable):
            check_density(np.array([1.0, -0.1]))
