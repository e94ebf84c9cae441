import math
from dataclasses import replace

import numpy as np
import pytest

from hetcov.cli import shipped_config
from hetcov.config import load_config
from hetcov.model import MCControls, NetworkConfig, QuadControls, TierParams


def pytest_configure(config):
    config._acceptance_lines = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)


@pytest.fixture
def report(request):
    """Record one PASS/FAIL line for an acceptance criterion."""

    def _report(number, ok, detail):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}"
        print(line, flush=True)
        request.config._acceptance_lines.append(line)
        return ok

    return _report


@pytest.fixture(scope="session")
def fig2_config():
    config, _ = load_config(shipped_config("fig2"))
    return config


@pytest.fixture(scope="session")
def macro_tier():
    """Tier-1 parameters of the shipped scenario (BS/m^2)."""
    return TierParams(
        density=3e-6, tx_power_dbm=47.0, intercept_nlos_db=2.7, intercept_los_db=30.8,
        exponent_nlos=4.28, exponent_los=2.42, shadow_sigma_nlos_db=8.0, shadow_sigma_los_db=4.0,
    )


@pytest.fixture(scope="session")
def small_tier():
    """Tier-2 parameters of the shipped scenario (BS/m^2)."""
    return TierParams(
        density=2e-5, tx_power_dbm=33.0, intercept_nlos_db=32.9, intercept_los_db=41.4,
        exponent_nlos=3.75, exponent_los=2.09, shadow_sigma_nlos_db=8.0, shadow_sigma_los_db=4.0,
    )


@pytest.fixture(scope="session")
def one_tier(macro_tier):
    """1-tier, n = 2 network with light controls for unit tests."""
    return NetworkConfig(
        (macro_tier,), 0.008, 2,
        MCControls(realizations=2000, window_rel_tol=1e-3),
        QuadControls(distance_samples=200),
    )


def median_distance(density, m):
    """Median of the m-th nearest distance of a PPP (pi lam r^2 is Gamma(m))."""
    from scipy.stats import gamma

    return math.sqrt(gamma(m).median() / (math.pi * density))


SMALL_CFG = """
[network]
schema_version = 1
density_unit = per_km2
blockage_kappa = 0.008
n_candidates = 2

[tier.1]
density = 3
tx_power_dbm = 47
intercept_nlos_db = 2.7
intercept_los_db = 30.8
exponent_nlos = 4.28
exponent_los = 2.42
shadow_sigma_nlos_db = 8
shadow_sigma_los_db = 4

[montecarlo]
realizations = 2000
window_rel_tol = 1e-3

[quadrature]
distance_samples = 100

[run]
mode = both
sweep = gamma:-10,0,10
"""


@pytest.fixture
def small_cfg_path(tmp_path):
    path = tmp_path / "small.cfg"
    path.write_text(SMALL_CFG)
    return path
