"""Coverage probability of K-tier heterogeneous networks with LOS/NLOS links.

Two engines share one configuration model: a semi-analytic pipeline built on
numerical Laplace inversion (:mod:`hetcov.analytic`) and a Monte Carlo
simulator (:mod:`hetcov.montecarlo`).
"""
from importlib.metadata import PackageNotFoundError, version

from .analytic import AnalyticCoverage, network_coverage, per_tier_coverage
from .config import load_config, validate_config
from .model import MCControls, NetworkConfig, QuadControls, SweepSpec, TierParams
from .montecarlo import MonteCarloCoverage, estimate_coverage

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.0.0"

__all__ = [
    "AnalyticCoverage",
    "MCControls",
    "MonteCarloCoverage",
    "NetworkConfig",
    "QuadControls",
    "SweepSpec",
    "TierParams",
    "estimate_coverage",
    "load_config",
    "network_coverage",
    "per_tier_coverage",
    "validate_config",
]
