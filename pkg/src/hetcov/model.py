"""Domain types, unit conversions and derived per-tier constants.

Everything downstream of this module works in SI linear units: watts,
meters, base stations per square meter. dB and dBm only appear at the
configuration and reporting boundary.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .exceptions import ConfigError

#: ``beta = -ln(10)/10`` converts a dB shadowing sample into a natural-log exponent.
BETA = -math.log(10.0) / 10.0


def dbm_to_watts(p):
    """Convert power in dBm to watts."""
    out = 10.0 ** ((np.asarray(p, dtype=float) - 30.0) / 10.0)
    return out if out.ndim else float(out)


def watts_to_dbm(w):
    out = 10.0 * np.log10(np.asarray(w, dtype=float)) + 30.0
    return out if out.ndim else float(out)


def db_to_linear(x_db):
    x = np.asarray(x_db, dtype=float)
    out = 10.0 ** (x / 10.0)
    return out if out.ndim else float(out)


def linear_to_db(x):
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore"):
        out = 10.0 * np.log10(x)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class TierParams:
    """Physical constants of one tier.

    ``density`` is in BS per square meter. Intercepts are in dB, powers in
    dBm, shadowing spreads in dB.
    """

    density: float
    tx_power_dbm: float
    intercept_nlos_db: float
    intercept_los_db: float
    exponent_nlos: float
    exponent_los: float
    shadow_sigma_nlos_db: float = 0.0
    shadow_sigma_los_db: float = 0.0

    def __post_init__(self):
        problems = self.problems()
        if problems:
            raise ConfigError(problems)
        if self.exponent_nlos <= self.exponent_los:
            warnings.warn(
                f"exponent_nlos={self.exponent_nlos} is not larger than "
                f"exponent_los={self.exponent_los}",
                stacklevel=3,
            )

    def problems(self) -> list[str]:
        out = []
        for name in (
            "density",
            "tx_power_dbm",
            "intercept_nlos_db",
            "intercept_los_db",
            "exponent_nlos",
            "exponent_los",
            "shadow_sigma_nlos_db",
            "shadow_sigma_los_db",
        ):
            if not math.isfinite(getattr(self, name)):
                out.append(f"{name} must be finite")
        if not self.density > 0:
            out.append("density must be > 0")
        if not self.exponent_nlos > 0:
            out.append("exponent_nlos must be > 0")
        if not self.exponent_los > 0:
            out.append("exponent_los must be > 0")
        if self.shadow_sigma_nlos_db < 0:
            out.append("shadow_sigma_nlos_db must be >= 0")
        if self.shadow_sigma_los_db < 0:
            out.append("shadow_sigma_los_db must be >= 0")
        return out

    def with_density(self, density: float) -> "TierParams":
        return replace(self, density=density)


@dataclass(frozen=True)
class DerivedLinearParams:
    b_nlos: float
    b_los: float
    beta: float
    sigma_s_nlos: float
    sigma_s_los: float


def derive_linear(t: TierParams) -> DerivedLinearParams:
    """Linear-scale constants of a tier: ``B = P_t * 10^(-A/10)`` and log-scale spreads."""
    pt = dbm_to_watts(t.tx_power_dbm)
    return DerivedLinearParams(
        b_nlos=pt * 10.0 ** (-t.intercept_nlos_db / 10.0),
        b_los=pt * 10.0 ** (-t.intercept_los_db / 10.0),
        beta=BETA,
        sigma_s_nlos=abs(BETA) * t.shadow_sigma_nlos_db,
        sigma_s_los=abs(BETA) * t.shadow_sigma_los_db,
    )


@dataclass(frozen=True)
class Tier:
    """A tier bundled with its derived constants and blockage rate.

    Most numerical routines take this rather than ``TierParams`` so the
    derived constants are computed once.
    """

    params: TierParams
    kappa: float
    lin: DerivedLinearParams = field(init=False)

    def __post_init__(self):
        if not (self.kappa >= 0):
            raise ConfigError([f"blockage kappa must be >= 0, got {self.kappa}"])
        object.__setattr__(self, "lin", derive_linear(self.params))

    @property
    def density(self) -> float:
        return self.params.density

    @property
    def alpha_n(self) -> float:
        return self.params.exponent_nlos

    @property
    def alpha_l(self) -> float:
        return self.params.exponent_los

    def mu_s(self, r):
        """Log-mean received power for NLOS and LOS at distance ``r``."""
        lr = np.log(r)
        return (
            math.log(self.lin.b_nlos) - self.alpha_n * lr,
            math.log(self.lin.b_los) - self.alpha_l * lr,
        )


@dataclass(frozen=True)
class MCControls:
    realizations: int = 100_000
    seed: int = 12345
    # None: sized automatically from the far-field interference bound
    window_radius: Optional[float] = None
    window_rel_tol: float = 1e-4
    farfield_all_nlos: bool = False
    chunk_size: int = 2000

    def problems(self) -> list[str]:
        out = []
        if not self.realizations >= 1:
            out.append("realizations must be >= 1")
        if self.window_radius is not None and not self.window_radius > 0:
            out.append("window_radius must be > 0")
        if not (0 < self.window_rel_tol < 1):
            out.append("window_rel_tol must lie in (0, 1)")
        if not self.chunk_size >= 1:
            out.append("chunk_size must be >= 1")
        return out


@dataclass(frozen=True)
class QuadControls:
    # uniform grid for the shadowing average in the far-field kernel
    shadow_nodes: int = 128
    inversion_method: str = "euler"
    euler_nodes: int = 14
    talbot_nodes: int = 32
    # Gauss-Hermite nodes per mixture component of the serving power
    power_nodes: int = 24
    # Gauss-Legendre nodes per mixture component of each truncated peer power
    near_nodes: int = 48
    tail_tol: float = 1e-10
    distance_samples: int = 2000
    distance_rule: str = "sampling"
    tensor_nodes: int = 24
    seed: int = 2024

    def problems(self) -> list[str]:
        out = []
        for name in ("shadow_nodes", "euler_nodes", "talbot_nodes", "power_nodes",
                     "near_nodes", "distance_samples", "tensor_nodes"):
            if not getattr(self, name) >= 1:
                out.append(f"quadrature {name} must be >= 1")
        if self.inversion_method not in ("euler", "talbot"):
            out.append("inversion_method must be 'euler' or 'talbot'")
        if self.distance_rule not in ("sampling", "tensor"):
            out.append("distance_rule must be 'sampling' or 'tensor'")
        if not (0 < self.tail_tol < 1):
            out.append("tail_tol must lie in (0, 1)")
        return out


@dataclass(frozen=True)
class NetworkConfig:
    tiers: tuple
    blockage_kappa: float
    n_candidates: int
    mc: MCControls = field(default_factory=MCControls)
    quad: QuadControls = field(default_factory=QuadControls)
    kappa_overrides: Optional[tuple] = None

    def __post_init__(self):
        object.__setattr__(self, "tiers", tuple(self.tiers))
        if self.kappa_overrides is not None:
            object.__setattr__(self, "kappa_overrides", tuple(self.kappa_overrides))
        problems = []
        if len(self.tiers) < 1:
            problems.append("at least one tier is required")
        if not (isinstance(self.n_candidates, (int, np.integer)) and self.n_candidates >= 1):
            problems.append("n_candidates must be an integer >= 1")
        if not (self.blockage_kappa >= 0):
            problems.append("blockage_kappa must be >= 0")
        if self.kappa_overrides is not None and len(self.kappa_overrides) != len(self.tiers):
            problems.append("kappa_overrides must have one entry per tier")
        problems += self.mc.problems() + self.quad.problems()
        if problems:
            raise ConfigError(problems)

    @property
    def K(self) -> int:
        return len(self.tiers)

    def kappa_for(self, k: int) -> float:
        if self.kappa_overrides is not None and self.kappa_overrides[k] is not None:
            return float(self.kappa_overrides[k])
        return float(self.blockage_kappa)

    def tier(self, k: int) -> Tier:
        return Tier(self.tiers[k], self.kappa_for(k))

    def with_tier_density(self, k: int, density: float) -> "NetworkConfig":
        tiers = list(self.tiers)
        tiers[k] = tiers[k].with_density(density)
        return replace(self, tiers=tuple(tiers))

    def subset(self, indices: Sequence[int]) -> "NetworkConfig":
        kov = None
        if self.kappa_overrides is not None:
            kov = tuple(self.kappa_overrides[i] for i in indices)
        return replace(self, tiers=tuple(self.tiers[i] for i in indices), kappa_overrides=kov)


@dataclass(frozen=True)
class SweepSpec:
    """SIR thresholds, stored in dB."""

    thresholds_db: tuple

    def __post_init__(self):
        th = tuple(float(x) for x in self.thresholds_db)
        object.__setattr__(self, "thresholds_db", th)
        if not th:
            raise ConfigError(["threshold sweep is empty"])
        if any(b <= a for a, b in zip(th, th[1:])):
            raise ConfigError(["thresholds must be strictly increasing in dB"])

    @property
    def linear(self) -> np.ndarray:
        return db_to_linear(np.array(self.thresholds_db))
