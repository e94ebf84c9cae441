"""Poisson point process sampling and ordered nearest-neighbor distances.

A homogeneous planar PPP of intensity ``lam`` seen from the origin has
ordered distances ``r_1 <= r_2 <= ...`` with ``pi*lam*r_i^2`` equal to the
arrival times of a unit-rate one-dimensional Poisson process. Both the
direct disk sampler and this arrival-time sampler are provided; the Monte
Carlo engine uses the latter to avoid sorting large windows.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammainccinv

from .exceptions import InsufficientPoints


@dataclass(frozen=True)
class CandidateSet:
    tier_index: int
    distances: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.distances, dtype=float)
        if d.ndim != 1 or d.size == 0:
            raise ValueError("distances must be a nonempty 1-D array")
        if np.any(d <= 0) or np.any(np.diff(d) < 0):
            raise ValueError("distances must be positive and ascending")
        object.__setattr__(self, "distances", d)

    @property
    def n(self) -> int:
        return self.distances.size

    @property
    def far_boundary(self) -> float:
        return float(self.distances[-1])


@dataclass(frozen=True)
class Realization:
    """BS positions of one tier in polar coordinates inside the window."""

    radius: np.ndarray
    angle: np.ndarray
    window_radius: float
    tier_index: int = 0

    @property
    def count(self) -> int:
        return self.radius.size


def _check_positive(name, value):
    if not (math.isfinite(value) and value > 0):
        raise ValueError(f"{name} must be finite and > 0, got {value!r}")


def sample_ppp(density: float, window_radius: float, rng: np.random.Generator, tier_index: int = 0) -> Realization:
    """Draw one tier of BSs on the disk of radius ``window_radius``."""
    _check_positive("density", density)
    _check_positive("window_radius", window_radius)
    count = rng.poisson(density * math.pi * window_radius**2)
    radius = window_radius * np.sqrt(rng.random(count))
    # r == 0 has probability zero but would break the path-loss law
    while np.any(radius == 0.0):
        bad = radius == 0.0
        radius[bad] = window_radius * np.sqrt(rng.random(int(bad.sum())))
    angle = rng.uniform(0.0, 2.0 * math.pi, count)
    return Realization(radius, angle, float(window_radius), tier_index)


def nearest_n(real: Realization, n: int) -> CandidateSet:
    if real.count < n:
        raise InsufficientPoints(
            f"window of radius {real.window_radius} holds {real.count} points, need {n}"
        )
    return CandidateSet(real.tier_index, np.sort(real.radius)[:n])


def joint_distance_pdf(distances, density: float) -> float:
    """Joint density of the ``n`` nearest distances of a PPP.

    ``(2 pi lam)^n r_1 ... r_n exp(-pi lam r_n^2)`` on the ordered cone and
    zero elsewhere.
    """
    r = np.asarray(distances, dtype=float)
    if np.any(r < 0) or np.any(np.diff(r) < 0):
        return 0.0
    n = r.size
    log_val = n * math.log(2.0 * math.pi * density) + np.sum(np.log(r)) - math.pi * density * r[-1] ** 2
    return float(np.exp(log_val))


def sample_joint_distances(density: float, n: int, rng: np.random.Generator, size=None, tier_index: int = 0):
    """Exact draw of the ``n`` nearest distances.

    With ``size=None`` returns a :class:`CandidateSet`; otherwise an array of
    shape ``(size, n)``, each row ascending.
    """
    _check_positive("density", density)
    if n < 1:
        raise ValueError("n must be >= 1")
    shape = (1 if size is None else int(size), n)
    arrivals = np.cumsum(rng.standard_exponential(shape), axis=1)
    r = np.sqrt(arrivals / (math.pi * density))
    if size is None:
        return CandidateSet(tier_index, r[0])
    return r


def window_for_count(density: float, n: int, tail: float = 1e-9) -> float:
    """Smallest radius whose disk holds fewer than ``n`` points with probability below ``tail``."""
    # P(N(R) < n) = P(Gamma(n) > pi lam R^2)
    area = gammainccinv(n, tail)
    return math.sqrt(area / (math.pi * density))


def dump_realizations_csv(path, realizations) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["radius", "angle", "tier"])
        for real in realizations:
            for r, a in zip(real.radius, real.angle):
                w.writerow([repr(float(r)), repr(float(a)), real.tier_index])
