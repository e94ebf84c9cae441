"""Blockage, received-power draws and the per-link power distribution.

Given its distance ``r`` a link is NLOS with probability ``1 - exp(-kappa r)``
and its received power is lognormal with log-mean ``ln B - alpha ln r`` and
log-spread ``|beta| sigma``, using the NLOS or LOS constants accordingly.
The power law given ``r`` is therefore a two-component lognormal mixture.
All evaluations are done in log-power coordinates.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .exceptions import DegenerateSigma, ZeroMass
from .model import BETA, Tier

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def prob_los(r, kappa):
    r = np.asarray(r, dtype=float)
    with np.errstate(invalid="ignore"):
        p = np.exp(-kappa * r)
    # kappa = inf at r = 0 gives nan; zero distance is always LOS
    p = np.where(r == 0.0, 1.0, p)
    return p if p.ndim else float(p)


def prob_nlos(r, kappa):
    # 1 - p_L rather than -expm1 so that prob_nlos + prob_los == 1 exactly
    p = 1.0 - np.asarray(prob_los(r, kappa))
    return p if p.ndim else float(p)


@dataclass(frozen=True)
class LinkDraw:
    is_nlos: np.ndarray
    shadow_db: np.ndarray


@dataclass(frozen=True)
class PowerMixture:
    """Lognormal mixture of the received power at given distances.

    Arrays ``weight`` and ``mu`` have shape ``r.shape + (2,)`` with component
    0 = NLOS and 1 = LOS; ``sigma`` has shape ``(2,)``. A zero ``sigma`` is
    an atom at ``exp(mu)``.
    """

    weight: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray

    def cdf(self, x):
        """P(power <= x), broadcasting ``x`` against the distance shape."""
        lx = np.log(np.asarray(x, dtype=float))[..., None]
        return np.sum(self.weight * _component_cdf(lx, self.mu, self.sigma), axis=-1)

    def logpdf_terms(self, lx):
        """Per-component density of ``ln(power)`` at ``lx`` (no atoms allowed)."""
        self._require_continuous()
        z = (lx[..., None] - self.mu) / self.sigma
        return self.weight * _INV_SQRT_2PI / self.sigma * np.exp(-0.5 * z * z)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            lx = np.log(x)
        dens = np.sum(self.logpdf_terms(lx), axis=-1) / x
        return np.where(x > 0, dens, 0.0)

    def _require_continuous(self):
        if np.any((self.sigma == 0) & np.any(self.weight > 0, axis=tuple(range(self.weight.ndim - 1)))):
            raise DegenerateSigma("a power component has zero shadowing spread; no density exists")

    @property
    def is_continuous(self) -> bool:
        return bool(np.all(self.sigma > 0))


def _component_cdf(lx, mu, sigma):
    with np.errstate(divide="ignore", invalid="ignore"):
        z = (lx - mu) / sigma
    step = (lx >= mu).astype(float)
    return np.where(sigma > 0, ndtr(z), step)


def power_mixture(tier: Tier, r) -> PowerMixture:
    r = np.asarray(r, dtype=float)
    p_l = np.asarray(prob_los(r, tier.kappa))
    weight = np.stack([1.0 - p_l, p_l], axis=-1)
    mu_n, mu_l = tier.mu_s(r)
    mu = np.stack(np.broadcast_arrays(mu_n, mu_l), axis=-1)
    sigma = np.array([tier.lin.sigma_s_nlos, tier.lin.sigma_s_los])
    return PowerMixture(weight, mu, sigma)


def draw_received_power(tier: Tier, r, rng: np.random.Generator, all_nlos: bool = False):
    """Draw the received power from BSs at distances ``r``.

    Returns ``(power, LinkDraw)``; the shapes follow ``r``. With
    ``all_nlos`` every link is forced NLOS.
    """
    r = np.asarray(r, dtype=float)
    if all_nlos:
        is_nlos = np.ones(r.shape, dtype=bool)
    else:
        is_nlos = rng.random(r.shape) < np.asarray(prob_nlos(r, tier.kappa))
    p = tier.params
    sigma_db = np.where(is_nlos, p.shadow_sigma_nlos_db, p.shadow_sigma_los_db)
    shadow_db = rng.standard_normal(r.shape) * sigma_db
    log_b = np.where(is_nlos, math.log(tier.lin.b_nlos), math.log(tier.lin.b_los))
    alpha = np.where(is_nlos, tier.alpha_n, tier.alpha_l)
    power = np.exp(log_b - alpha * np.log(r) + BETA * shadow_db)
    return power, LinkDraw(is_nlos, shadow_db)


def power_cdf_given_r(x, r, tier: Tier):
    """Mixture CDF of the received power at distance ``r``.

    Zero shadowing spreads are handled as exact step functions.
    """
    out = power_mixture(tier, r).cdf(x)
    return out if np.ndim(out) else float(out)


def power_pdf_given_r(x, r, tier: Tier):
    out = power_mixture(tier, r).pdf(x)
    return out if np.ndim(out) else float(out)


def power_pdf_truncated(x, t, r, tier: Tier):
    """Density of the power conditioned on not exceeding ``t``."""
    mix = power_mixture(tier, r)
    mass = mix.cdf(t)
    if np.any(mass <= 0):
        raise ZeroMass(f"power CDF at truncation level {t!r} is zero")
    x = np.asarray(x, dtype=float)
    out = np.where(x <= t, mix.pdf(np.minimum(x, t)) / mass, 0.0)
    return out if out.ndim else float(out)
