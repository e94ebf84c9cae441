"""Semi-analytic coverage via Laplace transforms of the conditional interference.

For a candidate ``m`` of one tier, conditioned on the candidate distances and
on its received power ``P_m = t``, the probability that ``m`` is the strongest
candidate and its SIR exceeds ``gamma`` is

    P(all peers <= t, I_m <= t/gamma)

where ``I_m`` is the sum of the peers' powers and the far-field shot noise
beyond the last candidate. With ``x = t/gamma`` and ``tau = min(t, x)`` this
equals ``P(all peers <= tau, I_m <= x)``, because ``I_m <= x`` already caps every
peer at ``x``. That quantity is the CDF at ``x`` of a defective law whose
transform is

    prod_j E[exp(-s P_j); P_j <= tau] * L_far(s)

and is recovered by numerical Laplace inversion. The per-candidate terms are
then averaged over ``t`` (Gauss-Hermite in ``ln t`` per mixture component) and
over the candidate distances (sampling of the ordered-distance law, or a
tensor rule for ``n <= 2``), and summed over ``m``.

The far-field transform uses an all-NLOS Poisson field outside the last
candidate distance. Its shadowing average is evaluated along a rotated
contour, which removes the oscillation of complex arguments and doubles as
the analytic continuation needed by contours entering ``Re s < 0``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.special import ndtr, roots_genlaguerre, roots_hermite, roots_laguerre
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted, column_or_1d

from .exceptions import (
    ConfigError,
    InversionUnstable,
    QuadratureNotConverged,
    TailNotConverged,
    ZeroMass,
)
from .geometry import CandidateSet, sample_joint_distances
from .laplace import InversionRule, get_rule, self_test
from .model import NetworkConfig, QuadControls, Tier
from .propagation import power_cdf_given_r, power_mixture

log = logging.getLogger(__name__)

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)

# shadowing grid covers z in [-9, 9]; spacing at most 0.3/sigma in z
_SHADOW_SPAN = 9.0
_SHADOW_STEP = 0.3
# cap on the rotation amplification exp(theta^2 / 2 sigma^2); the weights
# cancel to one, so rounding grows like 1e-16 times this factor
_MAX_ROTATION_EXPONENT = 8.0
# truncated-power quadrature: lower cutoff sqrt(74) sigmas below the bulk
_LOWER_CUT2 = 74.0
_UPPER_CUT = 9.0
_NEWTON_STEPS = 6
# radial integrals beyond this many e-folds of distance are refused
_MAX_LOG_EXTENT = 700.0
# complex elements per vectorized block in the coverage engine
_BLOCK_ELEMENTS = 1_500_000
# tolerated inversion overshoot before InversionUnstable is raised
_INVERSION_SLACK = 1e-4
# densities are inverted with the peers capped at min(t, 2x)
_PDF_CAP_STRETCH = math.log(2.0)
# power-integral nodes below this weight are skipped
_MIN_NODE_WEIGHT = 1e-12


@lru_cache(maxsize=None)
def _gl01(n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


# ---------------------------------------------------------------------------
# shadowing average and far-field kernel


def shadow_node_count(sigma: float, nodes: int) -> int:
    """Grid size actually used for a log-spread ``sigma``."""
    return max(int(nodes), int(math.ceil(2.0 * _SHADOW_SPAN * sigma / _SHADOW_STEP)) + 1)


@lru_cache(maxsize=None)
def _shadow_grid(nodes: int):
    z = np.linspace(-_SHADOW_SPAN, _SHADOW_SPAN, nodes)
    w = np.exp(-0.5 * z * z)
    w[0] *= 0.5
    w[-1] *= 0.5
    return z, w / w.sum()


def _rotation(theta, sigma):
    lim = sigma * math.sqrt(2.0 * _MAX_ROTATION_EXPONENT)
    return np.clip(theta, -lim, lim)


def _shadow_nodes_for(c, sigma, nodes):
    """Per-argument weights and scaled node values for ``E g(c exp(sigma Z))``.

    The Gaussian variable is shifted by ``-i theta / sigma`` so that the
    product ``c exp(sigma Z)`` has argument ``theta - rotation`` (zero unless
    the rotation was capped). Returns complex weights ``W`` (summing to one)
    and arguments ``a`` of shape ``c.shape + (J,)``.
    """
    c = np.asarray(c, dtype=complex)
    if sigma == 0:
        return np.ones(c.shape + (1,), dtype=complex), c[..., None]
    z, w = _shadow_grid(shadow_node_count(sigma, nodes))
    theta = np.angle(c)
    rot = _rotation(theta, sigma)[..., None]
    weights = w * np.exp(rot * rot / (2.0 * sigma * sigma) + 1j * rot * z / sigma)
    weights /= weights.sum(axis=-1, keepdims=True)
    resid = np.abs(c) * np.exp(1j * (theta - rot[..., 0]))
    return weights, resid[..., None] * np.exp(sigma * z)


def shadow_laplace(c, sigma: float, nodes: int = 128):
    """``E[exp(-c exp(sigma Z))]`` for standard normal ``Z`` and complex ``c``.

    For ``Re c < 0`` this is the analytic continuation from the right half
    plane.
    """
    weights, a = _shadow_nodes_for(c, sigma, nodes)
    out = np.sum(weights * np.exp(-a), axis=-1)
    return out if out.ndim else complex(out)


def phi_kernel(v, s, tier: Tier, nodes: Optional[int] = None):
    """Shadowing-averaged NLOS Laplace factor ``E exp(-s B_N v^-alpha_N e^{beta xi})``.

    Equals 1 at ``s = 0`` and ``exp(-s B_N v^-alpha_N)`` without shadowing.
    """
    nodes = 128 if nodes is None else nodes
    v = np.asarray(v, dtype=float)
    if np.any(v <= 0):
        raise ValueError("v must be > 0")
    c = np.asarray(s, dtype=complex) * tier.lin.b_nlos * v ** (-tier.alpha_n)
    return shadow_laplace(c, tier.lin.sigma_s_nlos, nodes)


def radial_integral(a, alpha: float, tail_tol: float = 1e-10) -> np.ndarray:
    """``int_1^inf (1 - exp(-a w^-alpha)) w dw`` for real ``a >= 0``.

    Composite Gauss-Legendre in ``q = ln w``: 24 panels up to four units past
    the peak at ``ln(a)/alpha`` and 6 panels over the algebraic tail, cut where
    the bound ``a exp((2 - alpha) Q) / (alpha - 2)`` falls below ``tail_tol``
    relative to the integral.
    """
    if not alpha > 2:
        raise ConfigError([f"far-field integral needs exponent_nlos > 2, got {alpha}"])
    a = np.asarray(a, dtype=float)
    flat = a.ravel()
    out = np.zeros_like(flat)
    pos = np.flatnonzero(flat > 0)
    for start in range(0, pos.size, 8192):
        idx = pos[start:start + 8192]
        out[idx] = _radial_block(flat[idx], alpha, tail_tol)
    return out.reshape(a.shape)


def _radial_block(ap, alpha, tail_tol):
    peak = np.maximum(np.log(ap) / alpha, 0.0) + 4.0
    span = math.log(1.0 / tail_tol) / (alpha - 2.0)
    end = peak + span
    if np.any(end > _MAX_LOG_EXTENT):
        raise TailNotConverged(
            f"radial tail needs {float(end.max()):.0f} e-folds (exponent_nlos={alpha})"
        )
    x, w = _gl01(16)
    unit = (np.arange(24)[:, None] + x).ravel() / 24.0
    unit_w = np.tile(w, 24) / 24.0
    tail = (np.arange(6)[:, None] + x).ravel() / 6.0
    tail_w = np.tile(w, 6) / 6.0
    q = np.concatenate([peak[:, None] * unit, peak[:, None] + span * tail], axis=1)
    qw = np.concatenate([peak[:, None] * unit_w, span * np.broadcast_to(tail_w, (ap.size, tail_w.size))], axis=1)
    # (1 - e^-y) e^{2q} with y = a e^{-alpha q}, written as a e^{(2-alpha) q} (1 - e^-y)/y
    log_y = np.log(ap)[:, None] - alpha * q
    y = np.exp(np.minimum(log_y, 700.0))
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(log_y > -700.0, -np.expm1(-y) / y, 1.0)
    vals = np.exp(log_y + 2.0 * q) * ratio
    res = np.sum(vals * qw, axis=1)
    remainder = ap * np.exp((2.0 - alpha) * end) / (alpha - 2.0)
    if np.any(remainder > tail_tol * res):
        raise TailNotConverged("radial tail bound exceeds tolerance")
    return res


def _radial_integral_complex(a, alpha: float, tail_tol: float) -> np.ndarray:
    """Complex-argument radial integral (residual arguments after a capped rotation).

    Writes the integral as ``(a^d / alpha) H(a)`` with ``d = 2/alpha`` and
    ``H(a) = int_0^a (1 - e^-u) u^(-d-1) du``. For ``|a| <= 4`` the power
    series of ``H`` is summed; otherwise ``H`` is integrated along the real
    axis to ``X = max(Re a, 0) + 40``, then vertically (where ``e^-u`` is
    negligible) and horizontally back to ``a``.
    """
    a = np.asarray(a, dtype=complex)
    d = 2.0 / alpha
    h = np.zeros(a.shape, dtype=complex)
    small = np.abs(a) <= 4.0
    if np.any(small):
        u = a[small]
        term = np.ones(u.shape, dtype=complex)
        acc = np.zeros(u.shape, dtype=complex)
        for k in range(1, 60):
            term = term * (-u) / k
            acc -= term / (k - d)
        h[small] = acc * u ** (-d)
    large = ~small
    if np.any(large):
        u0 = a[large]
        if np.any((u0.real < 0) & (np.abs(u0.imag) < 4.0)):
            raise InversionUnstable("far-field argument too close to the negative real axis")
        big = np.maximum(u0.real, 0.0) + 40.0
        h_real = alpha * big ** (-d) * radial_integral(big, alpha, tail_tol)
        top = big + 1j * u0.imag
        h_vert = (top ** (-d) - big ** (-d)) / (-d)
        x, w = _gl01(16)
        panels = 8
        width = (big - u0.real) / panels
        h_horiz = np.zeros(u0.shape, dtype=complex)
        for p in range(panels):
            xr = u0.real[..., None] + width[..., None] * (p + x)
            u = xr + 1j * u0.imag[..., None]
            h_horiz += width * np.sum(w * (-np.expm1(-u)) * u ** (-d - 1.0), axis=-1)
        h[large] = h_real + h_vert - h_horiz
    return a ** d / alpha * h


def far_exponent(c, alpha: float, sigma: float, shadow_nodes: int = 128,
                 tail_tol: float = 1e-10, radial: Optional[Callable] = None):
    """``Psi(c) = int_1^inf [1 - E exp(-c w^-alpha e^{sigma Z})] w dw``.

    ``radial`` optionally replaces :func:`radial_integral` for real
    arguments (used by :class:`FarFieldTable`).
    """
    c = np.asarray(c, dtype=complex)
    weights, a = _shadow_nodes_for(c, sigma, shadow_nodes)
    real = np.abs(a.imag) <= 1e-12 * np.abs(a)
    vals = np.zeros(a.shape, dtype=complex)
    rad = radial if radial is not None else (lambda v: radial_integral(v, alpha, tail_tol))
    if np.any(real):
        vals[real] = rad(a.real[real])
    if np.any(~real):
        vals[~real] = _radial_integral_complex(a[~real], alpha, tail_tol)
    out = np.sum(weights * vals, axis=-1)
    return out if out.ndim else complex(out)


def lt_far_interference(s, r_n: float, tier: Tier, quad: Optional[QuadControls] = None):
    """Transform of the all-NLOS shot noise from BSs beyond ``r_n``.

    ``exp(-2 pi lam r_n^2 Psi(s B_N r_n^-alpha_N))``; the radial integral
    is cut by the tail bound and raises :class:`TailNotConverged` if it
    cannot be.
    """
    quad = quad or QuadControls()
    if not r_n > 0:
        raise ValueError("r_n must be > 0")
    c = np.asarray(s, dtype=complex) * tier.lin.b_nlos * r_n ** (-tier.alpha_n)
    psi = far_exponent(c, tier.alpha_n, tier.lin.sigma_s_nlos, quad.shadow_nodes, quad.tail_tol)
    out = np.exp(-2.0 * math.pi * tier.density * r_n**2 * psi)
    return out if np.ndim(out) else complex(out)


class _RadialSpline:
    """Cubic spline of ``ln I(a)`` over ``ln a`` with power-law extrapolation."""

    def __init__(self, alpha, tail_tol, lo, hi, step=0.02):
        self.alpha = alpha
        grid = np.arange(lo, hi + step, step)
        vals = np.log(radial_integral(np.exp(grid), alpha, tail_tol))
        self.lo, self.hi = grid[0], grid[-1]
        self.f_lo, self.f_hi = vals[0], vals[-1]
        self.spline = CubicSpline(grid, vals)

    def __call__(self, a):
        la = np.log(a)
        out = self.spline(np.clip(la, self.lo, self.hi))
        out = np.where(la < self.lo, self.f_lo + (la - self.lo), out)
        out = np.where(la > self.hi, self.f_hi + 2.0 / self.alpha * (la - self.hi), out)
        return np.exp(out)


class FarFieldTable:
    """Far-field exponent on a log grid, one column per inversion node.

    For inversion nodes ``z_k`` and an inversion point ``x`` the far-field
    argument is ``c = z_k * rho`` with real ``rho = B_N r_n^-alpha_N / x``,
    so ``Psi(z_k rho)`` is tabulated against ``ln rho`` (complex log, cubic
    spline) with slope-1 and slope-``2/alpha`` extrapolation.
    """

    def __init__(self, alpha: float, sigma: float, rule: InversionRule, shadow_nodes: int = 128,
                 tail_tol: float = 1e-10, log_rho_range=(-50.0, 60.0), step: float = 0.05):
        self.alpha = alpha
        self.nodes = rule.nodes
        grid = np.arange(log_rho_range[0], log_rho_range[1] + step, step)
        lz = np.log(np.abs(rule.nodes))
        margin = _SHADOW_SPAN * sigma + 2.0
        self.radial = _RadialSpline(alpha, tail_tol, grid[0] + lz.min() - margin, grid[-1] + lz.max() + margin)
        psi = np.empty((grid.size, rule.size), dtype=complex)
        for k in range(rule.size):
            psi[:, k] = far_exponent(np.exp(grid) * rule.nodes[k], alpha, sigma, shadow_nodes,
                                     tail_tol, radial=self.radial)
        lp = np.log(psi)
        lp = lp.real + 1j * np.unwrap(lp.imag, axis=0)
        self.grid = grid
        self.spline = CubicSpline(grid, lp, axis=0)
        self.lp_lo, self.lp_hi = lp[0], lp[-1]

    def exponent(self, log_rho) -> np.ndarray:
        """``Psi(z_k rho)`` with shape ``log_rho.shape + (K,)``."""
        lr = np.asarray(log_rho, dtype=float)
        lo, hi = self.grid[0], self.grid[-1]
        out = self.spline(np.clip(lr, lo, hi))
        below = lr < lo
        above = lr > hi
        if np.any(below):
            out[below] = self.lp_lo + (lr[below] - lo)[..., None]
        if np.any(above):
            out[above] = self.lp_hi + 2.0 / self.alpha * (lr[above] - hi)[..., None]
        return np.exp(out)


@lru_cache(maxsize=32)
def _far_table(alpha: float, sigma: float, method: str, nodes: int, shadow_nodes: int,
               tail_tol: float) -> FarFieldTable:
    return FarFieldTable(alpha, sigma, get_rule(method, nodes), shadow_nodes, tail_tol)


# ---------------------------------------------------------------------------
# truncated near-field powers


def _near_grid(log_tau, mu, sigma: float, osc, nodes: int):
    """Nodes and weights for ``int_{-inf}^{log_tau} g(w) N(w; mu, sigma) dw``.

    The map from Gauss-Legendre nodes equidistributes the work density
    ``osc * e^w + c`` where the first term counts oscillations of
    ``exp(-s e^w)`` (``osc = |s| / 2 pi``) and the second resolves the
    Gaussian on the scale of the distance from its tail to the cutoff.
    Returns arrays of shape ``broadcast + (nodes,)``; the weights include the
    Gaussian density and vanish when the cutoff leaves no mass.
    """
    log_tau, mu, osc = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (log_tau, mu, osc)))
    if sigma == 0:
        w = np.repeat(mu[..., None], nodes, axis=-1)
        weight = np.zeros(w.shape)
        weight[..., 0] = (mu <= log_tau).astype(float)
        return w, weight
    with np.errstate(invalid="ignore"):
        zb = (log_tau - mu) / sigma
    zb = np.where(np.isnan(zb), np.inf, zb)
    zneg = np.minimum(zb, 0.0)
    lo = np.where(zb >= 0, mu - sigma * math.sqrt(_LOWER_CUT2),
                  log_tau - sigma * (np.sqrt(zneg * zneg + _LOWER_CUT2) + zneg))
    up = np.minimum(log_tau, mu + _UPPER_CUT * sigma)
    ok = up > lo
    up = np.where(ok, up, lo + 1.0)
    scale = (1.0 + np.maximum(0.0, -zb)) / sigma
    e_lo = np.exp(lo)
    total = osc * (np.exp(up) - e_lo) + scale * (up - lo)
    x, wq = _gl01(nodes)
    tgt = total[..., None] * x
    lo_, e_lo_, osc_, sc_ = lo[..., None], e_lo[..., None], osc[..., None], scale[..., None]
    with np.errstate(divide="ignore"):
        w = np.minimum(lo_ + tgt / sc_, np.log(e_lo_ + tgt / np.maximum(osc_, 1e-300)))
    for _ in range(_NEWTON_STEPS):
        ew = np.exp(w)
        w = w - (osc_ * (ew - e_lo_) + sc_ * (w - lo_) - tgt) / (osc_ * ew + sc_)
    jac = total[..., None] / (osc_ * np.exp(w) + sc_)
    zz = (w - mu[..., None]) / sigma
    dens = _INV_SQRT_2PI / sigma * np.exp(-0.5 * zz * zz)
    return w, np.where(ok[..., None], wq * jac * dens, 0.0)


def _component_mass(log_tau, mu, sigma):
    if sigma == 0:
        return (mu <= log_tau).astype(float)
    with np.errstate(invalid="ignore"):
        return ndtr((log_tau - mu) / sigma)


def _peer_transform(s, log_tau, weight, mu, sigmas, osc, nodes, ladder=None):
    """``E[exp(-s P); P <= tau]`` and ``P(P <= tau)`` for one peer.

    ``s`` has shape ``(A, K)``; ``log_tau``, ``osc`` shape ``(A,)``;
    ``weight``, ``mu`` shape ``(A, 2)``. When ``ladder = (base, step)`` is
    given, ``s[:, k] = base + k * step`` (per row) and the exponentials are
    built as geometric progressions in ``k``.
    """
    mass = np.zeros(log_tau.shape)
    acc = np.zeros(s.shape, dtype=complex)
    for c in (0, 1):
        p = weight[:, c]
        if not np.any(p > 0):
            continue
        mass_c = _component_mass(log_tau, mu[:, c], sigmas[c])
        w, om = _near_grid(log_tau, mu[:, c], sigmas[c], osc, nodes)
        om = om * p[:, None]
        ew = np.exp(w)
        if ladder is None:
            arg = s[:, None, :] * ew[:, :, None]
            acc -= np.einsum("ank,an->ak", -np.expm1(-arg), om)
            mass += p * mass_c
        else:
            base, step = ladder
            first = om * np.exp(-base[:, None] * ew)
            ratio = np.exp(-step[:, None] * ew)
            powers = np.empty(ew.shape + (s.shape[1],), dtype=complex)
            powers[..., 0] = 1.0
            if s.shape[1] > 1:
                powers[..., 1:] = ratio[..., None]
                np.cumprod(powers, axis=-1, out=powers)
            acc += np.einsum("ank,an->ak", powers, first)
            # mass not captured by the nodes (quadrature and cutoff error)
            acc += (p * mass_c - om.sum(axis=1))[:, None]
            mass += p * mass_c
    if ladder is None:
        return mass[:, None] + acc, mass
    return acc, mass


def truncated_power_transform(s, t, r, tier: Tier, nodes: int = 48):
    """``E[exp(-s P); P <= t]`` for the power from distance ``r`` (unnormalized)."""
    s = np.asarray(s, dtype=complex)
    shape = s.shape
    flat = s.reshape(-1, 1)
    mix = power_mixture(tier, float(r))
    n = flat.shape[0]
    log_tau = np.full(n, math.log(t) if t > 0 else -np.inf)
    u, _ = _peer_transform(
        flat, log_tau, np.tile(mix.weight, (n, 1)), np.tile(mix.mu, (n, 1)), mix.sigma,
        np.abs(flat[:, 0]) / (2.0 * math.pi), nodes,
    )
    return u[:, 0].reshape(shape)


def lt_truncated_power(s, t: float, r: float, tier: Tier, nodes: int = 48):
    """Transform of the power from distance ``r`` conditioned on ``P <= t``.

    Raises :class:`ZeroMass` when ``P(P <= t)`` underflows.
    """
    mass = power_cdf_given_r(t, r, tier)
    if not mass > 0:
        raise ZeroMass(f"no power mass below t={t!r} at r={r!r}")
    out = truncated_power_transform(s, t, r, tier, nodes) / mass
    return out if np.ndim(out) else complex(out)


def _candidate_distances(distances) -> np.ndarray:
    if isinstance(distances, CandidateSet):
        return distances.distances
    return CandidateSet(0, np.asarray(distances, dtype=float)).distances


def lt_near_interference(s, m: int, t: float, distances, tier: Tier, nodes: int = 48):
    """Transform of the summed peer powers, each conditioned on ``P_j <= t``.

    ``m`` is the 1-based index of the associated candidate.
    """
    d = _candidate_distances(distances)
    if not 1 <= m <= d.size:
        raise ValueError(f"m must lie in [1, {d.size}]")
    out = np.ones(np.shape(s), dtype=complex)
    for j, r in enumerate(d, start=1):
        if j != m:
            out = out * lt_truncated_power(s, t, r, tier, nodes)
    return out if out.ndim else complex(out)


@dataclass(frozen=True)
class LTEvaluator:
    """A Laplace transform together with its conditioning."""

    func: Callable
    kind: str
    tier: Tier
    m: Optional[int] = None
    t: Optional[float] = None
    distances: Optional[np.ndarray] = None

    def __call__(self, s):
        return self.func(s)


def interference_transform(m, t, distances, tier: Tier, quad: Optional[QuadControls] = None) -> LTEvaluator:
    """Transform of ``I_m`` given ``P_m = t``, peers capped at ``t``, and the distances."""
    quad = quad or QuadControls()
    d = _candidate_distances(distances)

    def func(s):
        return (lt_near_interference(s, m, t, d, tier, quad.near_nodes)
                * lt_far_interference(s, d[-1], tier, quad))

    return LTEvaluator(func, "interference", tier, m, t, d)


def interference_pdf(m, t, distances, tier: Tier, quad: Optional[QuadControls] = None,
                     method: Optional[str] = None, check_grid=None) -> Callable:
    """Density of ``I_m`` given ``P_m = t``, peers capped at ``t``, and the distances.

    Each point ``x`` is inverted with the peers capped at ``min(t, 2x)``,
    which gives the same density at ``x`` while keeping the steep edge of
    the capped law away from the evaluation point (Euler only; Talbot keeps
    the cap at ``min(t, x)`` because its contour cannot tolerate more). A
    diagnostic grid (default: 64 points up to ten times the mean
    interference) is inverted first; a negative dip beyond tolerance raises
    :class:`InversionUnstable`.
    """
    quad = quad or QuadControls()
    d = _candidate_distances(distances)
    engine = TierEngine(tier, d.size, quad, method)
    if check_grid is None:
        lt = interference_transform(m, t, d, tier, quad)
        h = 1e-6 / t
        mean = float(np.real(1.0 - lt(np.array([h + 0j]))[0]) / h)
        check_grid = np.linspace(0.0, 10.0 * max(mean, 1e-300), 65)[1:]
    vals = np.atleast_1d(engine.conditional(check_grid, m, t, d, "pdf"))
    scale = max(float(np.max(np.abs(vals))), 1e-300)
    if float(np.min(vals)) < -1e-6 * scale:
        raise InversionUnstable(f"inverted density dips to {float(np.min(vals)):.3e}")

    def pdf(x):
        return engine.conditional(x, m, t, d, "pdf")

    return pdf


def interference_cdf(x, m, t, distances, tier: Tier, quad: Optional[QuadControls] = None,
                     method: Optional[str] = None):
    """CDF of ``I_m`` given ``P_m = t``, peers capped at ``t``, and the distances."""
    quad = quad or QuadControls()
    d = _candidate_distances(distances)
    return TierEngine(tier, d.size, quad, method).conditional(x, m, t, d, "cdf")


def conditional_coverage(m, t, distances, gamma, tier: Tier, quad: Optional[QuadControls] = None):
    """``P(I_m <= t/gamma)`` given ``P_m = t``, peers capped at ``t``, distances."""
    gamma = np.asarray(gamma, dtype=float)
    if np.any(gamma <= 0):
        raise ValueError("gamma must be > 0 (linear)")
    out = interference_cdf(t / gamma, m, t, distances, tier, quad)
    return out if np.ndim(out) else float(out)


def decondition_peers(m, t, distances, gamma, tier: Tier, quad: Optional[QuadControls] = None):
    """``P(all peers <= t, I_m <= t/gamma)`` given ``P_m = t`` and the distances."""
    d = _candidate_distances(distances)
    peers = np.prod([power_cdf_given_r(t, r, tier) for j, r in enumerate(d, 1) if j != m])
    if peers == 0:
        return np.zeros(np.shape(gamma)) if np.ndim(gamma) else 0.0
    return conditional_coverage(m, t, d, gamma, tier, quad) * peers


# ---------------------------------------------------------------------------
# batched engine


def _power_nodes(tier: Tier, r, nodes: int):
    """Gauss-Hermite nodes in ``ln t`` for the power from distances ``r``.

    Returns ``(log_t, weight)`` of shape ``r.shape + (2 * nodes,)``; an atom
    component occupies its first node only.
    """
    mix = power_mixture(tier, r)
    x, w = roots_hermite(nodes)
    w = w / math.sqrt(math.pi)
    ys, ws = [], []
    for c in (0, 1):
        sig = mix.sigma[c]
        mu = mix.mu[..., c][..., None]
        p = mix.weight[..., c][..., None]
        if sig > 0:
            ys.append(mu + math.sqrt(2.0) * sig * x)
            ws.append(p * w)
        else:
            ys.append(np.repeat(mu, nodes, axis=-1))
            wa = np.zeros(nodes)
            wa[0] = 1.0
            ws.append(p * wa)
    return np.concatenate(ys, axis=-1), np.concatenate(ws, axis=-1)


@dataclass
class InversionDiagnostics:
    evaluations: int = 0
    worst_low: float = 0.0
    worst_high: float = 0.0

    def update(self, cdf, cap):
        self.evaluations += cdf.size
        if cdf.size:
            self.worst_low = max(self.worst_low, float(np.max(-cdf)))
            self.worst_high = max(self.worst_high, float(np.max(cdf - cap)))


class TierEngine:
    """Per-candidate coverage terms of one tier for batches of distance samples."""

    def __init__(self, tier: Tier, n: int, quad: QuadControls, method: Optional[str] = None):
        if not tier.alpha_n > 2:
            raise ConfigError([f"analytic mode needs exponent_nlos > 2, got {tier.alpha_n}"])
        self.tier = tier
        self.n = int(n)
        self.quad = quad
        self.method = method or quad.inversion_method
        nodes = quad.euler_nodes if self.method == "euler" else quad.talbot_nodes
        self.rule = get_rule(self.method, nodes)
        _gated_self_test(self.method, nodes)
        self.table = _far_table(tier.alpha_n, tier.lin.sigma_s_nlos, self.method, nodes,
                                quad.shadow_nodes, quad.tail_tol)
        self.sigmas = np.array([tier.lin.sigma_s_nlos, tier.lin.sigma_s_los])
        self.diagnostics = InversionDiagnostics()

    def terms(self, distances, gammas) -> np.ndarray:
        """Terms of shape ``(S, n, G)`` for distances ``(S, n)`` and linear ``gammas``.

        A zero ``gamma`` gives the association probability of each candidate.
        """
        d = np.atleast_2d(np.asarray(distances, dtype=float))
        gammas = np.atleast_1d(np.asarray(gammas, dtype=float))
        if d.shape[1] != self.n:
            raise ValueError(f"expected {self.n} distances per sample")
        if np.any(gammas < 0):
            raise ValueError("gamma must be >= 0")
        out = np.zeros((d.shape[0], self.n, gammas.size))
        for m in range(self.n):
            out[:, m, :] = self._terms_for(d, m, gammas)
        return out

    def _terms_for(self, d, m, gammas):
        tier = self.tier
        S = d.shape[0]
        log_t, wt = _power_nodes(tier, d[:, m], self.quad.power_nodes)
        T = log_t.shape[1]
        peers = np.delete(d, m, axis=1)
        pmix = power_mixture(tier, peers)
        out = np.zeros((S, gammas.size))
        zero = gammas == 0
        if np.any(zero):
            mass = np.ones((S, T))
            for j in range(peers.shape[1]):
                for c in (0, 1):
                    mass_c = _component_mass(log_t, pmix.mu[:, j, c][:, None], self.sigmas[c])
                    if c == 0:
                        acc = pmix.weight[:, j, c][:, None] * mass_c
                    else:
                        acc = acc + pmix.weight[:, j, c][:, None] * mass_c
                mass *= acc
            out[:, zero] = np.sum(wt * mass, axis=1)[:, None]
        pos = np.flatnonzero(~zero)
        if pos.size == 0:
            return out
        lg = np.log(gammas[pos])
        G = pos.size
        # flatten (sample, t-node, gamma)
        si = np.repeat(np.arange(S), T * G)
        lt_flat = np.repeat(log_t.ravel(), G)
        wt_flat = np.repeat(wt.ravel(), G)
        lx = lt_flat - np.tile(lg, S * T)
        gi = np.tile(np.arange(G), S * T)
        # nodes this light cannot move a probability by more than ~1e-10
        keep = wt_flat > _MIN_NODE_WEIGHT
        si, lt_flat, wt_flat, lx, gi = si[keep], lt_flat[keep], wt_flat[keep], lx[keep], gi[keep]
        cdf = self._cdf(si, lt_flat, lx, peers, pmix, d[:, -1])
        np.add.at(out, (si, pos[gi]), wt_flat * cdf)
        return out

    def _transform(self, idx, log_t, log_x, peers, pmix, r_last, stretch=0.0, nodes=None):
        """Transform at the nodes ``z_k / x`` of the law with peers capped at ``min(t, x e^stretch)``.

        Returns ``(values (A, K), cap (A,))`` where ``cap`` is the peers'
        probability of lying below the cap.
        """
        tier = self.tier
        K = self.rule.size
        zk = self.rule.nodes
        ltau = np.minimum(log_t, log_x + stretch)
        inv_x = np.exp(-log_x)
        s = zk[None, :] * inv_x[:, None]
        osc = float(np.max(np.abs(zk))) * inv_x / (2.0 * math.pi)
        prod = np.ones((idx.size, K), dtype=complex)
        cap = np.ones(idx.size)
        ladder = None
        if self.method == "euler":
            ladder = (zk[0].real * inv_x + 0j, 1j * math.pi * inv_x)
        for j in range(peers.shape[1]):
            u, mass = _peer_transform(s, ltau, pmix.weight[idx, j], pmix.mu[idx, j],
                                      self.sigmas, osc, nodes or self.quad.near_nodes, ladder)
            prod *= u
            cap *= mass
        rn = r_last[idx]
        log_rho = math.log(tier.lin.b_nlos) - tier.alpha_n * np.log(rn) - log_x
        far_scale = 2.0 * math.pi * tier.density
        prod *= np.exp(-(far_scale * rn * rn)[:, None] * self.table.exponent(log_rho))
        return prod, cap

    def _block(self):
        return max(1, _BLOCK_ELEMENTS // max(1, 2 * self.quad.near_nodes * self.rule.size))

    def _cdf(self, si, log_t, log_x, peers, pmix, r_last):
        """``P(all peers <= min(t, x), I <= x)`` for flattened items."""
        res = np.empty(si.size)
        zk = self.rule.nodes
        block = self._block()
        for start in range(0, si.size, block):
            sl = slice(start, start + block)
            prod, cap = self._transform(si[sl], log_t[sl], log_x[sl], peers, pmix, r_last)
            cdf = np.sum(np.real(self.rule.weights * prod / zk), axis=1)
            self.diagnostics.update(cdf, cap)
            res[sl] = np.clip(cdf, 0.0, cap)
        worst = max(self.diagnostics.worst_low, self.diagnostics.worst_high)
        if worst > _INVERSION_SLACK:
            raise InversionUnstable(f"inverted CDF leaves [0, cap] by {worst:.3e}")
        return res

    def _density(self, si, log_t, log_x, peers, pmix, r_last):
        """Density in ``x`` of ``P(all peers <= t, I <= x)`` for flattened items.

        Any cap in ``[x, t]`` gives the same density at ``x``. A cap at ``x``
        itself would put the steep edge of the capped law on the evaluation
        point, so Euler inverts with the cap at ``min(t, 2x)`` and twice the
        near-field nodes. Talbot keeps the cap at ``x``: its nodes reach
        ``Re z ~ -400`` and ``exp(-s P)`` would overflow beyond it.
        """
        res = np.empty(si.size)
        stretch = _PDF_CAP_STRETCH if self.method == "euler" else 0.0
        block = self._block() // 2 or 1
        for start in range(0, si.size, block):
            sl = slice(start, start + block)
            prod, _ = self._transform(si[sl], log_t[sl], log_x[sl], peers, pmix, r_last, stretch,
                                      2 * self.quad.near_nodes)
            res[sl] = np.sum(np.real(self.rule.weights * prod), axis=1) * np.exp(-log_x[sl])
        return res

    def conditional(self, x, m: int, t: float, distances, kind: str = "cdf"):
        """CDF or density of ``I_m`` given ``P_m = t``, peers ``<= t`` and the distances."""
        d = _candidate_distances(distances)
        if d.size != self.n or not 1 <= m <= self.n:
            raise ValueError(f"need {self.n} distances and m in [1, {self.n}]")
        if not t > 0:
            raise ValueError("t must be > 0")
        x = np.asarray(x, dtype=float)
        flat = np.atleast_1d(x).ravel()
        if np.any(flat < 0):
            raise ValueError("x must be >= 0")
        peers = np.delete(d[None, :], m - 1, axis=1)
        pmix = power_mixture(self.tier, peers)
        mass = float(np.prod(pmix.cdf(t))) if peers.size else 1.0
        if not mass > 0:
            raise ZeroMass(f"peer powers have no mass below t={t!r}")
        out = np.zeros(flat.size)
        pos = flat > 0
        if np.any(pos):
            k = int(pos.sum())
            args = (np.zeros(k, dtype=np.int64), np.full(k, math.log(t)), np.log(flat[pos]),
                    peers, pmix, d[None, -1])
            if kind == "cdf":
                out[pos] = np.clip(self._cdf(*args) / mass, 0.0, 1.0)
            elif kind == "pdf":
                out[pos] = self._density(*args) / mass
            else:
                raise ValueError(f"unknown kind {kind!r}")
        out = out.reshape(x.shape)
        return out if out.ndim else float(out)


@lru_cache(maxsize=None)
def _gated_self_test(method: str, nodes: int) -> dict:
    return self_test(method, nodes, tol=1e-8)


def decondition_power(m, distances, gamma, tier: Tier, quad: Optional[QuadControls] = None,
                      method: Optional[str] = None):
    """``P(m is the strongest candidate and SIR_m > gamma | distances)``.

    ``gamma`` is linear and may be zero (association probability).
    """
    quad = quad or QuadControls()
    d = _candidate_distances(distances)
    if not 1 <= m <= d.size:
        raise ValueError(f"m must lie in [1, {d.size}]")
    engine = TierEngine(tier, d.size, quad, method)
    g = np.atleast_1d(np.asarray(gamma, dtype=float))
    out = engine._terms_for(d[None, :], m - 1, g)[0]
    if not np.all(np.isfinite(out)):
        raise QuadratureNotConverged(f"non-finite power integral for m={m}")
    return out if np.ndim(gamma) else float(out[0])


# ---------------------------------------------------------------------------
# distance de-conditioning and results


@dataclass(frozen=True)
class TierCoverageTable:
    """Per-candidate terms and their sum for one tier across thresholds.

    ``terms`` and ``terms_se`` have shape ``(G, n)``; standard errors are
    those of the distance-sampling layer (zero for the tensor rule).
    """

    tier_index: int
    gamma_db: np.ndarray
    terms: np.ndarray
    terms_se: np.ndarray
    coverage: np.ndarray
    coverage_se: np.ndarray
    samples: int
    rule: str

    def rows(self):
        for g, gdb in enumerate(self.gamma_db):
            for m in range(self.terms.shape[1]):
                yield {
                    "gamma_db": float(gdb),
                    "tier": self.tier_index + 1,
                    "m": m + 1,
                    "term": float(self.terms[g, m]),
                    "term_se": float(self.terms_se[g, m]),
                    "pc_tier": float(self.coverage[g]),
                    "pc_tier_se": float(self.coverage_se[g]),
                }


def distance_rule_nodes(density: float, n: int, quad: QuadControls, rng=None):
    """Distance nodes ``(S, n)`` and weights ``(S,)`` for the outer expectation.

    ``sampling`` draws the ordered-distance law (equal weights); ``tensor``
    uses Gauss-Laguerre in ``u = pi lam r^2`` (``n = 1``) or generalized
    Laguerre in ``u_2`` times Legendre in ``u_1 / u_2`` (``n = 2``).
    """
    if quad.distance_rule == "sampling":
        rng = np.random.default_rng(rng if rng is not None else quad.seed)
        d = sample_joint_distances(density, n, rng, size=quad.distance_samples)
        return d, np.full(d.shape[0], 1.0 / d.shape[0])
    k = quad.tensor_nodes
    if n == 1:
        u, w = roots_laguerre(k)
        return np.sqrt(u / (math.pi * density))[:, None], w
    if n == 2:
        u2, w2 = roots_genlaguerre(k, 1.0)
        v, wv = _gl01(k)
        u1 = (u2[:, None] * v[None, :]).ravel()
        u2r = np.repeat(u2, k)
        w = (w2[:, None] * wv[None, :]).ravel()
        d = np.sqrt(np.stack([u1, u2r], axis=1) / (math.pi * density))
        return d, w
    raise ConfigError([f"tensor distance rule supports n <= 2, got n={n}"])


def _gamma_linear(gamma_db) -> np.ndarray:
    g = np.asarray(gamma_db, dtype=float)
    with np.errstate(over="ignore"):
        return np.where(np.isneginf(g), 0.0, 10.0 ** (g / 10.0))


def per_tier_coverage(tier_index: int, gamma_db, config: NetworkConfig, rng=None,
                      method: Optional[str] = None) -> TierCoverageTable:
    """Per-candidate terms and tier coverage at thresholds ``gamma_db``.

    ``-inf`` dB stands for the limit ``gamma -> 0``.
    """
    tier = config.tier(tier_index)
    quad = config.quad
    if rng is None:
        rng = np.random.default_rng([quad.seed, tier_index])
    d, w = distance_rule_nodes(tier.density, config.n_candidates, quad, rng)
    engine = TierEngine(tier, config.n_candidates, quad, method)
    return _table_from_terms(tier_index, gamma_db, engine.terms(d, _gamma_linear(gamma_db)), w, quad.distance_rule)


def _table_from_terms(tier_index, gamma_db, raw, w, rule):
    # raw: (S, n, G)
    gamma_db = np.atleast_1d(np.asarray(gamma_db, dtype=float))
    terms = np.einsum("s,smg->gm", w, raw)
    total = raw.sum(axis=1)
    cov = w @ total
    S = raw.shape[0]
    if rule == "sampling" and S > 1:
        terms_se = raw.std(axis=0, ddof=1).T / math.sqrt(S)
        cov_se = total.std(axis=0, ddof=1) / math.sqrt(S)
    else:
        terms_se = np.zeros_like(terms)
        cov_se = np.zeros_like(cov)
    return TierCoverageTable(tier_index, gamma_db, terms, terms_se, cov, cov_se, S, rule)


def combine_tiers(coverages, ses):
    """Network coverage ``1 - prod(1 - P_k)`` and its delta-method standard error."""
    p = np.asarray(coverages, dtype=float)
    se = np.asarray(ses, dtype=float)
    miss = 1.0 - p
    total = 1.0 - np.prod(miss, axis=0)
    var = np.zeros_like(total)
    for k in range(p.shape[0]):
        others = np.prod(np.delete(miss, k, axis=0), axis=0)
        var += (others * se[k]) ** 2
    return total, np.sqrt(var)


def network_coverage(gamma_db, config: NetworkConfig, method: Optional[str] = None):
    """Network coverage and standard error at thresholds ``gamma_db``."""
    tables = [per_tier_coverage(k, gamma_db, config, method=method) for k in range(config.K)]
    return combine_tiers([t.coverage for t in tables], [t.coverage_se for t in tables])


class AnalyticCoverage(BaseEstimator):
    """Estimator wrapper around the semi-analytic pipeline.

    ``fit`` draws (or builds) the distance nodes and prepares the far-field
    tables; ``predict`` maps thresholds in dB to network coverage.

    Parameters
    ----------
    config : NetworkConfig
    n_distance_samples : int, optional
        Overrides ``config.quad.distance_samples``.
    distance_rule : {"sampling", "tensor"}, optional
    inversion_method : {"euler", "talbot"}, optional
    random_state : int, Generator or None
        Seed for the distance samples; defaults to ``config.quad.seed``.
    """

    def __init__(self, config=None, n_distance_samples=None, distance_rule=None,
                 inversion_method=None, random_state=None):
        self.config = config
        self.n_distance_samples = n_distance_samples
        self.distance_rule = distance_rule
        self.inversion_method = inversion_method
        self.random_state = random_state

    def _resolved(self) -> NetworkConfig:
        if not isinstance(self.config, NetworkConfig):
            raise ConfigError(["config must be a NetworkConfig"])
        changes = {}
        if self.n_distance_samples is not None:
            changes["distance_samples"] = int(self.n_distance_samples)
        if self.distance_rule is not None:
            changes["distance_rule"] = self.distance_rule
        if self.inversion_method is not None:
            changes["inversion_method"] = self.inversion_method
        if self.random_state is not None and isinstance(self.random_state, (int, np.integer)):
            changes["seed"] = int(self.random_state)
        quad = replace(self.config.quad, **changes)
        problems = quad.problems()
        if problems:
            raise ConfigError(problems)
        return replace(self.config, quad=quad)

    def fit(self, X=None, y=None):
        cfg = self._resolved()
        self.config_ = cfg
        self.engines_, self.distances_, self.weights_ = [], [], []
        for k in range(cfg.K):
            tier = cfg.tier(k)
            if isinstance(self.random_state, np.random.Generator):
                rng = self.random_state
            else:
                rng = np.random.default_rng([cfg.quad.seed, k])
            d, w = distance_rule_nodes(tier.density, cfg.n_candidates, cfg.quad, rng)
            self.engines_.append(TierEngine(tier, cfg.n_candidates, cfg.quad))
            self.distances_.append(d)
            self.weights_.append(w)
        return self

    def tier_tables(self, gamma_db) -> list:
        check_is_fitted(self, "engines_")
        g = column_or_1d(np.asarray(gamma_db, dtype=float))
        if np.any(np.isnan(g)) or np.any(np.isposinf(g)):
            raise ValueError("thresholds must be finite dB values or -inf")
        lin = _gamma_linear(g)
        tables = []
        for k, engine in enumerate(self.engines_):
            raw = engine.terms(self.distances_[k], lin)
            tables.append(_table_from_terms(k, g, raw, self.weights_[k], self.config_.quad.distance_rule))
        return tables

    def predict(self, X):
        """Network coverage at thresholds ``X`` (dB)."""
        tables = self.tier_tables(X)
        return combine_tiers([t.coverage for t in tables], [t.coverage_se for t in tables])[0]
