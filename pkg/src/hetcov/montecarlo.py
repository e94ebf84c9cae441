"""Monte Carlo simulator of per-tier max-SIR association and coverage.

Each tier is simulated independently (orthogonal bands). The ``n`` nearest
BSs are drawn exactly from the arrival-time representation of the PPP and
the remaining BSs of the window are a Poisson number of uniform points in
the annulus between the ``n``-th distance and the window edge, which is the
same law as dropping the whole PPP and sorting. Every BS gets its own
LOS/NLOS state and shadowing unless ``farfield_all_nlos`` forces the
non-candidates to NLOS.

Random numbers come from ``SeedSequence(seed, spawn_key=(tier, chunk))`` so
that a tier's draws do not depend on how many other tiers are simulated.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy import integrate, optimize
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted, column_or_1d

from .exceptions import ConfigError, InsufficientConditionalSamples
from .geometry import window_for_count
from .model import MCControls, NetworkConfig, SweepSpec, Tier, db_to_linear
from .propagation import draw_received_power, prob_los

log = logging.getLogger(__name__)

# expected points per vectorized chunk
_CHUNK_POINTS = 2_000_000
_Z95 = 1.959963984540054


def _mean_power(tier: Tier, v, all_nlos=False):
    """Mean received power at distance ``v`` over blockage and shadowing."""
    lin = tier.lin
    nlos = lin.b_nlos * math.exp(0.5 * lin.sigma_s_nlos**2) * v ** (-tier.alpha_n)
    if all_nlos:
        return nlos
    p_l = prob_los(v, tier.kappa)
    los = lin.b_los * math.exp(0.5 * lin.sigma_s_los**2) * v ** (-tier.alpha_l)
    return (1.0 - p_l) * nlos + p_l * los


def window_radius_for(tier: Tier, n: int, rel_tol: float = 1e-4, all_nlos: bool = False) -> float:
    """Default simulation radius of one tier.

    The largest of: the all-NLOS Campbell radius where the mean interference
    beyond ``R`` is ``rel_tol`` times that between ``r_ref = 1/(2 sqrt(lam))``
    and ``R``; the same criterion with the full LOS/NLOS mixture (when LOS
    links are simulated); and the radius holding ``n`` points with
    probability ``1 - 1e-9``.
    """
    r_ref = 0.5 / math.sqrt(tier.density)
    alpha = tier.alpha_n
    if not alpha > 2:
        raise ConfigError([f"window sizing needs exponent_nlos > 2, got {alpha}"])
    radius = r_ref * (1.0 + 1.0 / rel_tol) ** (1.0 / (alpha - 2.0))
    if not all_nlos:
        if tier.kappa == 0 and not tier.alpha_l > 2:
            raise ConfigError(["mean interference diverges: kappa = 0 needs exponent_los > 2"])

        # in u = ln v the integrand decays like exp((2 - alpha) u)
        def integrand(u):
            v = math.exp(u)
            return _mean_power(tier, v) * v * v

        rate = alpha - 2.0 if tier.kappa > 0 else min(alpha, tier.alpha_l) - 2.0
        span = 40.0 / rate

        def tail(R):
            return integrate.quad(integrand, math.log(R), math.log(R) + span, limit=200)[0]

        def inside(R):
            return integrate.quad(integrand, math.log(r_ref), math.log(R), limit=200)[0]

        R = radius
        while tail(R) > rel_tol * inside(R):
            R *= 1.5
        if R > radius:
            radius = optimize.brentq(lambda x: tail(x) - rel_tol * inside(x), R / 1.5, R, rtol=1e-6)
    return max(radius, window_for_count(tier.density, n))


@dataclass(frozen=True)
class TierSamples:
    """Per-realization draws of one tier.

    ``near_power`` and ``distances`` are ``(R, n)`` ascending in distance;
    ``far_interference`` sums the non-candidate powers inside the window.
    """

    tier_index: int
    distances: np.ndarray
    near_power: np.ndarray
    near_nlos: np.ndarray
    far_interference: np.ndarray
    far_count: np.ndarray
    window_radius: float

    @property
    def realizations(self) -> int:
        return self.near_power.shape[0]

    def others(self) -> np.ndarray:
        """Interference seen by each candidate, summed without subtraction."""
        p = self.near_power
        n = p.shape[1]
        before = np.zeros_like(p)
        after = np.zeros_like(p)
        for i in range(1, n):
            before[:, i] = before[:, i - 1] + p[:, i - 1]
        for i in range(n - 2, -1, -1):
            after[:, i] = after[:, i + 1] + p[:, i + 1]
        return self.far_interference[:, None] + before + after

    def sir(self) -> np.ndarray:
        den = self.others()
        with np.errstate(divide="ignore"):
            return np.where(den > 0, self.near_power / np.where(den > 0, den, 1.0), np.inf)

    def winners(self):
        """Per-realization ``(argmax SIR, max SIR, tie flag)`` with ties to the lowest index."""
        s = self.sir()
        idx = np.argmax(s, axis=1)
        best = s[np.arange(s.shape[0]), idx]
        ties = np.sum(s == best[:, None], axis=1) > 1
        return idx, best, ties


def _chunk_rng(seed: int, tier_index: int, chunk: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(tier_index, chunk)))


def _far_field(tier, r_n, radius, rng, all_nlos, fixed_count=None):
    """Poisson non-candidate BSs in the annulus ``(r_n, radius)`` for each row."""
    area = math.pi * tier.density * np.maximum(radius**2 - r_n**2, 0.0)
    counts = rng.poisson(area) if fixed_count is None else fixed_count
    total = int(counts.sum())
    owner = np.repeat(np.arange(r_n.size), counts)
    r0 = r_n[owner]
    r = np.sqrt(r0**2 + rng.random(total) * (radius**2 - r0**2))
    # boundary draws at exactly r_n have probability zero but keep r > r_n
    r = np.maximum(r, np.nextafter(r0, np.inf))
    power, _ = draw_received_power(tier, r, rng, all_nlos=all_nlos)
    far = np.bincount(owner, weights=power, minlength=r_n.size)
    return far, counts


def simulate_tier(tier: Tier, n: int, mc: MCControls, tier_index: int = 0,
                  realizations: Optional[int] = None) -> TierSamples:
    """Simulate one tier for ``realizations`` (default ``mc.realizations``) draws."""
    R = int(mc.realizations if realizations is None else realizations)
    radius = mc.window_radius
    if radius is None:
        radius = window_radius_for(tier, n, mc.window_rel_tol, mc.farfield_all_nlos)
    mean_points = tier.density * math.pi * radius**2
    chunk = max(1, min(mc.chunk_size, int(_CHUNK_POINTS // max(mean_points, 1.0))))
    dist = np.empty((R, n))
    power = np.empty((R, n))
    nlos = np.empty((R, n), dtype=bool)
    far = np.empty(R)
    counts = np.empty(R, dtype=np.int64)
    for c, start in enumerate(range(0, R, chunk)):
        rows = min(chunk, R - start)
        rng = _chunk_rng(mc.seed, tier_index, c)
        arrivals = np.cumsum(rng.standard_exponential((rows, n)), axis=1)
        d = np.sqrt(arrivals / (math.pi * tier.density))
        # candidates beyond the window: redraw the realization (probability < 1e-9)
        short = d[:, -1] > radius
        while np.any(short):
            k = int(short.sum())
            log.warning("redrawing %d realizations with fewer than %d BSs in the window", k, n)
            redo = np.sqrt(np.cumsum(rng.standard_exponential((k, n)), axis=1) / (math.pi * tier.density))
            d[short] = redo
            short = d[:, -1] > radius
        p, draw = draw_received_power(tier, d, rng)
        f, cnt = _far_field(tier, d[:, -1], radius, rng, mc.farfield_all_nlos)
        sl = slice(start, start + rows)
        dist[sl], power[sl], nlos[sl], far[sl], counts[sl] = d, p, draw.is_nlos, f, cnt
    return TierSamples(tier_index, dist, power, nlos, far, counts, float(radius))


def simulate_realization(config: NetworkConfig, rng: np.random.Generator) -> list:
    """One realization of every tier.

    Returns per tier a dict with the winning 1-based index ``m``, the SIR of
    all candidates and the total interference (all window BSs).
    """
    out = []
    for k in range(config.K):
        tier = config.tier(k)
        n = config.n_candidates
        mc = config.mc
        radius = mc.window_radius or window_radius_for(tier, n, mc.window_rel_tol, mc.farfield_all_nlos)
        d = np.sqrt(np.cumsum(rng.standard_exponential((1, n)), axis=1) / (math.pi * tier.density))
        while d[0, -1] > radius:
            d = np.sqrt(np.cumsum(rng.standard_exponential((1, n)), axis=1) / (math.pi * tier.density))
        p, draw = draw_received_power(tier, d, rng)
        far, cnt = _far_field(tier, d[:, -1], radius, rng, mc.farfield_all_nlos)
        ts = TierSamples(k, d, p, draw.is_nlos, far, cnt, float(radius))
        idx, _, ties = ts.winners()
        out.append({
            "m": int(idx[0]) + 1,
            "sir": ts.sir()[0],
            "interference": float(p.sum() + far[0]),
            "tie": bool(ties[0]),
        })
    return out


def wilson_interval(successes, trials, z: float = _Z95):
    """Wilson score interval; returns ``(center, half_width)``."""
    k = np.asarray(successes, dtype=float)
    n = float(trials)
    p = k / n
    den = 1.0 + z * z / n
    center = (p + z * z / (2.0 * n)) / den
    half = z * np.sqrt(p * (1.0 - p) / n + z * z / (4.0 * n * n)) / den
    return center, half


@dataclass(frozen=True)
class CoverageResult:
    """Monte Carlo coverage across thresholds.

    ``per_tier`` and ``per_tier_halfwidth`` have shape ``(K, G)``; the
    estimates are plain proportions and the half-widths are those of the 95%
    Wilson interval. ``assoc_histogram`` has shape ``(K, n)``: the frequency
    of each ``(tier, m)`` winning network-wide; ``tier_assoc`` holds the
    within-tier winner frequencies.
    """

    gamma_db: np.ndarray
    per_tier: np.ndarray
    per_tier_halfwidth: np.ndarray
    network: np.ndarray
    network_halfwidth: np.ndarray
    realizations: int
    assoc_histogram: np.ndarray
    tier_assoc: np.ndarray
    ties: int = 0

    def standard_error(self, p):
        p = np.asarray(p, dtype=float)
        return np.sqrt(p * (1.0 - p) / self.realizations)

    @property
    def per_tier_se(self):
        return self.standard_error(self.per_tier)

    @property
    def network_se(self):
        return self.standard_error(self.network)


def coverage_from_samples(samples: list, gamma_db) -> CoverageResult:
    gamma_db = np.atleast_1d(np.asarray(gamma_db, dtype=float))
    lin = np.where(np.isneginf(gamma_db), 0.0, db_to_linear(np.where(np.isneginf(gamma_db), 0.0, gamma_db)))
    K = len(samples)
    R = samples[0].realizations
    n = samples[0].near_power.shape[1]
    best = np.empty((K, R))
    idx = np.empty((K, R), dtype=np.int64)
    ties = 0
    for k, ts in enumerate(samples):
        i, b, t = ts.winners()
        idx[k], best[k] = i, b
        ties += int(t.sum())
    # covered iff SIR >= gamma; gamma = 0 always covers
    covered = best[:, :, None] >= lin[None, None, :]
    per_tier_hits = covered.sum(axis=1)
    net_hits = np.any(covered, axis=0).sum(axis=0)
    per_tier = per_tier_hits / R
    network = net_hits / R
    _, pt_half = wilson_interval(per_tier_hits, R)
    _, net_half = wilson_interval(net_hits, R)
    tier_assoc = np.stack([np.bincount(idx[k], minlength=n) for k in range(K)]) / R
    top = np.argmax(best, axis=0)
    flat = top * n + idx[top, np.arange(R)]
    assoc = np.bincount(flat, minlength=K * n).reshape(K, n) / R
    return CoverageResult(gamma_db, per_tier, pt_half, network, net_half, R, assoc, tier_assoc, ties)


def estimate_coverage(config: NetworkConfig, sweep: SweepSpec) -> CoverageResult:
    """Simulate every tier of ``config`` and estimate coverage on ``sweep``."""
    est = MonteCarloCoverage(config).fit()
    return est.result(sweep.thresholds_db)


class MonteCarloCoverage(BaseEstimator):
    """Estimator wrapper around the simulator.

    ``fit`` draws all realizations; ``predict`` maps thresholds in dB to
    network coverage using the same draws for every threshold.

    Parameters
    ----------
    config : NetworkConfig
    n_realizations : int, optional
    random_state : int, optional
        Overrides ``config.mc.seed``.
    farfield_all_nlos : bool, optional
    window_radius : float, optional
    """

    def __init__(self, config=None, n_realizations=None, random_state=None,
                 farfield_all_nlos=None, window_radius=None):
        self.config = config
        self.n_realizations = n_realizations
        self.random_state = random_state
        self.farfield_all_nlos = farfield_all_nlos
        self.window_radius = window_radius

    def _resolved(self) -> NetworkConfig:
        if not isinstance(self.config, NetworkConfig):
            raise ConfigError(["config must be a NetworkConfig"])
        changes = {}
        if self.n_realizations is not None:
            changes["realizations"] = int(self.n_realizations)
        if self.random_state is not None:
            if not isinstance(self.random_state, (int, np.integer)):
                raise ConfigError(["random_state must be an integer seed"])
            changes["seed"] = int(self.random_state)
        if self.farfield_all_nlos is not None:
            changes["farfield_all_nlos"] = bool(self.farfield_all_nlos)
        if self.window_radius is not None:
            changes["window_radius"] = float(self.window_radius)
        mc = replace(self.config.mc, **changes)
        problems = mc.problems()
        if problems:
            raise ConfigError(problems)
        return replace(self.config, mc=mc)

    def fit(self, X=None, y=None):
        cfg = self._resolved()
        if cfg.mc.realizations < 1000:
            warnings.warn(f"only {cfg.mc.realizations} realizations; estimates will be noisy", stacklevel=2)
        self.config_ = cfg
        self.samples_ = [simulate_tier(cfg.tier(k), cfg.n_candidates, cfg.mc, k) for k in range(cfg.K)]
        ties = sum(int(ts.winners()[2].sum()) for ts in self.samples_)
        if ties:
            log.info("%d argmax ties broken by lowest index", ties)
        self.ties_ = ties
        return self

    def result(self, gamma_db) -> CoverageResult:
        check_is_fitted(self, "samples_")
        g = column_or_1d(np.asarray(gamma_db, dtype=float))
        if np.any(np.isnan(g)) or np.any(np.isposinf(g)):
            raise ValueError("thresholds must be finite dB values or -inf")
        return coverage_from_samples(self.samples_, g)

    def predict(self, X):
        """Network coverage at thresholds ``X`` (dB)."""
        return self.result(X).network


# ---------------------------------------------------------------------------
# oracle generator for conditional quantities


@dataclass(frozen=True)
class ConditioningSpec:
    """What to condition on and which conditional statistics to estimate.

    With ``distances`` given, the candidate distances are held fixed and only
    powers and the far field are redrawn. ``bin_edges`` bins realizations by
    the nearest distance when distances are random.
    """

    tier_index: int = 0
    distances: Optional[tuple] = None
    realizations: int = 100_000
    s_values: tuple = ()
    gamma_db: tuple = ()
    farfield_all_nlos: bool = True
    window_radius: Optional[float] = None
    bin_edges: Optional[tuple] = None
    min_hits: int = 500


@dataclass(frozen=True)
class EmpiricalConditionals:
    argmax_frequency: np.ndarray
    joint_coverage: np.ndarray
    joint_coverage_se: np.ndarray
    shot_noise_lt: np.ndarray
    shot_noise_se: np.ndarray
    winner: np.ndarray
    interference: np.ndarray
    bins: Optional[np.ndarray]
    min_hits: int

    def interference_cdf(self, m: int, x, bin_index: Optional[int] = None):
        """Empirical CDF of the winner's interference given it is candidate ``m`` (1-based)."""
        sel = self.winner == m - 1
        if bin_index is not None:
            if self.bins is None:
                raise ValueError("no distance bins were requested")
            sel &= self.bins == bin_index
        hits = int(sel.sum())
        if hits < self.min_hits:
            raise InsufficientConditionalSamples(f"{hits} hits for m={m}, bin={bin_index}")
        vals = np.sort(self.interference[sel])
        return np.searchsorted(vals, np.asarray(x, dtype=float), side="right") / hits


def empirical_conditionals(config: NetworkConfig, spec: ConditioningSpec, rng) -> EmpiricalConditionals:
    """Empirical association, coverage and shot-noise statistics for one tier."""
    tier = config.tier(spec.tier_index)
    n = config.n_candidates
    R = int(spec.realizations)
    radius = spec.window_radius or window_radius_for(tier, n, config.mc.window_rel_tol, spec.farfield_all_nlos)
    if spec.distances is not None:
        d0 = np.asarray(spec.distances, dtype=float)
        if d0.shape != (n,) or np.any(np.diff(d0) < 0) or np.any(d0 <= 0):
            raise ValueError("distances must be n ascending positive values")
        d = np.broadcast_to(d0, (R, n))
    else:
        d = np.sqrt(np.cumsum(rng.standard_exponential((R, n)), axis=1) / (math.pi * tier.density))
        d = np.where(d[:, -1:] > radius, np.nan, d)
        if np.any(np.isnan(d)):
            raise InsufficientConditionalSamples("candidate beyond the window; enlarge window_radius")
    power, _ = draw_received_power(tier, d, rng)
    far = np.zeros(R)
    block = max(1, int(_CHUNK_POINTS // max(tier.density * math.pi * radius**2, 1.0)))
    for start in range(0, R, block):
        sl = slice(start, start + block)
        far[sl], _ = _far_field(tier, d[sl, -1], radius, rng, spec.farfield_all_nlos)
    ts = TierSamples(spec.tier_index, np.asarray(d), power, np.zeros_like(power, bool), far,
                     np.zeros(R, np.int64), float(radius))
    idx, best, _ = ts.winners()
    freq = np.bincount(idx, minlength=n) / R
    g = np.atleast_1d(np.asarray(spec.gamma_db, dtype=float))
    joint = np.zeros((g.size, n))
    for gi, gdb in enumerate(g):
        lin = 0.0 if np.isneginf(gdb) else 10.0 ** (gdb / 10.0)
        ok = best >= lin
        joint[gi] = np.bincount(idx[ok], minlength=n) / R
    joint_se = np.sqrt(joint * (1.0 - joint) / R)
    s = np.atleast_1d(np.asarray(spec.s_values, dtype=float))
    e = np.exp(-s[:, None] * far[None, :])
    lt = e.mean(axis=1)
    lt_se = e.std(axis=1, ddof=1) / math.sqrt(R) if R > 1 else np.zeros_like(lt)
    interference = ts.others()[np.arange(R), idx]
    bins = None
    if spec.bin_edges is not None:
        bins = np.digitize(ts.distances[:, 0], np.asarray(spec.bin_edges, dtype=float)) - 1
    return EmpiricalConditionals(freq, joint, joint_se, lt, lt_se, idx, interference, bins, spec.min_hits)
