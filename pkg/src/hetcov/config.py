"""INI configuration files: parsing, unit normalization and validation.

Layout::

    [network]            schema_version, blockage_kappa, n_candidates, density_unit
    [tier.1], [tier.2]   one section per tier (TierParams fields, optional kappa)
    [montecarlo]         realizations, seed, window_radius, window_rel_tol, ...
    [quadrature]         node counts, inversion method, distance rule, ...
    [run]                optional defaults: mode, sweep, gamma_db

Every problem found is collected and raised together in one
:class:`ConfigError`.
"""
from __future__ import annotations

import configparser
import math
import re
import warnings
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional

from .exceptions import ConfigError
from .model import MCControls, NetworkConfig, QuadControls, SweepSpec, TierParams

SCHEMA_VERSION = 1
DENSITY_UNITS = {"per_m2": 1.0, "per_km2": 1e-6}
MODES = ("analytic", "montecarlo", "both")

_TIER_FIELDS = [f.name for f in fields(TierParams)]
_MC_FIELDS = {f.name: f for f in fields(MCControls)}
_QUAD_FIELDS = {f.name: f for f in fields(QuadControls)}


@dataclass(frozen=True)
class Sweep:
    """A threshold sweep, or a density sweep of one tier at fixed thresholds.

    ``densities`` are in BS per square meter; ``tier`` is 0-based.
    """

    axis: str
    thresholds: SweepSpec
    tier: Optional[int] = None
    densities: tuple = ()
    text: str = ""


@dataclass(frozen=True)
class RunSpec:
    mode: str
    sweep: Sweep
    out_dir: Optional[str] = None
    config_path: Optional[str] = None


def _float_list(text: str) -> list[float]:
    return [float(v) for v in text.replace(" ", "").split(",") if v != ""]


def parse_gamma_list(text: str) -> tuple:
    """``start:stop:step`` (inclusive) or a comma list, in dB."""
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError(f"bad range {text!r}; expected start:stop:step")
        start, stop, step = (float(p) for p in parts)
        if not step > 0:
            raise ValueError("range step must be > 0")
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        return tuple(round(start + i * step, 12) for i in range(max(count, 0)))
    return tuple(_float_list(text))


def parse_sweep(text: str, n_tiers: int, density_scale: float, gamma_db: str = "0") -> Sweep:
    """Parse ``gamma:<list>`` or ``density:<tier>:<list>``.

    Density values use the configuration's unit; ``tier`` is 1-based.
    """
    text = text.strip()
    kind, _, rest = text.partition(":")
    if kind == "gamma":
        values = parse_gamma_list(rest)
        if not values:
            raise ConfigError(["threshold sweep is empty"])
        return Sweep("gamma", SweepSpec(values), text=text)
    if kind == "density":
        tier_text, _, values_text = rest.partition(":")
        try:
            tier = int(tier_text) - 1
        except ValueError:
            raise ConfigError([f"bad tier index in sweep {text!r}"]) from None
        if not 0 <= tier < n_tiers:
            raise ConfigError([f"sweep tier {tier + 1} outside 1..{n_tiers}"])
        values = tuple(v * density_scale for v in parse_gamma_list(values_text))
        if not values:
            raise ConfigError(["density sweep is empty"])
        if any(not v > 0 for v in values):
            raise ConfigError(["swept densities must be > 0"])
        return Sweep("density", SweepSpec(parse_gamma_list(gamma_db)), tier, values, text)
    raise ConfigError([f"unknown sweep axis {kind!r}; use gamma:... or density:..."])


def _get_float(section, key, problems, required=True, default=None):
    if key not in section:
        if required:
            problems.append(f"[{section.name}] missing {key}")
        return default
    try:
        value = float(section[key])
    except ValueError:
        problems.append(f"[{section.name}] {key} is not a number: {section[key]!r}")
        return default
    if not math.isfinite(value):
        problems.append(f"[{section.name}] {key} must be finite")
        return default
    return value


def _coerce(field, raw: str):
    if field.name == "window_radius":
        return None if raw.strip().lower() in ("auto", "none", "") else float(raw)
    default = field.default
    if isinstance(default, bool):
        low = raw.strip().lower()
        if low in ("true", "yes", "1", "on"):
            return True
        if low in ("false", "no", "0", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if isinstance(default, int):
        value = float(raw)
        if value != int(value):
            raise ValueError(f"not an integer: {raw!r}")
        return int(value)
    if isinstance(default, float):
        return float(raw)
    return raw.strip()


def _controls(cp, name, cls, table, problems):
    if not cp.has_section(name):
        return cls()
    kwargs = {}
    for key, raw in cp[name].items():
        if key not in table:
            problems.append(f"[{name}] unknown key {key}")
            continue
        try:
            kwargs[key] = _coerce(table[key], raw)
        except ValueError as exc:
            problems.append(f"[{name}] {key}: {exc}")
    obj = cls(**kwargs)
    problems.extend(f"[{name}] {p}" for p in obj.problems())
    return obj


def load_config(source, mode: Optional[str] = None):
    """Parse and validate a configuration.

    ``source`` is a path or the text itself. Returns ``(NetworkConfig,
    run_defaults)`` where ``run_defaults`` is the raw ``[run]`` section as a
    dict. ``mode`` enables mode-specific checks (analytic needs
    ``exponent_nlos > 2``).
    """
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    text = source
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source and "[" not in source):
        text = Path(source).read_text()
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError([f"unreadable configuration: {exc}"]) from None
    problems: list[str] = []
    if not cp.has_section("network"):
        raise ConfigError(["missing [network] section"])
    net = cp["network"]
    version = net.get("schema_version")
    if version is None:
        problems.append("[network] missing schema_version")
    elif version.strip() != str(SCHEMA_VERSION):
        problems.append(f"[network] unsupported schema_version {version!r} (expected {SCHEMA_VERSION})")
    unit = net.get("density_unit", "per_m2").strip()
    if unit not in DENSITY_UNITS:
        problems.append(f"[network] density_unit must be one of {sorted(DENSITY_UNITS)}")
        unit = "per_m2"
    scale = DENSITY_UNITS[unit]
    kappa = _get_float(net, "blockage_kappa", problems, default=0.0)
    if kappa is not None and kappa < 0:
        problems.append("[network] blockage_kappa must be >= 0")
    n_cand = _get_float(net, "n_candidates", problems, default=1)
    if n_cand is not None and (n_cand != int(n_cand) or n_cand < 1):
        problems.append("[network] n_candidates must be an integer >= 1")
    known = {"schema_version", "density_unit", "blockage_kappa", "n_candidates"}
    problems.extend(f"[network] unknown key {k}" for k in net if k not in known)

    tier_names = sorted(
        (s for s in cp.sections() if s.startswith("tier.")),
        key=lambda s: int(s.split(".", 1)[1]) if s.split(".", 1)[1].isdigit() else 10**9,
    )
    for name in cp.sections():
        if name not in ("network", "montecarlo", "quadrature", "run") and not re.fullmatch(r"tier\.\d+", name):
            problems.append(f"unknown section [{name}]")
    expected = [f"tier.{i}" for i in range(1, len(tier_names) + 1)]
    if [t for t in tier_names if re.fullmatch(r"tier\.\d+", t)] != expected:
        problems.append("tier sections must be numbered tier.1, tier.2, ... without gaps")
    if not tier_names:
        problems.append("at least one [tier.N] section is required")
    tiers, overrides = [], []
    for name in tier_names:
        sec = cp[name]
        vals = {}
        for key in _TIER_FIELDS:
            required = not key.startswith("shadow_sigma")
            vals[key] = _get_float(sec, key, problems, required=required, default=0.0)
        problems.extend(f"[{name}] unknown key {k}" for k in sec if k not in _TIER_FIELDS and k != "kappa")
        overrides.append(_get_float(sec, "kappa", problems, required=False))
        if any(v is None for v in vals.values()):
            continue
        vals["density"] *= scale
        trial = TierParams.__new__(TierParams)
        for key, v in vals.items():
            object.__setattr__(trial, key, v)
        tier_problems = trial.problems()
        problems.extend(f"[{name}] {p}" for p in tier_problems)
        if tier_problems:
            continue
        if mode in ("analytic", "both") and not vals["exponent_nlos"] > 2:
            problems.append(
                f"[{name}] exponent_nlos = {vals['exponent_nlos']} must exceed 2 in analytic mode "
                "(the far-field interference integral diverges)"
            )
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            tiers.append(TierParams(**vals))
        if vals["exponent_nlos"] <= vals["exponent_los"]:
            warnings.warn(f"[{name}] exponent_nlos <= exponent_los", stacklevel=2)

    mc = _controls(cp, "montecarlo", MCControls, _MC_FIELDS, problems)
    quad = _controls(cp, "quadrature", QuadControls, _QUAD_FIELDS, problems)
    if mode in ("montecarlo", "both") and mc.window_radius is None:
        for k, t in enumerate(tiers):
            if not t.exponent_nlos > 2:
                problems.append(
                    f"[tier.{k + 1}] exponent_nlos <= 2 needs an explicit [montecarlo] window_radius "
                    "(the automatic window grows without bound)"
                )
    if quad.distance_rule == "tensor" and n_cand is not None and n_cand > 2:
        problems.append("[quadrature] distance_rule = tensor supports n_candidates <= 2")
    run = dict(cp["run"]) if cp.has_section("run") else {}
    if "mode" in run and run["mode"] not in MODES:
        problems.append(f"[run] mode must be one of {MODES}")
    problems.extend(f"[run] unknown key {k}" for k in run if k not in ("mode", "sweep", "gamma_db"))
    if problems:
        raise ConfigError(problems)
    kov = tuple(overrides) if any(o is not None for o in overrides) else None
    config = NetworkConfig(tuple(tiers), float(kappa), int(n_cand), mc, quad, kov)
    run["density_scale"] = scale
    return config, run


def validate_config(path, mode: Optional[str] = None, sweep: Optional[str] = None,
                    out_dir: Optional[str] = None, gamma_db: Optional[str] = None):
    """Load a configuration and build the run specification.

    ``mode``, ``sweep`` and ``gamma_db`` (thresholds of a density sweep)
    override the ``[run]`` section. Returns
    ``(NetworkConfig, RunSpec)``; raises :class:`ConfigError` listing every
    problem.
    """
    problems = []
    text = Path(path).read_text()
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text)
        run_mode = mode or (cp["run"].get("mode") if cp.has_section("run") else None) or "both"
    except configparser.Error:
        run_mode = mode or "both"
    if run_mode not in MODES:
        problems.append(f"mode must be one of {MODES}")
        run_mode = None
    try:
        config, run = load_config(text, run_mode)
    except ConfigError as exc:
        raise ConfigError(exc.problems + problems) from None
    sweep_text = sweep or run.get("sweep") or "gamma:-20:40:2"
    try:
        parsed = parse_sweep(sweep_text, config.K, run["density_scale"], gamma_db or run.get("gamma_db", "0"))
    except ConfigError as exc:
        problems.extend(exc.problems)
        parsed = None
    except ValueError as exc:
        problems.append(f"bad sweep {sweep_text!r}: {exc}")
        parsed = None
    if problems:
        raise ConfigError(problems)
    return config, RunSpec(run_mode, parsed, out_dir, str(path))
