"""Command-line batch runner: threshold or density sweeps with either engine.

Outputs (in ``--out``):

``analytic_tiers.csv``     gamma_db, tier, m, term, term_se, pc_tier, pc_tier_se
``analytic_network.csv``   gamma_db, pc_network, pc_se
``montecarlo_tiers.csv``   gamma_db, tier, pc_tier, pc_tier_se, ci_halfwidth
``montecarlo_network.csv`` gamma_db, pc_network, pc_se, ci_halfwidth
``assoc_histogram.csv``    tier, m, frequency
``comparison.csv``         gamma_db, pc_analytic, pc_analytic_se, pc_montecarlo, pc_montecarlo_se, delta
``manifest.txt``           flat ``key = value`` run record
``config.cfg``             verbatim copy of the configuration
``error.txt``              written on failure only

Density sweeps prepend ``density_per_m2`` to every CSV. Exit codes: 0 ok,
2 validation, 3 convergence, 4 I/O, 1 anything else.
"""
from __future__ import annotations

import argparse
import logging
import shutil
import sys
import time
import traceback
from dataclasses import replace
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path

import numpy as np

from .analytic import AnalyticCoverage, combine_tiers
from .config import MODES, validate_config
from .exceptions import ConfigError, ConvergenceError, ZeroMass
from .io import library_versions, read_manifest, sha256_file, write_csv, write_manifest
from .montecarlo import coverage_from_samples, simulate_tier

log = logging.getLogger("hetcov")

EXIT_OK, EXIT_FAILURE, EXIT_VALIDATION, EXIT_CONVERGENCE, EXIT_IO = 0, 1, 2, 3, 4

ANALYTIC_TIER_COLUMNS = ["gamma_db", "tier", "m", "term", "term_se", "pc_tier", "pc_tier_se"]
ANALYTIC_NETWORK_COLUMNS = ["gamma_db", "pc_network", "pc_se"]
MC_TIER_COLUMNS = ["gamma_db", "tier", "pc_tier", "pc_tier_se", "ci_halfwidth"]
MC_NETWORK_COLUMNS = ["gamma_db", "pc_network", "pc_se", "ci_halfwidth"]
ASSOC_COLUMNS = ["tier", "m", "frequency"]
COMPARISON_COLUMNS = ["gamma_db", "pc_analytic", "pc_analytic_se", "pc_montecarlo", "pc_montecarlo_se", "delta"]


def shipped_config(name: str) -> Path:
    """Path of a configuration bundled with the package (``fig2``, ``fig3``)."""
    stem = name[:-4] if name.endswith(".cfg") else name
    return Path(str(resources.files("hetcov") / "data" / f"{stem}.cfg"))


def _resolve_config(text: str) -> Path:
    path = Path(text)
    if path.exists():
        return path
    bundled = shipped_config(text)
    if bundled.exists():
        return bundled
    raise FileNotFoundError(f"configuration not found: {text}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="hetcov",
        description="Coverage probability of K-tier LOS/NLOS networks (semi-analytic and Monte Carlo).",
    )
    p.add_argument("--config", help="INI configuration file, or a shipped name (fig2, fig3)")
    p.add_argument("--mode", choices=MODES, help="engine(s) to run (default: [run] mode, else both)")
    p.add_argument("--sweep", help="gamma:START:STOP:STEP, gamma:V1,V2,... or density:TIER:V1,V2,...")
    p.add_argument("--gamma", help="thresholds in dB for a density sweep (list or START:STOP:STEP)")
    p.add_argument("--out", help="output directory (created if missing)")
    p.add_argument("--seed", type=int, help="seed for both engines (overrides the config)")
    p.add_argument("--realizations", type=int, help="Monte Carlo realizations")
    p.add_argument("--distance-samples", type=int, help="distance samples of the semi-analytic engine")
    p.add_argument("--from-manifest", metavar="MANIFEST", help="rerun exactly the run recorded in MANIFEST")
    p.add_argument("--validate-only", action="store_true", help="check the configuration and exit")
    p.add_argument("--quiet", action="store_true", help="only report errors")
    return p


def _arguments_from_manifest(args) -> argparse.Namespace:
    path = Path(args.from_manifest)
    entries = read_manifest(path)
    config = path.parent / entries["config_copy"]
    if sha256_file(config) != entries["config_sha256"]:
        raise ConfigError([f"{config} does not match the hash recorded in {path}"])
    out = args.out or str(path.parent)
    return argparse.Namespace(
        config=str(config), mode=entries["mode"], sweep=entries["sweep"], gamma=entries.get("gamma_db") or None,
        out=out, seed=None, realizations=None, distance_samples=None,
        from_manifest=None, validate_only=args.validate_only, quiet=args.quiet,
        _mc_seed=int(entries["mc_seed"]), _quad_seed=int(entries["quad_seed"]),
        _realizations=int(entries["realizations"]), _distance_samples=int(entries["distance_samples"]),
    )


def _with_overrides(config, args):
    mc, quad = config.mc, config.quad

    def pick(recorded, flag):
        value = getattr(args, recorded, None)
        return getattr(args, flag) if value is None else value

    mc_seed = pick("_mc_seed", "seed")
    quad_seed = pick("_quad_seed", "seed")
    realizations = pick("_realizations", "realizations")
    samples = pick("_distance_samples", "distance_samples")
    if mc_seed is not None:
        mc = replace(mc, seed=int(mc_seed))
    if quad_seed is not None:
        quad = replace(quad, seed=int(quad_seed))
    if realizations is not None:
        mc = replace(mc, realizations=int(realizations))
    if samples is not None:
        quad = replace(quad, distance_samples=int(samples))
    problems = mc.problems() + quad.problems()
    if problems:
        raise ConfigError(problems)
    return replace(config, mc=mc, quad=quad)


def _points(spec, config):
    """``(density or None, config)`` per sweep point."""
    sweep = spec.sweep
    if sweep.axis == "gamma":
        return [(None, config)]
    return [(d, config.with_tier_density(sweep.tier, d)) for d in sweep.densities]


def _prefix(density):
    return {} if density is None else {"density_per_m2": float(density)}


def run_analytic(points, gammas):
    tier_rows, net_rows, network = [], [], {}
    for density, cfg in points:
        log.info("semi-analytic engine%s", "" if density is None else f" at density {density:g} /m^2")
        est = AnalyticCoverage(cfg).fit()
        tables = est.tier_tables(gammas)
        pc, se = combine_tiers([t.coverage for t in tables], [t.coverage_se for t in tables])
        for t in tables:
            for row in t.rows():
                tier_rows.append({**_prefix(density), **row})
        for g, p, s in zip(gammas, pc, se):
            net_rows.append({**_prefix(density), "gamma_db": float(g), "pc_network": float(p), "pc_se": float(s)})
            network[(density, float(g))] = (float(p), float(s))
    return tier_rows, net_rows, network


def run_montecarlo(points, gammas):
    tier_rows, net_rows, assoc_rows, network = [], [], [], {}
    cache = {}
    for density, cfg in points:
        log.info("Monte Carlo engine%s", "" if density is None else f" at density {density:g} /m^2")
        samples = []
        for k in range(cfg.K):
            # tiers not being swept are simulated once and reused
            key = (k, cfg.tiers[k])
            if key not in cache:
                cache[key] = simulate_tier(cfg.tier(k), cfg.n_candidates, cfg.mc, k)
            samples.append(cache[key])
        res = coverage_from_samples(samples, gammas)
        tier_se = res.per_tier_se
        for k in range(cfg.K):
            for g, gdb in enumerate(res.gamma_db):
                tier_rows.append({
                    **_prefix(density), "gamma_db": float(gdb), "tier": k + 1,
                    "pc_tier": float(res.per_tier[k, g]), "pc_tier_se": float(tier_se[k, g]),
                    "ci_halfwidth": float(res.per_tier_halfwidth[k, g]),
                })
            for m in range(cfg.n_candidates):
                assoc_rows.append({**_prefix(density), "tier": k + 1, "m": m + 1,
                                   "frequency": float(res.assoc_histogram[k, m])})
        net_se = res.network_se
        for g, gdb in enumerate(res.gamma_db):
            net_rows.append({
                **_prefix(density), "gamma_db": float(gdb), "pc_network": float(res.network[g]),
                "pc_se": float(net_se[g]), "ci_halfwidth": float(res.network_halfwidth[g]),
            })
            network[(density, float(gdb))] = (float(res.network[g]), float(net_se[g]))
        if res.ties:
            log.info("%d argmax ties broken by lowest index", res.ties)
    return tier_rows, net_rows, assoc_rows, network


def _comparison(analytic, montecarlo):
    rows = []
    for key in analytic:
        density, g = key
        pa, sa = analytic[key]
        pm, sm = montecarlo[key]
        rows.append({**_prefix(density), "gamma_db": g, "pc_analytic": pa, "pc_analytic_se": sa,
                     "pc_montecarlo": pm, "pc_montecarlo_se": sm, "delta": pa - pm})
    return rows


def _columns(spec, cols):
    return (["density_per_m2"] if spec.sweep.axis == "density" else []) + cols


def execute(config, spec, out_dir: Path, manifest: dict) -> dict:
    """Run the engines of ``spec`` and write the CSV artifacts.

    Each engine's files are written as soon as it finishes so that a later
    failure leaves the completed results on disk. Returns summary entries
    for the manifest.
    """
    gammas = np.asarray(spec.sweep.thresholds.thresholds_db, dtype=float)
    points = _points(spec, config)
    outputs, summary = [], {}
    analytic = montecarlo = None
    if spec.mode in ("montecarlo", "both"):
        tiers, net, assoc, montecarlo = run_montecarlo(points, gammas)
        outputs += [
            write_csv(out_dir / "montecarlo_tiers.csv", _columns(spec, MC_TIER_COLUMNS), tiers).name,
            write_csv(out_dir / "montecarlo_network.csv", _columns(spec, MC_NETWORK_COLUMNS), net).name,
            write_csv(out_dir / "assoc_histogram.csv", _columns(spec, ASSOC_COLUMNS), assoc).name,
        ]
        manifest["outputs"] = ",".join(outputs)
    if spec.mode in ("analytic", "both"):
        tiers, net, analytic = run_analytic(points, gammas)
        outputs += [
            write_csv(out_dir / "analytic_tiers.csv", _columns(spec, ANALYTIC_TIER_COLUMNS), tiers).name,
            write_csv(out_dir / "analytic_network.csv", _columns(spec, ANALYTIC_NETWORK_COLUMNS), net).name,
        ]
        manifest["outputs"] = ",".join(outputs)
    if analytic is not None and montecarlo is not None:
        rows = _comparison(analytic, montecarlo)
        outputs.append(write_csv(out_dir / "comparison.csv", _columns(spec, COMPARISON_COLUMNS), rows).name)
        worst = max(rows, key=lambda r: abs(r["delta"]))
        summary["max_abs_delta"] = repr(abs(worst["delta"]))
        summary["max_abs_delta_gamma_db"] = repr(worst["gamma_db"])
    summary["outputs"] = ",".join(outputs)
    return summary


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, ConfigError):
        return EXIT_VALIDATION
    if isinstance(exc, (ConvergenceError, ZeroMass)):
        return EXIT_CONVERGENCE
    if isinstance(exc, OSError):
        return EXIT_IO
    if isinstance(exc, ValueError):
        return EXIT_VALIDATION
    return EXIT_FAILURE


def _error_record(exc: BaseException, code: int) -> dict:
    record = {"status": "failed", "exit_code": code, "error_type": type(exc).__name__, "message": str(exc)}
    for i, problem in enumerate(getattr(exc, "problems", []) or []):
        record[f"problem_{i + 1}"] = problem
    if code == EXIT_FAILURE:
        record["traceback"] = "".join(traceback.format_exception(type(exc), exc, exc.__traceback__))
    return record


def _setup_logging(quiet: bool):
    level = logging.ERROR if quiet else logging.INFO
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", force=True)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _setup_logging(args.quiet)
    started = time.perf_counter()
    out_dir = None
    manifest: dict = {"status": "running"}
    try:
        if args.from_manifest:
            args = _arguments_from_manifest(args)
        if not args.validate_only:
            if not args.out:
                raise ConfigError(["--out is required"])
            out_dir = Path(args.out)
            out_dir.mkdir(parents=True, exist_ok=True)
        if not args.config:
            raise ConfigError(["--config (or --from-manifest) is required"])
        config_path = _resolve_config(args.config)
        config, spec = validate_config(config_path, args.mode, args.sweep, args.out, gamma_db=args.gamma)
        config = _with_overrides(config, args)
        if args.validate_only:
            if not args.quiet:
                print(f"{config_path}: ok ({config.K} tiers, mode={spec.mode}, sweep={spec.sweep.text})")
            return EXIT_OK
        config_copy = out_dir / "config.cfg"
        if config_copy.resolve() != config_path.resolve():
            shutil.copyfile(config_path, config_copy)
        manifest.update({
            "config_path": str(config_path),
            "config_copy": config_copy.name,
            "config_sha256": sha256_file(config_copy),
            "mode": spec.mode,
            "sweep": spec.sweep.text,
            "gamma_db": ",".join(repr(g) for g in spec.sweep.thresholds.thresholds_db)
            if spec.sweep.axis == "density" else "",
            "mc_seed": config.mc.seed,
            "quad_seed": config.quad.seed,
            "realizations": config.mc.realizations,
            "distance_samples": config.quad.distance_samples,
            **library_versions(),
            "started_utc": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        })
        summary = execute(config, spec, out_dir, manifest)
        manifest.update(summary)
        manifest["status"] = "ok"
        manifest["wall_time_s"] = f"{time.perf_counter() - started:.2f}"
        write_manifest(out_dir / "manifest.txt", manifest)
        if not args.quiet:
            print(f"wrote {summary['outputs']} to {out_dir}")
            if "max_abs_delta" in summary:
                print(f"max |analytic - montecarlo| = {float(summary['max_abs_delta']):.4f} "
                      f"at gamma = {summary['max_abs_delta_gamma_db']} dB (comparison.csv)")
        return EXIT_OK
    except Exception as exc:  # noqa: BLE001 - every failure becomes an exit code and a record
        code = _exit_code(exc)
        print(f"hetcov: error ({type(exc).__name__}): {exc}", file=sys.stderr)
        for problem in getattr(exc, "problems", []) or []:
            print(f"  - {problem}", file=sys.stderr)
        if out_dir is not None:
            try:
                write_manifest(out_dir / "error.txt", _error_record(exc, code))
                manifest.update({"status": "failed", "exit_code": code,
                                 "wall_time_s": f"{time.perf_counter() - started:.2f}"})
                write_manifest(out_dir / "manifest.txt", manifest)
            except OSError:
                log.error("could not write the error record to %s", out_dir)
        return code


if __name__ == "__main__":
    sys.exit(main())
