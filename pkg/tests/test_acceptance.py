"""Acceptance criteria. Each test prints one PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v`` (about 10 minutes on
one core); the lines are repeated in the terminal summary.
"""
import math
import time
from dataclasses import replace

import numpy as np
import pytest
from scipy import optimize, stats

from conftest import median_distance
from hetcov.analytic import AnalyticCoverage, TierEngine, lt_far_interference
from hetcov.cli import main as cli_main
from hetcov.cli import shipped_config
from hetcov.geometry import sample_joint_distances
from hetcov.io import read_csv
from hetcov.laplace import self_test
from hetcov.model import MCControls, NetworkConfig, QuadControls
from hetcov.montecarlo import ConditioningSpec, MonteCarloCoverage, empirical_conditionals
from hetcov.propagation import draw_received_power, power_cdf_given_r

pytestmark = pytest.mark.acceptance

GAMMAS_DB = (-10.0, 0.0, 10.0)


@pytest.fixture(scope="module")
def macro_network(macro_tier):
    """1-tier, n = 2, shipped tier-1 propagation constants and assumed sigma/kappa."""
    return NetworkConfig((macro_tier,), 0.008, 2, MCControls(realizations=100_000), QuadControls())


@pytest.fixture(scope="module")
def mc_all_nlos(macro_network):
    start = time.perf_counter()
    est = MonteCarloCoverage(macro_network, farfield_all_nlos=True).fit()
    est.elapsed_ = time.perf_counter() - start
    return est


@pytest.fixture(scope="module")
def analytic_fit(macro_network):
    start = time.perf_counter()
    est = AnalyticCoverage(macro_network, n_distance_samples=20_000).fit()
    tables = est.tier_tables((-np.inf,) + GAMMAS_DB)
    return tables[0], time.perf_counter() - start


class TestCriterion1Inversion:
    def test_self_test_and_method_agreement(self, macro_tier, report):
        start = time.perf_counter()
        errors = self_test("euler", 14, tol=1e-8)
        smooth_ok = errors["exponential"] < 1e-8 and errors["gamma2"] < 1e-8

        # representative conditioning: median distances, median power of candidate 1
        tier = NetworkConfig((macro_tier,), 0.008, 2).tier(0)
        d = (median_distance(macro_tier.density, 1), median_distance(macro_tier.density, 2))
        t = optimize.brentq(lambda p: power_cdf_given_r(p, d[0], tier) - 0.5, 1e-20, 1.0, rtol=1e-12)
        x = np.geomspace(1e-2 * t, 1e2 * t, 20)
        quad = QuadControls()
        euler = TierEngine(tier, 2, quad, "euler").conditional(x, 1, t, d, "cdf")
        talbot = TierEngine(tier, 2, quad, "talbot").conditional(x, 1, t, d, "cdf")
        gap = float(np.max(np.abs(euler - talbot)))
        elapsed = time.perf_counter() - start
        ok = smooth_ok and gap < 1e-6 and elapsed < 10.0
        report(1, ok, f"exp err {errors['exponential']:.1e}, gamma2 err {errors['gamma2']:.1e}; "
                      f"Talbot vs Euler max gap {gap:.2e} over 20 points (tol 1e-6); {elapsed:.1f} s")
        assert smooth_ok
        assert gap < 1e-6, f"Talbot and Euler differ by {gap:.2e}"
        assert elapsed < 10.0


class TestCriterion2DistributionOracles:
    def test_power_law_and_ordered_distances(self, macro_tier, report):
        start = time.perf_counter()
        tier = NetworkConfig((macro_tier,), 0.008, 2).tier(0)
        rng = np.random.default_rng(20240601)
        r = 180.0
        n_draws = 1_000_000
        power, _ = draw_received_power(tier, np.full(n_draws, r), rng)
        power.sort()
        model = power_cdf_given_r(power, r, tier)
        ecdf_hi = np.arange(1, n_draws + 1) / n_draws
        sup = float(max(np.max(ecdf_hi - model), np.max(model - (ecdf_hi - 1.0 / n_draws))))
        band = math.sqrt(math.log(2.0 / 0.01) / (2.0 * n_draws))

        d = sample_joint_distances(macro_tier.density, 3, np.random.default_rng(7), size=100_000)
        pvals = [stats.kstest(math.pi * macro_tier.density * d[:, m] ** 2, stats.gamma(m + 1).cdf).pvalue
                 for m in range(3)]
        elapsed = time.perf_counter() - start
        ok = sup < band and min(pvals) > 0.01 and elapsed < 60.0
        report(2, ok, f"power CDF sup gap {sup:.2e} < DKW band {band:.2e}; "
                      f"ordered-distance KS p-values {[round(float(p), 3) for p in pvals]}; {elapsed:.1f} s")
        assert sup < band
        assert min(pvals) > 0.01
        assert elapsed < 60.0


@pytest.mark.slow
class TestCriterion3FarFieldTransform:
    def test_matches_shot_noise(self, macro_network, report):
        start = time.perf_counter()
        tier = macro_network.tier(0)
        d = (median_distance(tier.density, 1), median_distance(tier.density, 2))
        r_n = d[-1]
        lin = tier.lin
        mean = (2.0 * math.pi * tier.density * lin.b_nlos * math.exp(0.5 * lin.sigma_s_nlos**2)
                * r_n ** (2.0 - tier.alpha_n) / (tier.alpha_n - 2.0))
        s = np.array([0.1, 1.0, 10.0]) / mean
        spec = ConditioningSpec(0, d, 100_000, tuple(s), (), farfield_all_nlos=True)
        emp = empirical_conditionals(macro_network, spec, np.random.default_rng(99))
        ana = np.real(lt_far_interference(s, r_n, tier, macro_network.quad))
        z = np.abs(ana - emp.shot_noise_lt) / emp.shot_noise_se
        elapsed = time.perf_counter() - start
        ok = bool(np.all(z < 3.0)) and elapsed < 120.0
        report(3, ok, f"LT analytic {np.round(ana, 5).tolist()} vs MC {np.round(emp.shot_noise_lt, 5).tolist()}, "
                      f"|z| {np.round(z, 2).tolist()} (< 3); {elapsed:.1f} s")
        assert np.all(z < 3.0)
        assert elapsed < 120.0


@pytest.mark.slow
class TestCriterion4StrongestIsBestSIR:
    def test_argmax_identity(self, mc_all_nlos, report):
        samples = mc_all_nlos.samples_[0]
        by_sir = np.argmax(samples.sir(), axis=1)
        by_power = np.argmax(samples.near_power, axis=1)
        _, _, ties = samples.winners()
        clean = ~ties
        agree = float(np.mean(by_sir[clean] == by_power[clean]))
        elapsed = mc_all_nlos.elapsed_
        ok = agree == 1.0 and samples.realizations >= 100_000 and elapsed < 60.0
        report(4, ok, f"argmax SIR == argmax power in {agree:.2%} of {int(clean.sum())} realizations, "
                      f"{int(ties.sum())} ties logged; simulation {elapsed:.1f} s")
        assert agree == 1.0
        assert elapsed < 60.0


@pytest.mark.slow
class TestCriterion5AnalyticVersusSimulation:
    def test_all_nlos_far_field(self, analytic_fit, mc_all_nlos, macro_network, report):
        table, elapsed = analytic_fit
        mc = mc_all_nlos.result(GAMMAS_DB)
        ana = table.coverage[1:]
        gap = np.abs(ana - mc.network)
        full = MonteCarloCoverage(macro_network, farfield_all_nlos=False).fit().result(GAMMAS_DB)
        gap_full = np.abs(ana - full.network)
        ok = bool(np.all(gap <= 0.02) and np.all(gap_full <= 0.03)) and elapsed < 900.0
        report(5, ok, f"analytic {np.round(ana, 4).tolist()}; MC all-NLOS far field {np.round(mc.network, 4).tolist()} "
                      f"(max gap {gap.max():.4f} <= 0.02); MC full far field {np.round(full.network, 4).tolist()} "
                      f"(max gap {gap_full.max():.4f} <= 0.03); analytic {elapsed:.0f} s")
        assert np.all(gap <= 0.02)
        assert np.all(gap_full <= 0.03)


def _run_cli(args):
    code = cli_main(args + ["--quiet"])
    assert code == 0
    return code


@pytest.mark.slow
class TestCriterion6ThresholdTrend:
    def test_fig2(self, tmp_path, report):
        start = time.perf_counter()
        _run_cli(["--config", str(shipped_config("fig2")), "--out", str(tmp_path)])
        net = read_csv(tmp_path / "montecarlo_network.csv")
        tiers = [r for r in read_csv(tmp_path / "montecarlo_tiers.csv") if r["tier"] == "1"]
        gammas = np.array([float(r["gamma_db"]) for r in net])
        two = np.array([float(r["pc_network"]) for r in net])
        two_se = np.array([float(r["pc_se"]) for r in net])
        # tier 1 alone is the 1-tier network: common random numbers give identical draws
        one = np.array([float(r["pc_tier"]) for r in tiers])
        one_se = np.array([float(r["pc_tier_se"]) for r in tiers])
        monotone = bool(np.all(np.diff(two) <= 0) and np.all(np.diff(one) <= 0))
        better = bool(np.all(two - one >= -2.0 * np.hypot(two_se, one_se)))
        elapsed = time.perf_counter() - start
        ok = monotone and better and gammas[0] == -20 and gammas[-1] == 40 and elapsed < 600
        report(6, ok, f"{gammas.size} thresholds -20..40 dB; nonincreasing: {monotone}; "
                      f"2-tier >= 1-tier within 2 s.e.: {better} (min excess {np.min(two - one):.4f}); {elapsed:.0f} s")
        assert monotone and better
        assert elapsed < 600


@pytest.mark.slow
class TestCriterion7DensityTrend:
    def test_fig3(self, tmp_path, report):
        start = time.perf_counter()
        _run_cli(["--config", str(shipped_config("fig3")), "--out", str(tmp_path)])
        net = read_csv(tmp_path / "montecarlo_network.csv")
        lam = np.array([float(r["density_per_m2"]) for r in net])
        pc = np.array([float(r["pc_network"]) for r in net])
        se = np.array([float(r["pc_se"]) for r in net])
        order = np.argsort(lam)
        lam, pc, se = lam[order], pc[order], se[order]
        dec = pc[:-1] - pc[1:]
        dec_ok = bool(np.all(dec >= -2.0 * np.hypot(se[:-1], se[1:])))
        slack = 2.0 * np.sqrt(se[:-2] ** 2 + 4.0 * se[1:-1] ** 2 + se[2:] ** 2)
        slower = bool(np.all(dec[1:] <= dec[:-1] + slack))
        elapsed = time.perf_counter() - start
        ok = dec_ok and slower and lam.size >= 5 and elapsed < 900
        report(7, ok, f"{lam.size} densities; coverage {np.round(pc, 4).tolist()}; "
                      f"decrements {np.round(dec, 4).tolist()}; nonincreasing: {dec_ok}; "
                      f"decrements shrink within 2 s.e.: {slower}; {elapsed:.0f} s")
        assert dec_ok and slower and lam.size >= 5
        assert elapsed < 900


@pytest.mark.slow
class TestCriterion8Completeness:
    def test_terms_sum_to_one_and_match_histogram(self, analytic_fit, mc_all_nlos, report):
        table, _ = analytic_fit
        terms = table.terms[0]
        total = float(table.coverage[0])
        total_se = float(table.coverage_se[0])
        assoc = mc_all_nlos.result([-np.inf]).assoc_histogram[0]
        sum_ok = abs(total - 1.0) <= 2.0 * total_se
        hist_gap = float(np.max(np.abs(terms - assoc)))
        ok = sum_ok and hist_gap <= 0.02
        report(8, ok, f"terms {np.round(terms, 4).tolist()} sum {total:.10f} (se {total_se:.1e}); "
                      f"histogram {np.round(assoc, 4).tolist()} max gap {hist_gap:.4f} <= 0.02")
        assert sum_ok
        assert hist_gap <= 0.02


class TestCriterion9Reproducibility:
    def test_two_runs_identical(self, small_cfg_path, tmp_path, report):
        a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
        for out in (a, b):
            _run_cli(["--config", str(small_cfg_path), "--out", str(out), "--seed", "77"])
        _run_cli(["--from-manifest", str(a / "manifest.txt"), "--out", str(c)])
        names = sorted(p.name for p in a.glob("*.csv"))
        same = all((a / n).read_bytes() == (b / n).read_bytes() == (c / n).read_bytes() for n in names)
        ok = same and len(names) == 6
        report(9, ok, f"{len(names)} CSVs byte-identical across two runs and a manifest rerun: {same}")
        assert ok


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-v", "-s"]))
