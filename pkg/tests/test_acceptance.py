"""Acceptance suite: one test per criterion, each reporting a PASS/FAIL line.

The synthetic runs are expensive (about 20 minutes on one core in total), so
each protocol is run once per module and shared between the criteria that
read it. All synthetic runs pin genotyping fidelity at 1 because the data are
generated without genotyping error.
"""

import itertools
import math
import time

import numpy as np
import pytest
from scipy.special import logsumexp

from hdphase import engine
from hdphase.chain import ChainConfig, log_concentration_density, sweep
from hdphase.core_model import Dataset, Hyperparams, UrnState
from hdphase.dp_sampler import DPConfig, crp_weights, run_dp, run_dp_per_population
from hdphase.hdp_sampler import HDPConfig, hdp_prior_weights, run_hdp, sample_concentration
from hdphase.partition_ligation import Block, LigationConfig, phase_long, stitch_candidates
from hdphase.likelihoods import (collapsed_h_marginal, collapsed_h_predictive, p_g_site,
                                 p_h_site)
from hdphase.eval_metrics import mean_freq_kl, score, sign_test
from hdphase.exact_oracle import OracleInstance, exact_posterior, total_variation
from hdphase.synthgen import extend_founders, generate, preset, truth_haplotype_frequencies

from conftest import hap, report

pytestmark = pytest.mark.acceptance

N_SEEDS = 20
LONG_SEEDS = (0, 1)


def _consistent(result, data):
    return np.array_equal(np.sort(result.haplotypes.transpose(0, 2, 1), axis=2),
                          data.genotype_array())


# ---------------------------------------------------------------------------
# 1. oracle equivalence

ORACLE_HP = Hyperparams(alpha_h=4.0, beta_h=1.0, alpha_g=6.0, beta_g=1.0)
ORACLE_CASES = [
    ("two double hets", [[[0, 1], [0, 1]], [[0, 1], [0, 1]]], 1.0),
    ("three mixed", [[[0, 1], [0, 1], [0, 0]], [[0, 1], [1, 1], [0, 1]],
                     [[0, 0], [0, 1], [0, 1]]], 1.0),
    ("four mixed", [[[0, 1], [0, 1], [0, 1]], [[0, 1], [0, 1], [0, 1]],
                    [[0, 0], [1, 1], [0, 1]], [[0, 1], [0, 0], [1, 1]]], 1.0),
    ("fidelity integrated", [[[0, 1], [0, 1]], [[0, 0], [0, 1]]], None),
    ("fidelity 0.8", [[[0, 1], [0, 1]], [[0, 0], [0, 1]]], 0.8),
]


def test_criterion_01_oracle_equivalence():
    start = time.perf_counter()
    worst, map_ok = 0.0, True
    for name, G, xi in ORACLE_CASES:
        G = np.array(G)
        data = Dataset.from_arrays(G, [0] * len(G))
        exact = exact_posterior(OracleInstance(data, ORACLE_HP, tau=1.0, xi=xi))
        res = run_dp(data, DPConfig(hyperparams=ORACLE_HP, burn_in=1000, n_samples=50000,
                                    seed=1, tau=1.0, resample_tau=False, xi=xi,
                                    pinned_warmup=0.0), pooled=False)
        for i, (p, q) in enumerate(zip(exact.pair_marginals, res.pair_marginals)):
            worst = max(worst, total_variation(p, q))
            # the reported phase should be the exact MAP whenever the MAP is clear
            ranked = sorted(p.values(), reverse=True)
            if xi == 1.0 and (len(ranked) == 1 or ranked[0] - ranked[1] > 0.05):
                best = max(p, key=p.get)
                got = "|".join(sorted("".join(map(str, h)) for h in res.haplotypes[i]))
                map_ok &= got == best
    elapsed = time.perf_counter() - start
    ok = worst <= 0.03 and elapsed < 120 and map_ok
    report(1, "oracle equivalence", ok,
           f"max TV {worst:.4f} (<= 0.03), {elapsed:.0f}s (< 120s), MAP phase agrees: {map_ok}")
    assert ok


# ---------------------------------------------------------------------------
# 2. likelihood identities

def test_criterion_02_likelihood_identities():
    from scipy import integrate, stats
    worst_quad = 0.0
    for a, b, asz in ((1.0, 1.0, 2), (19.0, 1.0, 2), (2.5, 4.0, 3)):
        for n in range(13):
            for lp in range(n + 1):
                l = n - lp
                f = lambda th: (1 - th) ** l * (th / (asz - 1)) ** lp * stats.beta.pdf(th, b, a)
                quad, _ = integrate.quad(f, 0.0, 1.0, epsabs=0, epsrel=1e-11, limit=200)
                exact = math.exp(collapsed_h_marginal([(l, lp)], a, b, asz))
                worst_quad = max(worst_quad, abs(exact / quad - 1.0))
    worst_norm = 0.0
    for asz in (2, 3, 4):
        pairs = list(itertools.combinations_with_replacement(range(asz), 2))
        for a, theta in itertools.product(range(asz), (0.0, 0.01, 0.3, 1.0)):
            worst_norm = max(worst_norm, abs(sum(p_h_site(h, a, theta, asz)
                                                 for h in range(asz)) - 1.0))
        for h0, h1, xi in itertools.product(range(asz), range(asz), (0.0, 0.5, 0.95, 1.0)):
            worst_norm = max(worst_norm, abs(sum(p_g_site(g, h0, h1, xi, asz)
                                                 for g in pairs) - 1.0))
    worst_ratio = 0.0
    for l, lp, asz in itertools.product(range(0, 40, 3), range(0, 40, 3), (2, 4)):
        for match in (True, False):
            before = collapsed_h_marginal([(l, lp)], 19.0, 1.0, asz)
            after = collapsed_h_marginal([(l + match, lp + (not match))], 19.0, 1.0, asz)
            pred = collapsed_h_predictive(0 if match else 1, 0, (l, lp), 19.0, 1.0, asz)
            worst_ratio = max(worst_ratio, abs(after - before - math.log(pred)))
    ok = worst_quad <= 1e-6 and worst_norm <= 1e-12 and worst_ratio <= 1e-12
    report(2, "likelihood identities", ok,
           f"quadrature rel err {worst_quad:.1e} (<= 1e-6), normalization {worst_norm:.1e} "
           f"(<= 1e-12), predictive ratio {worst_ratio:.1e} (<= 1e-12)")
    assert ok


# ---------------------------------------------------------------------------
# 3-5. conserved data

@pytest.fixture(scope="module")
def conserved():
    rows = []
    for seed in range(N_SEEDS):
        data, truth = generate(preset("conserved", seed=seed))
        start = time.perf_counter()
        res = run_hdp(data, HDPConfig(seed=seed, xi=1.0))
        elapsed = time.perf_counter() - start
        rows.append(dict(seed=seed, k=res.k_mode, k_pop=float(np.mean(res.k_pop_mode)),
                         theta=res.theta_mean, err=score(truth.haplotypes, res.haplotypes).err_s,
                         time=elapsed, consistent=_consistent(res, data)))
    return rows


def test_criterion_03_k_recovery_conserved(conserved):
    k = np.mean([r["k"] for r in conserved])
    k_pop = np.mean([r["k_pop"] for r in conserved])
    slowest = max(r["time"] for r in conserved)
    ok = 16 <= k <= 19 and 4 <= k_pop <= 6 and slowest < 60
    report(3, "K recovery (conserved)", ok,
           f"mean mode K {k:.2f} in [16, 19], per-population {k_pop:.2f} in [4, 6], "
           f"slowest seed {slowest:.1f}s (< 60s)")
    assert ok


def test_criterion_04_theta_recovery_conserved(conserved):
    theta = np.mean([r["theta"] for r in conserved])
    ok = 0.003 <= theta <= 0.012
    report(4, "theta recovery (conserved)", ok, f"mean theta {theta:.4f} in [0.003, 0.012]")
    assert ok


def test_criterion_05_err_conserved(conserved):
    err = np.mean([r["err"] for r in conserved])
    ok = err <= 0.03
    report(5, "err_s (conserved)", ok, f"mean err_s {err:.4f} (<= 0.03)")
    assert ok


# ---------------------------------------------------------------------------
# 6-8. diverse data

@pytest.fixture(scope="module")
def diverse():
    out = {"hdp": [], "dp-pooled": [], "dp-per-population": []}
    for seed in range(N_SEEDS):
        data, truth = generate(preset("diverse", seed=seed))
        tf = truth_haplotype_frequencies(truth, data.n_populations)
        runs = {
            "hdp": lambda: run_hdp(data, HDPConfig(seed=seed, xi=1.0)),
            "dp-pooled": lambda: run_dp(data, DPConfig(seed=seed, xi=1.0), pooled=True),
            "dp-per-population": lambda: run_dp_per_population(data, DPConfig(seed=seed, xi=1.0)),
        }
        for name, fn in runs.items():
            r = fn()
            out[name].append(dict(err=score(truth.haplotypes, r.haplotypes).err_s,
                                  k=r.k_mode, kl=mean_freq_kl(tf, r.hap_freqs)))
    return out


def _paired(diverse, key, base):
    h = np.array([r[key] for r in diverse["hdp"]])
    b = np.array([r[key] for r in diverse[base]])
    wins, n, p = sign_test(b - h)
    return h.mean(), b.mean(), wins, n, p


def test_criterion_06_hdp_beats_dp_err(diverse):
    ok, parts = True, []
    for base in ("dp-pooled", "dp-per-population"):
        h, b, wins, n, p = _paired(diverse, "err", base)
        ok &= h < b and p < 0.05
        parts.append(f"HDP {h:.4f} vs {base} {b:.4f} ({wins}/{n} wins, p={p:.2g})")
    report(6, "HDP < DP err_s (diverse)", ok, "; ".join(parts))
    assert ok


def test_criterion_07_dp_overclusters(diverse):
    k_h = np.mean([r["k"] for r in diverse["hdp"]])
    k_d = np.mean([r["k"] for r in diverse["dp-pooled"]])
    ok = k_d >= k_h + 3 and 15 <= k_h <= 22
    report(7, "DP over-clustering (diverse)", ok,
           f"DP mode-I mean K {k_d:.2f} >= HDP {k_h:.2f} + 3; HDP K in [15, 22]")
    assert ok


def test_criterion_08_frequency_kl(diverse):
    ok, parts = True, []
    for base in ("dp-pooled", "dp-per-population"):
        h, b, wins, n, p = _paired(diverse, "kl", base)
        ok &= h < b and p < 0.05
        parts.append(f"HDP {h:.3f} vs {base} {b:.3f} ({wins}/{n} wins, p={p:.2g})")
    report(8, "frequency KL ordering (diverse)", ok, "; ".join(parts))
    assert ok


# ---------------------------------------------------------------------------
# 9. partition-ligation

def _worked_example_count():
    left = Block.from_haplotypes(0, np.array([[hap("000100"), hap("100010")]]))
    right = Block.from_haplotypes(3, np.array([[hap("110000"), hap("000100")]]))
    return len(stitch_candidates(left, right, 3).pool)


def test_criterion_09_partition_ligation(conserved):
    diffs = []
    for seed in range(N_SEEDS):
        data, truth = generate(preset("conserved", seed=seed, n_loci=20))
        cfg = HDPConfig(seed=seed, xi=1.0)
        direct = score(truth.haplotypes, run_hdp(data, cfg).haplotypes).err_s
        pl = score(truth.haplotypes,
                   phase_long(data, LigationConfig(block_length=10, hdp=cfg)).haplotypes).err_s
        diffs.append(pl - direct)
    mean_abs = float(np.mean(np.abs(diffs)))
    long_ok, long_parts = True, []
    for seed in LONG_SEEDS:
        _, t10 = generate(preset("conserved", seed=seed))
        pool = extend_founders(t10.founders, 60, np.random.default_rng(seed))
        data, truth = generate(preset("conserved", seed=seed, n_loci=60, founder_pool=pool))
        start = time.perf_counter()
        res = phase_long(data, LigationConfig(hdp=HDPConfig(seed=seed, xi=1.0)))
        elapsed = time.perf_counter() - start
        err60 = score(truth.haplotypes, res.haplotypes).err_s
        err10 = conserved[seed]["err"]
        long_ok &= elapsed < 600 and err60 <= 2 * err10
        long_parts.append(f"seed {seed}: {err60:.4f} vs 2x{err10:.4f}, {elapsed:.0f}s")
    count = _worked_example_count()
    ok = mean_abs <= 0.01 and long_ok and count == 16
    report(9, "partition-ligation fidelity", ok,
           f"20-SNP mean |PL - direct| {mean_abs:.4f} (signed {np.mean(diffs):+.4f}, <= 0.01); "
           f"60-SNP {'; '.join(long_parts)}; worked-example stitches {count} (== 16)")
    assert ok


# ---------------------------------------------------------------------------
# 10. structural properties

def _ks_concentration(k, n, draws=10000):
    rng = np.random.default_rng(k * 100 + n)
    g, xs = 1.0, []
    for _ in range(draws):
        g = sample_concentration(k, n, 1.0, 1.0, g, rng)
        xs.append(math.log(g))
    grid = np.linspace(-15, 25, 200001)
    lf = np.array([log_concentration_density(x, k, n, 1.0, 1.0) for x in grid])
    cdf = np.cumsum(np.exp(lf - logsumexp(lf)))
    xs = np.sort(xs)
    F = np.interp(xs, grid, cdf)
    m = len(xs)
    return float(max(np.max(np.arange(1, m + 1) / m - F), np.max(F - np.arange(m) / m)))


def test_criterion_10_structural(conserved):
    data, _ = generate(preset("conserved", seed=99))
    counts_ok = True
    for model in (engine.MODEL_DP, engine.MODEL_HDP):
        pop = data.population_index() if model == engine.MODEL_HDP else np.zeros(100, int)
        rng = np.random.default_rng(0)
        state = engine.new_state(data.genotype_array(), pop, int(pop.max()) + 1, 2, rng)
        for it in range(200):
            sweep(state, model, ChainConfig(xi=None if it >= 50 else 1.0), rng,
                  resample_gamma=True)
            try:
                engine.check_counts(state)
            except Exception:
                counts_ok = False
                break
    cfg = HDPConfig(seed=5, burn_in=100, n_samples=100)
    a, b = run_hdp(data, cfg), run_hdp(data, cfg)
    replay_ok = all(getattr(a, f).tobytes() == getattr(b, f).tobytes()
                    for f in ("haplotypes", "pair_support", "k_trace", "k_pop_trace",
                              "theta_trace", "tau_trace", "gamma_trace"))
    consistent_ok = all(r["consistent"] for r in conserved)
    ks = {kn: _ks_concentration(*kn) for kn in ((1, 10), (5, 10), (10, 10))}
    ks_ok = max(ks.values()) < 0.05
    rng = np.random.default_rng(0)
    limit = 0.0
    for _ in range(200):
        m = rng.integers(1, 30, size=rng.integers(1, 8))
        tau = float(rng.uniform(0.1, 10))
        urn = UrnState(m=m[None, :], n=np.ones(len(m)), gamma=1e13, tau=tau)
        limit = max(limit, float(np.max(np.abs(hdp_prior_weights(urn, 0) - crp_weights(m, tau)))))
    ok = counts_ok and replay_ok and consistent_ok and ks_ok and limit <= 1e-10
    report(10, "structural properties", ok,
           f"counts conserved {counts_ok}, byte-identical replay {replay_ok}, "
           f"genotype-consistent at xi=1 {consistent_ok}, KS "
           + ", ".join(f"{kn}={v:.3f}" for kn, v in ks.items())
           + f" (< 0.05), flat-urn limit {limit:.1e} (<= 1e-10)")
    assert ok
