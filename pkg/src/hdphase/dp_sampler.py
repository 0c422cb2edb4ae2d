"""Single-population Dirichlet-process mixture phaser (the flat-urn baseline)."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import engine
from .chain import ChainConfig, PhasingResult, run_chain, sweep
from .core_model import Dataset, InputError
from .engine import SamplerState


@dataclass
class DPConfig(ChainConfig):
    pass


def crp_weights(occupancy, tau: float) -> np.ndarray:
    """Chinese-restaurant predictive: existing clusters by occupancy, new one by tau."""
    n_k = np.asarray(occupancy, dtype=float)
    total = n_k.sum() + tau
    return np.append(n_k, tau) / total


def dp_gibbs_sweep(state: SamplerState, cfg: DPConfig, rng: np.random.Generator) -> SamplerState:
    """One sweep of the flat-urn sampler; ``state`` must hold a single population."""
    if state.n_populations != 1:
        raise InputError("the DP sampler takes a single population; pool or split first")
    return sweep(state, engine.MODEL_DP, cfg, rng)


def run_dp(data: Dataset, cfg: DPConfig | None = None, pooled: bool | None = None) -> PhasingResult:
    """Run the DP phaser.

    A multi-population dataset is pooled into one urn (population labels
    ignored) unless ``pooled=False``, in which case it is rejected; use
    :func:`run_dp_per_population` for independent per-population runs.
    """
    cfg = cfg or DPConfig()
    if data.n_individuals == 0:
        raise InputError("empty dataset")
    if pooled is None:
        pooled = data.n_populations > 1
    if not pooled and data.n_populations != 1:
        raise InputError("run_dp without pooling needs exactly one population")
    return run_chain(data, engine.MODEL_DP, cfg, pooled=pooled)


def run_dp_per_population(data: Dataset, cfg: DPConfig | None = None,
                          threads: int = 1) -> PhasingResult:
    """Independent DP runs on each population, stitched back into one result.

    Each population gets its own sub-seed, so ``threads`` never changes the output.
    """
    cfg = cfg or DPConfig()
    seeds = np.random.SeedSequence(cfg.seed).spawn(data.n_populations)

    def one(j):
        sub_cfg = DPConfig(**{**cfg.__dict__, "seed": int(seeds[j].generate_state(1)[0])})
        return run_dp(data.single_population(j), sub_cfg, pooled=False)

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            parts = list(ex.map(one, range(data.n_populations)))
    else:
        parts = [one(j) for j in range(data.n_populations)]
    return merge_population_results(data, parts)


def merge_population_results(data: Dataset, parts: list[PhasingResult]) -> PhasingResult:
    haps = np.concatenate([p.haplotypes for p in parts])
    support = np.concatenate([p.pair_support for p in parts])
    n = min(len(p.k_trace) for p in parts)
    k_pop = np.stack([p.k_trace[:n] for p in parts], axis=1)
    founders = []
    J = len(parts)
    for j, p in enumerate(parts):
        for f in p.founders:
            freq = np.zeros(J)
            freq[j] = f.frequency[0]
            founders.append(type(f)(f.pattern, freq, f.theta, f.support))
    merged = {}
    for f in founders:
        if f.pattern in merged:
            g = merged[f.pattern]
            g.frequency = g.frequency + f.frequency
            g.theta = (g.theta + f.theta) / 2
            g.support = max(g.support, f.support)
        else:
            merged[f.pattern] = f
    # founders found independently in several populations count once
    k_total = np.array([len(frozenset().union(*(p.pattern_trace[s] for p in parts)))
                        for s in range(n)])
    return PhasingResult(
        ids=data.ids(), population=data.population_index(),
        population_names=list(data.population_names), haplotypes=haps, pair_support=support,
        founders=sorted(merged.values(), key=lambda f: -f.frequency.sum()),
        k_trace=k_total, k_pop_trace=k_pop,
        theta_trace=np.mean([p.theta_trace[:n] for p in parts], axis=0),
        tau_trace=np.mean([p.tau_trace[:n] for p in parts], axis=0),
        gamma_trace=np.zeros(0),
        hap_freqs=[p.hap_freqs[0] for p in parts],
        pair_marginals=[m for p in parts for m in p.pair_marginals],
        diagnostics={"model": "dp", "mode": "per-population",
                     "parts": [p.diagnostics for p in parts]})
