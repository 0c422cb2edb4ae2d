"""Chain driver, posterior recording and summarization shared by the DP and HDP phasers."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .core_model import Dataset, Hyperparams, InputError, validate_dataset
from . import engine
from .engine import SamplerState

log = logging.getLogger(__name__)


@dataclass
class ChainConfig:
    hyperparams: Hyperparams = field(default_factory=Hyperparams)
    burn_in: int = 1000
    n_samples: int = 1000
    seed: int = 0
    tau: float = 1.0
    resample_tau: bool = True
    xi: float | None = None        # None: fidelity integrated out; float: pinned
    site_update: str = "pair"      # "pair" (joint per-site) or "single"
    check_every: int = 0           # 0 disables periodic invariant checks
    # share of burn-in run with fidelity pinned at 1 before it is integrated out;
    # keeps the single-founder start from collapsing into "everything is a typing error"
    pinned_warmup: float = 0.5
    # shared tau: "pooled" treats all cells as one urn, "product" multiplies per-population urns
    tau_pooling: str = "product"

    def __post_init__(self):
        if self.burn_in < 0 or self.n_samples < 1:
            raise InputError("need burn_in >= 0 and n_samples >= 1")
        if self.tau <= 0:
            raise InputError("tau must be > 0")
        if self.xi is not None and not 0.0 <= self.xi <= 1.0:
            raise InputError("xi must lie in [0, 1]")
        if self.tau_pooling not in ("pooled", "product"):
            raise InputError("tau_pooling must be 'pooled' or 'product'")
        if not 0.0 <= self.pinned_warmup <= 1.0:
            raise InputError("pinned_warmup must lie in [0, 1]")
        if self.site_update not in ("pair", "single"):
            raise InputError("site_update must be 'pair' or 'single'")

    @property
    def iterations(self) -> int:
        return self.burn_in + self.n_samples


def pattern_key(row) -> str:
    row = np.asarray(row)
    if row.size and row.max(initial=0) > 9:
        return ".".join(str(int(a)) for a in row)
    return "".join(str(int(a)) for a in row)


@dataclass
class FounderSummary:
    pattern: str
    frequency: np.ndarray      # (J,) mean m_jk / m_j over samples
    theta: float               # posterior mean mutation rate, averaged over samples
    support: float             # fraction of samples in which the pattern was represented

    @property
    def populations(self) -> list[int]:
        return [j for j, f in enumerate(self.frequency) if f > 0]


@dataclass
class PhasingResult:
    ids: list[str]
    population: np.ndarray
    population_names: list[str]
    haplotypes: np.ndarray              # (N, 2, T)
    pair_support: np.ndarray            # (N,) posterior share of the reported pair
    founders: list[FounderSummary] = field(default_factory=list)
    k_trace: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    k_pop_trace: np.ndarray = field(default_factory=lambda: np.zeros((0, 0), dtype=int))
    theta_trace: np.ndarray = field(default_factory=lambda: np.zeros(0))
    tau_trace: np.ndarray = field(default_factory=lambda: np.zeros(0))
    gamma_trace: np.ndarray = field(default_factory=lambda: np.zeros(0))
    hap_freqs: list[dict] = field(default_factory=list)
    pattern_trace: list = field(default_factory=list)   # founder patterns per sample
    pair_marginals: list = field(default_factory=list)  # per individual: {"h0|h1": share}
    diagnostics: dict = field(default_factory=dict)

    @property
    def n_loci(self) -> int:
        return self.haplotypes.shape[2]

    @property
    def k_mode(self) -> int:
        if len(self.k_trace) == 0:
            return 0
        vals, counts = np.unique(self.k_trace, return_counts=True)
        return int(vals[np.argmax(counts)])

    @property
    def k_mean(self) -> float:
        return float(np.mean(self.k_trace)) if len(self.k_trace) else float("nan")

    @property
    def k_pop_mode(self) -> np.ndarray:
        out = []
        for col in np.asarray(self.k_pop_trace).T:
            vals, counts = np.unique(col, return_counts=True)
            out.append(int(vals[np.argmax(counts)]))
        return np.array(out, dtype=int)

    @property
    def k_pop_mean(self) -> np.ndarray:
        return np.asarray(self.k_pop_trace, dtype=float).mean(axis=0)

    @property
    def theta_mean(self) -> float:
        return float(np.mean(self.theta_trace)) if len(self.theta_trace) else float("nan")

    def k_distribution(self) -> dict[int, float]:
        vals, counts = np.unique(self.k_trace, return_counts=True)
        return {int(v): c / counts.sum() for v, c in zip(vals, counts)}

    def shared_founders(self, min_freq: float = 0.0) -> list[FounderSummary]:
        return [f for f in self.founders if np.count_nonzero(f.frequency > min_freq) >= 2]


# ---------------------------------------------------------------------------
# concentration parameters

def log_concentration_density(x: float, k, n, iota: float, kappa: float) -> float:
    """Unnormalized log density of log(concentration) given k clusters among n draws.

    ``k`` and ``n`` may be sequences, one entry per urn sharing the concentration.
    """
    g = math.exp(x)
    if not math.isfinite(g) or g <= 0.0:
        return -math.inf
    ks = np.atleast_1d(k)
    ns = np.atleast_1d(n)
    val = (int(ks.sum()) - iota) * x - kappa / g
    for nj in ns:
        val += math.lgamma(g) - math.lgamma(float(nj) + g)
    return val if math.isfinite(val) else -math.inf


def slice_sample_log_concentration(k, n, iota, kappa, current, rng, width=1.0, max_steps=50,
                                   max_shrinks=100) -> float:
    """One stepping-out/shrinkage slice-sampling move on log(concentration)."""
    ks, ns = np.atleast_1d(k), np.atleast_1d(n)
    if ks.shape != ns.shape or np.any(ks < 1) or np.any(ks > ns):
        raise InputError(f"need 1 <= k <= n per urn, got k={k}, n={n}")
    x0 = math.log(current)
    f = lambda x: log_concentration_density(x, k, n, iota, kappa)
    f0 = f(x0)
    if not math.isfinite(f0):
        x0, f0 = 0.0, f(0.0)
    level = f0 + math.log(rng.random())
    left = x0 - width * rng.random()
    right = left + width
    j = int(max_steps * rng.random())
    kk = max_steps - 1 - j
    while j > 0 and f(left) > level:
        left -= width
        j -= 1
    while kk > 0 and f(right) > level:
        right += width
        kk -= 1
    for _ in range(max_shrinks):
        x = left + rng.random() * (right - left)
        if f(x) > level:
            return math.exp(x)
        if x < x0:
            left = x
        else:
            right = x
    raise RuntimeError(f"slice sampler failed to find a point after {max_shrinks} shrinks")


# ---------------------------------------------------------------------------
# driver

def prepare(data: Dataset, pooled: bool = False):
    problems = validate_dataset(data)
    if problems:
        raise InputError("; ".join(problems))
    G = data.genotype_array()
    pop = np.zeros(len(G), dtype=np.int64) if pooled else data.population_index()
    J = 1 if pooled else data.n_populations
    return G, pop, J


def _theta_estimates(state: SamplerState, hyper: Hyperparams) -> np.ndarray:
    K = state.K
    l = state.lmatch[:K].astype(float)
    lp = state.lmis[:K].astype(float)
    return (hyper.beta_h + lp) / (hyper.alpha_h + hyper.beta_h + l + lp)


def sweep(state: SamplerState, model: int, cfg: ChainConfig, rng: np.random.Generator,
          resample_gamma: bool = False, shared_tau: bool = True,
          xi: float | None = ...) -> SamplerState:
    """One three-stage Gibbs sweep in place: concentrations, assignments + founders, haplotypes."""
    hp = cfg.hyperparams
    n_slots = 2 * state.n_individuals
    if model == engine.MODEL_HDP:
        if resample_gamma:
            n_top = int(state.ntop[: state.K].sum())
            state.gamma = slice_sample_log_concentration(
                state.K, n_top, hp.iota, hp.kappa, state.gamma, rng)
        if cfg.resample_tau:
            used = state.m[:, : state.K] >= 1
            if shared_tau and cfg.tau_pooling == "product":
                sizes = state.m.sum(axis=1)
                keep = sizes > 0
                tau = slice_sample_log_concentration(
                    used.sum(axis=1)[keep], sizes[keep], hp.iota, hp.kappa,
                    float(state.tau[0]), rng)
                state.tau[:] = tau
            elif shared_tau:
                tau = slice_sample_log_concentration(
                    int(used.sum()), n_slots, hp.iota, hp.kappa, float(state.tau[0]), rng)
                state.tau[:] = tau
            else:
                sizes = state.m.sum(axis=1)
                for j in range(state.n_populations):
                    state.tau[j] = slice_sample_log_concentration(
                        int(used[j].sum()), int(sizes[j]), hp.iota, hp.kappa,
                        float(state.tau[j]), rng)
    elif cfg.resample_tau:
        state.tau[:] = slice_sample_log_concentration(
            state.K, n_slots, hp.iota, hp.kappa, float(state.tau[0]), rng)

    engine.seed_kernels(int(rng.integers(0, 2**31 - 1)))
    state.K = engine.sweep_assignments(
        model, state.pop, state.H, state.C, state.A, state.cnt, state.nhap, state.lmatch,
        state.lmis, state.m, state.ntop, state.K, state.tau, state.gamma,
        hp.alpha_h, hp.beta_h, state.alphabet_size)
    engine.sweep_founders(state.K, state.A, state.cnt, state.nhap, state.lmatch, state.lmis,
                          hp.alpha_h, hp.beta_h, state.alphabet_size)
    if xi is ...:
        xi = cfg.xi
    xi = -1.0 if xi is None else float(xi)
    mode = engine.SITE_PAIR if cfg.site_update == "pair" else engine.SITE_SINGLE
    engine.sweep_haplotypes(mode, state.G, state.H, state.C, state.A, state.cnt, state.nhap,
                            state.lmatch, state.lmis, state.gstats, hp.alpha_h, hp.beta_h,
                            hp.alpha_g, hp.beta_g, xi, state.logmu, state.alphabet_size)
    return state


@dataclass
class _Recorder:
    n_samples: int
    n_pop: int
    hyper: Hyperparams
    H: list = field(default_factory=list)
    k: list = field(default_factory=list)
    k_pop: list = field(default_factory=list)
    theta: list = field(default_factory=list)
    tau: list = field(default_factory=list)
    gamma: list = field(default_factory=list)
    founder_freq: dict = field(default_factory=dict)
    founder_theta: dict = field(default_factory=dict)
    founder_seen: dict = field(default_factory=dict)
    patterns: list = field(default_factory=list)

    def record(self, state: SamplerState):
        K = state.K
        self.H.append(state.H.astype(np.int8))
        m = state.m[:, :K]
        keys = [pattern_key(state.A[k]) for k in range(K)]
        # founders sharing a pattern describe one ancestral haplotype; count patterns
        self.k.append(len(set(keys)))
        self.k_pop.append(np.array([len({keys[k] for k in np.flatnonzero(m[j] >= 1)})
                                    for j in range(len(m))]))
        th = _theta_estimates(state, self.hyper)
        w = state.nhap[:K]
        self.theta.append(float(np.dot(th, w) / w.sum()))
        self.tau.append(float(state.tau[0]))
        self.gamma.append(float(state.gamma))
        sizes = m.sum(axis=1, keepdims=True)
        freq = m / np.maximum(sizes, 1)
        self.patterns.append(frozenset(keys))
        merged: dict = {}
        for k, key in enumerate(keys):
            f, t, w0 = merged.get(key, (0.0, 0.0, 0.0))
            merged[key] = (f + freq[:, k], t + th[k] * w[k], w0 + w[k])
        for key, (f, t, w0) in merged.items():
            if key not in self.founder_freq:
                self.founder_freq[key] = np.zeros(self.n_pop)
                self.founder_theta[key] = 0.0
                self.founder_seen[key] = 0
            self.founder_freq[key] += f
            self.founder_theta[key] += t / w0
            self.founder_seen[key] += 1


def _canonical_pairs(Hs: np.ndarray) -> np.ndarray:
    """Order each sampled pair lexicographically; input/output (S, 2, T)."""
    h0, h1 = Hs[:, 0, :], Hs[:, 1, :]
    diff = h0 != h1
    first = np.argmax(diff, axis=1)
    rows = np.arange(len(Hs))
    swap = diff.any(axis=1) & (h0[rows, first] > h1[rows, first])
    out = Hs.copy()
    out[swap, 0, :] = h1[swap]
    out[swap, 1, :] = h0[swap]
    return out


def pair_distribution(samples: np.ndarray):
    """Distinct unordered pairs among samples (S, 2, T) with their counts, lexicographic."""
    pairs = _canonical_pairs(samples)
    S, _, T = pairs.shape
    return np.unique(pairs.reshape(S, 2 * T), axis=0, return_counts=True)


def pair_key(pair) -> str:
    return pattern_key(pair[0]) + "|" + pattern_key(pair[1])


def modal_pair(samples: np.ndarray, genotype: np.ndarray, dist=None):
    """Most frequent unordered pair over samples (S, 2, T); returns (pair, share).

    Ties go to the candidate agreeing best with the site-wise majority phase
    relative to the first heterozygous site, then to the lexicographically
    smallest pair.
    """
    S, _, T = samples.shape
    uniq, counts = dist if dist is not None else pair_distribution(samples)
    best = np.flatnonzero(counts == counts.max())
    if len(best) > 1:
        het = [t for t in range(T) if genotype[t, 0] >= 0 and genotype[t, 0] != genotype[t, 1]]
        if len(het) >= 2:
            ref = het[0]
            same = samples[:, 0, het[1:]] == samples[:, 0, [ref]]
            majority = same.mean(axis=0) >= 0.5
            scores = []
            for b in best:
                cand = uniq[b].reshape(2, T)
                rel = cand[0, het[1:]] == cand[0, ref]
                scores.append(int(np.sum(rel == majority)))
            scores = np.asarray(scores)
            best = best[scores == scores.max()]
        best = best[:1]  # np.unique output is lexicographically sorted
    b = int(best[0])
    return uniq[b].reshape(2, T).astype(np.int64), counts[b] / S


def summarize(data: Dataset, pop: np.ndarray, rec: _Recorder, diagnostics: dict) -> PhasingResult:
    Hs = np.stack(rec.H)  # (S, N, 2, T)
    G = data.genotype_array()
    S, N, _, T = Hs.shape
    haps = np.zeros((N, 2, T), dtype=np.int64)
    support = np.zeros(N)
    marginals = []
    for i in range(N):
        dist = pair_distribution(Hs[:, i])
        haps[i], support[i] = modal_pair(Hs[:, i], G[i], dist)
        marginals.append({pair_key(u.reshape(2, T)): c / S for u, c in zip(*dist)})
    J = rec.n_pop
    hap_freqs = []
    for j in range(J):
        rows = Hs[:, pop == j].reshape(-1, T)
        uniq, counts = np.unique(rows, axis=0, return_counts=True)
        hap_freqs.append({pattern_key(u): c / len(rows) for u, c in zip(uniq, counts)})
    founders = []
    for key, freq in rec.founder_freq.items():
        seen = rec.founder_seen[key]
        founders.append(FounderSummary(key, freq / S, rec.founder_theta[key] / seen, seen / S))
    founders.sort(key=lambda f: -f.frequency.sum())
    names = data.population_names if J == data.n_populations else ["pooled"]
    return PhasingResult(
        ids=data.ids(), population=data.population_index(), population_names=list(names),
        haplotypes=haps, pair_support=support, founders=founders,
        k_trace=np.asarray(rec.k), k_pop_trace=np.asarray(rec.k_pop),
        theta_trace=np.asarray(rec.theta), tau_trace=np.asarray(rec.tau),
        gamma_trace=np.asarray(rec.gamma), hap_freqs=hap_freqs, pattern_trace=rec.patterns,
        pair_marginals=marginals, diagnostics=diagnostics)


def run_chain(data: Dataset, model: int, cfg: ChainConfig, pooled: bool = False,
              gamma: float = 1.0, resample_gamma: bool = False, shared_tau: bool = True,
              init_haplotypes=None) -> PhasingResult:
    G, pop, J = prepare(data, pooled=pooled)
    rng = np.random.default_rng(cfg.seed)
    state = engine.new_state(G, pop, J, data.alphabet.size, rng,
                             init_haplotypes=init_haplotypes, gamma=gamma, tau=cfg.tau)
    rec = _Recorder(cfg.n_samples, J, cfg.hyperparams)
    warmup = int(round(cfg.pinned_warmup * cfg.burn_in)) if cfg.xi is None else 0
    for it in range(cfg.iterations):
        sweep(state, model, cfg, rng, resample_gamma=resample_gamma, shared_tau=shared_tau,
              xi=1.0 if it < warmup else cfg.xi)
        if cfg.check_every and it % cfg.check_every == 0:
            engine.check_counts(state)
        if it >= cfg.burn_in:
            rec.record(state)
    diagnostics = {
        "model": "hdp" if model == engine.MODEL_HDP else "dp",
        "iterations": cfg.iterations,
        "burn_in": cfg.burn_in,
        "seed": cfg.seed,
        "final_K": state.K,
        "genotype_stats": state.gstats.tolist(),
    }
    result = summarize(data, pop, rec, diagnostics)
    if pooled:
        # population labels were hidden from the sampler; report frequencies per true label
        result.population_names = list(data.population_names)
        true_pop = data.population_index()
        Hs = np.stack(rec.H)
        result.hap_freqs = []
        for j in range(data.n_populations):
            rows = Hs[:, true_pop == j].reshape(-1, data.n_loci)
            uniq, counts = np.unique(rows, axis=0, return_counts=True)
            result.hap_freqs.append({pattern_key(u): c / len(rows) for u, c in zip(uniq, counts)})
    return result
