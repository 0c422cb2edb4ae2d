"""Brute-force posterior for tiny single-population instances.

Sums the joint over every ordered phasing of every individual and every
partition of the haplotype slots into founder blocks. Founder patterns are
summed out analytically per block (loci factorize once the block is fixed),
so the cost is (phasings) x (partitions) rather than that times |A|^(T K).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import betaln, gammaln, logsumexp

from .chain import pair_key
from .core_model import BoundsError, Dataset, Hyperparams, InputError
from .likelihoods import EXACT, genotype_mismatch_class, mismatch_normalizers

MAX_TERMS = 10**8
MAX_INDIVIDUALS = 5
MAX_LOCI = 4


@dataclass
class OracleInstance:
    data: Dataset
    hyperparams: Hyperparams = field(default_factory=Hyperparams)
    tau: float = 1.0
    k_max: int | None = None       # None: every slot may hold its own founder (no truncation)
    xi: float | None = 1.0         # None integrates fidelity out under its Beta prior

    def __post_init__(self):
        if self.data.n_populations != 1:
            raise InputError("the oracle handles a single population")
        if self.tau <= 0:
            raise InputError("tau must be > 0")
        if self.xi is not None and not 0.0 < self.xi <= 1.0:
            raise InputError("xi must lie in (0, 1]")
        n_slots = 2 * self.data.n_individuals
        if self.k_max is None:
            self.k_max = n_slots
        if not 1 <= self.k_max <= n_slots:
            raise InputError(f"k_max must lie in [1, {n_slots}]")


@dataclass
class OraclePosterior:
    pair_marginals: list           # per individual: {"h0|h1": probability}, unordered pairs
    phase_marginals: list          # per individual: same over ordered (slot 0, slot 1) pairs
    k_distribution: dict           # number of blocks -> probability
    log_evidence: float
    n_terms: int
    joint: dict = field(default_factory=dict)   # tuple of ordered pair keys -> probability


def set_partitions(n: int, k_max: int):
    """Restricted growth strings of length n using at most k_max labels."""
    if n == 0:
        yield ()
        return
    labels = [0] * n

    def rec(i, used):
        if i == n:
            yield tuple(labels)
            return
        for b in range(min(used + 1, k_max)):
            labels[i] = b
            yield from rec(i + 1, max(used, b + 1))

    yield from rec(1, 1)


def count_partitions(n: int, k_max: int) -> int:
    """Number of set partitions of n items into at most k_max blocks (Stirling sums)."""
    S = [[0] * (k_max + 1) for _ in range(n + 1)]
    S[0][0] = 1
    for i in range(1, n + 1):
        for k in range(1, k_max + 1):
            S[i][k] = k * S[i - 1][k] + S[i - 1][k - 1]
    return sum(S[n][1:]) if n else 1


def partition_prior(labels, tau: float) -> float:
    """Pólya-urn probability of a labelled clustering, built one draw at a time."""
    counts: dict = {}
    logp = 0.0
    for i, b in enumerate(labels):
        c = counts.get(b, 0)
        logp += math.log((c if c else tau) / (i + tau))
        counts[b] = c + 1
    return math.exp(logp)


def _log_partition_prior(labels, tau: float) -> float:
    sizes = np.bincount(labels)
    n = len(labels)
    return (len(sizes) * math.log(tau) + float(np.sum(gammaln(sizes)))
            + math.lgamma(tau) - math.lgamma(n + tau))


def _phasings(genotype, asz: int, consistent_only: bool) -> np.ndarray:
    """Ordered pairs (c, 2, T) the individual may carry."""
    per_site = []
    for a, b in genotype:
        if a < 0 or not consistent_only:
            per_site.append([(x, y) for x in range(asz) for y in range(asz)])
        elif a == b:
            per_site.append([(a, a)])
        else:
            per_site.append([(a, b), (b, a)])
    combos = list(itertools.product(*per_site))
    return np.array([[[s[0] for s in c], [s[1] for s in c]] for c in combos], dtype=np.int64)


def _genotype_terms(genotype, pairs, asz):
    """Per phasing: (sum of log class normalizers, exact, diff1, diff2) over scored sites."""
    out = np.zeros((len(pairs), 4))
    for c, (h0, h1) in enumerate(pairs):
        for t, g in enumerate(genotype):
            if g[0] < 0:
                continue
            cls = genotype_mismatch_class(tuple(g), int(h0[t]), int(h1[t]))
            out[c, 1 + cls] += 1
            if cls != EXACT:
                mu1, mu2 = mismatch_normalizers(int(h0[t]), int(h1[t]), asz)
                out[c, 0] += math.log(mu1 if cls == 1 else mu2)
    return out


def _block_loglik(haps: np.ndarray, members: list[int], hp: Hyperparams, asz: int) -> np.ndarray:
    """log p(haplotypes in one block) with founder pattern and mutation rate summed out.

    ``haps`` is (C, n_slots, T); returns (C,).
    """
    C, _, T = haps.shape
    sub = haps[:, members, :]
    size = len(members)
    # coef[c, d] = number of founder patterns at total mismatch count d
    coef = np.zeros((C, size * T + 1))
    coef[:, 0] = 1.0
    for t in range(T):
        counts = np.stack([(sub[:, :, t] == a).sum(axis=1) for a in range(asz)], axis=1)
        step = np.zeros((C, size + 1))
        for a in range(asz):
            np.add.at(step, (np.arange(C), size - counts[:, a]), 1.0)
        new = np.zeros_like(coef)
        for d in range(size + 1):
            if d == 0:
                new += coef * step[:, [0]]
            else:
                new[:, d:] += coef[:, :-d] * step[:, [d]]
        coef = new
    d = np.arange(size * T + 1)
    logw = (betaln(hp.alpha_h + size * T - d, hp.beta_h + d) - betaln(hp.alpha_h, hp.beta_h)
            - d * math.log(asz - 1))
    with np.errstate(divide="ignore"):
        return logsumexp(np.log(coef) + logw, axis=1) - T * math.log(asz)


def estimate_terms(inst: OracleInstance) -> int:
    asz = inst.data.alphabet.size
    consistent = inst.xi == 1.0
    G = inst.data.genotype_array()
    n_conf = 1
    for g in G:
        n_conf *= len(_phasings(g, asz, consistent)) if len(g) <= MAX_LOCI else asz ** (2 * len(g))
    return n_conf * count_partitions(2 * inst.data.n_individuals, inst.k_max)


def exact_posterior(inst: OracleInstance, max_terms: int = MAX_TERMS,
                    chunk: int = 256) -> OraclePosterior:
    data, hp = inst.data, inst.hyperparams
    N, T = data.n_individuals, data.n_loci
    if N > MAX_INDIVIDUALS or T > MAX_LOCI:
        raise BoundsError(f"oracle takes at most {MAX_INDIVIDUALS} individuals and {MAX_LOCI} loci, "
                          f"got {N} x {T}")
    n_terms = estimate_terms(inst)
    if n_terms > max_terms:
        raise BoundsError(f"enumeration needs about {n_terms:.3g} terms (limit {max_terms:.3g})")
    asz = data.alphabet.size
    G = data.genotype_array()
    consistent = inst.xi == 1.0
    per_ind = [_phasings(g, asz, consistent) for g in G]
    gterms = [_genotype_terms(g, p, asz) for g, p in zip(G, per_ind)]
    idx = np.array(list(itertools.product(*[range(len(p)) for p in per_ind])), dtype=np.int64)
    idx = idx.reshape(-1, N)
    C = len(idx)
    haps = np.concatenate([per_ind[i][idx[:, i]] for i in range(N)], axis=1)  # (C, 2N, T)

    # genotype factor per configuration
    gsum = sum(gterms[i][idx[:, i]] for i in range(N)) if N else np.zeros((C, 4))
    if inst.xi is None:
        u, u1, u2 = gsum[:, 1], gsum[:, 2], gsum[:, 3]
        log_g = (gsum[:, 0] + betaln(hp.alpha_g + u, hp.beta_g + u1 + u2)
                 - betaln(hp.alpha_g, hp.beta_g))
    elif inst.xi == 1.0:
        log_g = np.zeros(C)
    else:
        log_g = (gsum[:, 0] + gsum[:, 1] * math.log(inst.xi)
                 + (gsum[:, 2] + gsum[:, 3]) * math.log1p(-inst.xi))

    n_slots = 2 * N
    parts = np.array(list(set_partitions(n_slots, inst.k_max)), dtype=np.int64)
    part_prior = np.array([_log_partition_prior(p, inst.tau) for p in parts])
    n_blocks = parts.max(axis=1) + 1
    # every block as a slot bitmask; evaluate each distinct block once
    masks = np.zeros((len(parts), inst.k_max), dtype=np.int64)
    for b in range(inst.k_max):
        masks[:, b] = ((parts == b) * (1 << np.arange(n_slots))).sum(axis=1)
    distinct = np.unique(masks[masks > 0])
    col = {int(m): c for c, m in enumerate(distinct)}
    block_ll = np.empty((C, len(distinct) + 1))
    block_ll[:, -1] = 0.0          # empty block
    for m, c in col.items():
        members = [s for s in range(n_slots) if m >> s & 1]
        block_ll[:, c] = _block_loglik(haps, members, hp, asz)
    mask_cols = np.where(masks > 0, np.vectorize(lambda m: col.get(int(m), -1))(masks), -1)
    mask_cols[mask_cols < 0] = len(distinct)

    # joint[c, p] accumulated in partition chunks
    log_conf = np.empty(C)
    k_acc = np.full(inst.k_max + 1, -np.inf)
    for start in range(0, len(parts), chunk):
        sl = slice(start, start + chunk)
        joint = block_ll[:, mask_cols[sl]].sum(axis=2) + part_prior[sl][None, :] + log_g[:, None]
        part_conf = logsumexp(joint, axis=1)
        log_conf = part_conf if start == 0 else np.logaddexp(log_conf, part_conf)
        per_part = logsumexp(joint, axis=0)
        for k in np.unique(n_blocks[sl]):
            k_acc[k] = np.logaddexp(k_acc[k], logsumexp(per_part[n_blocks[sl] == k]))
    log_z = float(logsumexp(log_conf))
    w = np.exp(log_conf - log_z)

    marginals, ordered = [], []
    for i in range(N):
        acc: dict = {}
        phase: dict = {}
        for c_i, pair in enumerate(per_ind[i]):
            p = float(w[idx[:, i] == c_i].sum())
            phase[pair_key(pair)] = p
            key = pair_key(sorted((tuple(pair[0]), tuple(pair[1]))))
            acc[key] = acc.get(key, 0.0) + p
        marginals.append(acc)
        ordered.append(phase)
    kd = {int(k): float(np.exp(v - log_z)) for k, v in enumerate(k_acc) if np.isfinite(v)}
    keys = [[pair_key(pair) for pair in per_ind[i]] for i in range(N)]
    joint = {tuple(keys[i][c] for i, c in enumerate(row)): float(p) for row, p in zip(idx, w)}
    return OraclePosterior(marginals, ordered, kd, log_z, C * len(parts), joint)


def total_variation(p: dict, q: dict) -> float:
    keys = set(p) | set(q)
    return 0.5 * sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)
