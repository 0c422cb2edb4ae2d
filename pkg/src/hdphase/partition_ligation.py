"""Partition-ligation for long marker sequences.

Short blocks are phased directly, neighbours are stitched into overlapping
double-length blocks, and overlapping blocks are merged pairwise until one
block spans the whole sequence. At each merge the candidate haplotypes come
from the individuals themselves; only individuals whose block haplotypes
disagree on the overlap get the expanded set of recombined candidates.
"""

from __future__ import annotations

import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .chain import PhasingResult, pattern_key
from .core_model import Dataset, InputError, InvariantError
from .hdp_sampler import HDPConfig, run_hdp

log = logging.getLogger(__name__)


@dataclass
class LigationConfig:
    block_length: int = 8
    entropy_threshold: float = 1.5
    pseudocount: float | None = None      # None: 1 / |pool|
    gibbs_iterations: int = 200
    max_combinations: int = 2 ** 12
    threads: int = 1                      # atomic blocks phased concurrently; output unaffected
    hdp: HDPConfig = field(default_factory=HDPConfig)

    def __post_init__(self):
        if self.block_length < 2:
            raise InputError("block_length must be >= 2")
        if self.entropy_threshold < 0:
            raise InputError("entropy_threshold must be >= 0")
        if self.pseudocount is not None and self.pseudocount <= 0:
            raise InputError("pseudocount must be > 0")
        if self.gibbs_iterations < 2:
            raise InputError("gibbs_iterations must be >= 2")


@dataclass
class Block:
    start: int
    end: int
    pool: np.ndarray            # (P, end - start) distinct haplotypes
    pairs: np.ndarray           # (N, 2) indices into pool
    support: np.ndarray | None = None   # (N,) posterior share of the reported pair

    @property
    def length(self) -> int:
        return self.end - self.start

    def haplotypes(self) -> np.ndarray:
        return self.pool[self.pairs]

    @classmethod
    def from_haplotypes(cls, start: int, haps: np.ndarray, support=None) -> "Block":
        haps = np.asarray(haps, dtype=np.int64)
        N, _, T = haps.shape
        pool, inv = np.unique(haps.reshape(2 * N, T), axis=0, return_inverse=True)
        return cls(start, start + T, pool, inv.reshape(N, 2), support)


@dataclass
class Candidates:
    pool: np.ndarray                      # (P, span)
    fixed: dict                           # individual -> (a, b) determined merge
    own: list                             # individual -> pool indices it contributed
    overflow: list                        # individuals whose expansion exceeded the cap


def partition(data: Dataset, T: int) -> list[Dataset]:
    if T < 2:
        raise InputError("block length must be >= 2")
    return [data.subset_loci(s, min(s + T, data.n_loci)) for s in range(0, data.n_loci, T)]


def block_ranges(n_loci: int, T: int) -> list[tuple[int, int]]:
    return [(s, min(s + T, n_loci)) for s in range(0, n_loci, T)]


def phase_atomic(blocks: list[Dataset], cfg: LigationConfig, starts=None,
                 seeds=None) -> list[Block]:
    starts = starts if starts is not None else list(itertools.accumulate(
        [0] + [b.n_loci for b in blocks[:-1]]))
    seeds = seeds if seeds is not None else [cfg.hdp.seed] * len(blocks)

    def one(args):
        b, s, seed = args
        res = run_hdp(b, HDPConfig(**{**cfg.hdp.__dict__, "seed": int(seed)}))
        return Block.from_haplotypes(s, res.haplotypes, res.pair_support)

    jobs = list(zip(blocks, starts, seeds))
    if cfg.threads > 1:
        with ThreadPoolExecutor(cfg.threads) as ex:
            return list(ex.map(one, jobs))
    return [one(j) for j in jobs]


def _merge(lh, rh, overlap):
    return np.concatenate([lh, rh[overlap:]])


def stitch_candidates(left: Block, right: Block, overlap: int,
                      max_combinations: int = 2 ** 12) -> Candidates:
    """Candidate haplotypes for the merged range, built individual by individual."""
    if overlap < 0 or overlap > min(left.length, right.length):
        raise InputError(f"bad overlap {overlap}")
    if left.end - overlap != right.start:
        raise InputError("blocks are not adjacent with the stated overlap")
    if len(left.pairs) != len(right.pairs):
        raise InputError("blocks cover different individuals")
    L, R = left.haplotypes(), right.haplotypes()
    seen: dict = {}
    pool: list = []

    def add(h):
        key = h.tobytes()
        if key not in seen:
            seen[key] = len(pool)
            pool.append(h)
        return seen[key]

    fixed, own, overflow = {}, [], []
    ov_l = slice(left.length - overlap, left.length)
    for i in range(len(L)):
        l0, l1 = L[i]
        r0, r1 = R[i]
        lo = {l0[ov_l].tobytes(), l1[ov_l].tobytes()}
        ro = {r0[:overlap].tobytes(), r1[:overlap].tobytes()}
        mine = []
        if overlap == 0 or lo == ro:
            stitched = []
            for lh in (l0, l1):
                for rh in (r0, r1):
                    if overlap == 0 or np.array_equal(lh[ov_l], rh[:overlap]):
                        stitched.append(add(_merge(lh, rh, overlap)))
            mine = sorted(set(stitched))
            if overlap > 0 and not np.array_equal(l0[ov_l], l1[ov_l]):
                # overlap carries phase: the merge is determined
                a = add(_merge(l0, r0 if np.array_equal(l0[ov_l], r0[:overlap]) else r1, overlap))
                b = add(_merge(l1, r1 if np.array_equal(l1[ov_l], r1[:overlap]) else r0, overlap))
                fixed[i] = (min(a, b), max(a, b))
            elif len(mine) == 1 or _homozygous(l0, l1, r0, r1):
                a, b = _direct_pair(l0, l1, r0, r1, overlap, add)
                fixed[i] = (min(a, b), max(a, b))
        else:
            options = [sorted({int(h[t]) for h in (l0[ov_l], l1[ov_l], r0[:overlap], r1[:overlap])})
                       for t in range(overlap)]
            lefts = {l0[: ov_l.start].tobytes(): l0[: ov_l.start], l1[: ov_l.start].tobytes(): l1[: ov_l.start]}
            rights = {r0[overlap:].tobytes(): r0[overlap:], r1[overlap:].tobytes(): r1[overlap:]}
            n_comb = math.prod(len(o) for o in options) * len(lefts) * len(rights)
            if n_comb > max_combinations:
                overflow.append(i)
                mine = sorted({add(_merge(l0, r0, overlap)), add(_merge(l1, r1, overlap))})
            else:
                for lf in lefts.values():
                    for mid in itertools.product(*options):
                        for rf in rights.values():
                            mine.append(add(np.concatenate([lf, np.array(mid, dtype=np.int64), rf])))
        own.append(mine)
    span = left.length + right.length - overlap
    arr = np.array(pool, dtype=np.int64).reshape(len(pool), span)
    return Candidates(arr, fixed, own, overflow)


def _homozygous(l0, l1, r0, r1) -> bool:
    return np.array_equal(l0, l1) or np.array_equal(r0, r1)


def _direct_pair(l0, l1, r0, r1, overlap, add):
    return add(_merge(l0, r0, overlap)), add(_merge(l1, r1, overlap))


def _consistent_pairs(pool: np.ndarray, genotype: np.ndarray) -> list[tuple[int, int]]:
    """Unordered pool pairs (a <= b) that explain ``genotype`` (span, 2); -1 marks missing."""
    g0, g1 = genotype[:, 0], genotype[:, 1]
    obs = g0 >= 0
    ok = np.all(~obs | (pool == g0) | (pool == g1), axis=1)
    idx = np.flatnonzero(ok)
    if len(idx) == 0:
        return []
    sub = pool[idx][:, obs]
    comp = np.where(sub == g0[obs], g1[obs], g0[obs])
    lookup: dict = {}
    for k, row in zip(idx, sub):
        lookup.setdefault(row.tobytes(), []).append(int(k))
    out = set()
    for k, c in zip(idx, comp):
        for m in lookup.get(c.tobytes(), []):
            out.add((min(int(k), m), max(int(k), m)))
    return sorted(out)


def _pair_entropy(counts: dict) -> float:
    c = np.array(list(counts.values()), dtype=float)
    if c.sum() == 0:
        return 0.0
    p = c / c.sum()
    return float(-np.sum(p * np.log(p)))


def ligate(left: Block, right: Block, overlap: int, cfg: LigationConfig,
           genotypes: np.ndarray, rng: np.random.Generator):
    """Merge two adjacent blocks; returns (Block, per-individual pair entropies, info)."""
    cand = stitch_candidates(left, right, overlap, cfg.max_combinations)
    pool = cand.pool
    N = len(left.pairs)
    span = right.end - left.start
    G = np.asarray(genotypes)
    if G.shape[:2] != (N, span):
        raise InputError("genotypes do not cover the merged range")
    psi = cfg.pseudocount if cfg.pseudocount is not None else 1.0 / len(pool)
    free = [i for i in range(N) if i not in cand.fixed]
    options = {}
    for i in free:
        opts = _consistent_pairs(pool, G[i])
        if not opts:
            raise InvariantError(f"individual {i} has no genotype-consistent candidate pair")
        options[i] = np.array(opts, dtype=np.int64)
    current = np.zeros((N, 2), dtype=np.int64)
    counts = np.zeros(len(pool))
    for i in range(N):
        if i in cand.fixed:
            current[i] = cand.fixed[i]
        else:
            own = set(cand.own[i])
            opts = options[i]
            pick = [r for r, (a, b) in enumerate(opts) if a in own and b in own]
            current[i] = opts[pick[0] if pick else 0]
        np.add.at(counts, current[i], 1.0)
    tallies = {i: {} for i in free}
    burn = cfg.gibbs_iterations // 2
    for it in range(cfg.gibbs_iterations):
        for i in free:
            np.add.at(counts, current[i], -1.0)
            a, b = options[i][:, 0], options[i][:, 1]
            same = a == b
            w = np.where(same, (counts[a] + psi) * (counts[a] + 1.0 + psi),
                         2.0 * (counts[a] + psi) * (counts[b] + psi))
            r = rng.choice(len(w), p=w / w.sum())
            current[i] = options[i][r]
            np.add.at(counts, current[i], 1.0)
            if it >= burn:
                key = (int(current[i, 0]), int(current[i, 1]))
                tallies[i][key] = tallies[i].get(key, 0) + 1
    support = np.ones(N)
    entropy = np.zeros(N)
    for i in free:
        best = max(sorted(tallies[i]), key=lambda k: tallies[i][k])
        current[i] = best
        total = sum(tallies[i].values())
        support[i] = tallies[i][best] / total
        entropy[i] = _pair_entropy(tallies[i])
    haps = pool[current]
    block = Block.from_haplotypes(left.start, haps, support)
    info = {"pool": len(pool), "free": len(free), "overflow": list(cand.overflow)}
    return block, entropy, info


def _rephase(data: Dataset, block: Block, cfg: LigationConfig, seed: int) -> Block:
    sub = data.subset_loci(block.start, block.end)
    res = run_hdp(sub, HDPConfig(**{**cfg.hdp.__dict__, "seed": int(seed)}),
                  init_haplotypes=block.haplotypes())
    return Block.from_haplotypes(block.start, res.haplotypes, res.pair_support)


def _ligate_step(data, left, right, cfg, rng, seed, G):
    overlap = left.end - right.start
    merged, entropy, info = ligate(left, right, overlap, cfg, G[:, left.start:right.end], rng)
    redo = bool(info["overflow"]) or (len(entropy) and entropy.max() > cfg.entropy_threshold)
    if redo:
        merged = _rephase(data, merged, cfg, seed)
    info.update(start=left.start, end=right.end, overlap=overlap, rephased=redo,
                max_entropy=float(entropy.max()) if len(entropy) else 0.0)
    return merged, info


def phase_long(data: Dataset, cfg: LigationConfig | None = None) -> PhasingResult:
    cfg = cfg or LigationConfig()
    T = cfg.block_length
    if data.n_loci <= T:
        return run_hdp(data, cfg.hdp)
    ranges = block_ranges(data.n_loci, T)
    ss = np.random.SeedSequence(cfg.hdp.seed)
    atom_seeds, lig_seed = ss.spawn(2)
    seeds = [int(s.generate_state(1)[0]) for s in atom_seeds.spawn(len(ranges))]
    rng = np.random.default_rng(lig_seed)
    G = data.genotype_array()
    blocks = phase_atomic([data.subset_loci(a, b) for a, b in ranges], cfg,
                          [a for a, _ in ranges], seeds)
    steps = []
    # every neighbouring pair: L - 1 blocks of length 2T overlapping on T
    level = []
    for left, right in zip(blocks[:-1], blocks[1:]):
        merged, info = _ligate_step(data, left, right, cfg, rng, rng.integers(2**31 - 1), G)
        level.append(merged)
        steps.append({"round": 0, **info})
    round_no = 1
    while len(level) > 1:
        nxt = []
        for k in range(0, len(level) - 1, 2):
            merged, info = _ligate_step(data, level[k], level[k + 1], cfg, rng,
                                        rng.integers(2**31 - 1), G)
            nxt.append(merged)
            steps.append({"round": round_no, **info})
        if len(level) % 2:
            nxt.append(level[-1])
        if len(nxt) > 1 and nxt[-1].end <= nxt[-2].end:
            raise InvariantError("ligation did not extend coverage")
        level = nxt
        round_no += 1
    final = level[0]
    if (final.start, final.end) != (0, data.n_loci):
        raise InvariantError("ligation did not cover the sequence")
    haps = final.haplotypes()
    pop = data.population_index()
    hap_freqs = []
    for j in range(data.n_populations):
        rows = haps[pop == j].reshape(-1, data.n_loci)
        uniq, counts = np.unique(rows, axis=0, return_counts=True)
        hap_freqs.append({pattern_key(u): c / len(rows) for u, c in zip(uniq, counts)})
    return PhasingResult(
        ids=data.ids(), population=pop, population_names=list(data.population_names),
        haplotypes=haps, pair_support=final.support if final.support is not None else np.ones(len(haps)),
        hap_freqs=hap_freqs,
        diagnostics={"model": "hdp", "mode": "partition-ligation", "block_length": T,
                     "n_blocks": len(ranges), "steps": steps})
