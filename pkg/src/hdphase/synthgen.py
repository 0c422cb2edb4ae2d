"""Synthetic multi-population genotypes from shared and private founders."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .core_model import BIALLELIC, AlleleAlphabet, Dataset, InputError, canonicalize_genotype
from .likelihoods import EXACT, genotype_mismatch_class, mismatch_normalizers


@dataclass
class SimSpec:
    n_populations: int = 5
    individuals_per_population: int = 20
    founders_per_population: int = 5
    shared_founders: int = 2
    n_loci: int = 10
    theta: float = 0.01
    genotype_error: float = 0.0
    seed: int = 0
    founder_pool: np.ndarray | None = None   # user-supplied patterns, shared ones first
    alphabet_size: int = 2

    def __post_init__(self):
        for name in ("n_populations", "individuals_per_population", "founders_per_population",
                     "n_loci"):
            if getattr(self, name) < 1:
                raise InputError(f"{name} must be positive")
        if not 0 <= self.shared_founders <= self.founders_per_population:
            raise InputError("shared_founders must lie in [0, founders_per_population]")
        for name in ("theta", "genotype_error"):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise InputError(f"{name} must lie in [0, 1)")
        if self.alphabet_size < 2:
            raise InputError("alphabet_size must be >= 2")

    @property
    def total_founders(self) -> int:
        private = self.founders_per_population - self.shared_founders
        return self.shared_founders + self.n_populations * private


PRESETS = {
    "conserved": dict(theta=0.01),
    "diverse": dict(theta=0.05),
}


def preset(name: str, **overrides) -> SimSpec:
    if name not in PRESETS:
        raise InputError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return SimSpec(**{**PRESETS[name], **overrides})


@dataclass
class GroundTruth:
    founders: np.ndarray          # (F, T) distinct founder patterns, shared ones first
    population_founders: list     # per population: indices into ``founders``
    haplotypes: np.ndarray        # (N, 2, T)
    assignments: np.ndarray       # (N, 2) founder index per slot
    population: np.ndarray        # (N,)
    ids: list = field(default_factory=list)

    @property
    def shared(self) -> list[int]:
        sets = [set(p) for p in self.population_founders]
        return sorted(set.intersection(*sets)) if sets else []


def _distinct_patterns(rng, count, n_loci, asz, existing=(), max_tries=1000):
    seen = {tuple(p) for p in existing}
    out = []
    tries = 0
    while len(out) < count:
        cand = tuple(rng.integers(0, asz, size=n_loci))
        tries += 1
        if cand in seen:
            if tries > max_tries + count:
                raise InputError(f"could not draw {count} distinct founders on {n_loci} loci")
            continue
        seen.add(cand)
        out.append(cand)
    return np.array(out, dtype=np.int64).reshape(count, n_loci)


def mutate(rng, founder, theta, asz):
    hap = founder.copy()
    hit = rng.random(len(hap)) < theta
    if hit.any():
        shift = rng.integers(1, asz, size=hit.sum())
        hap[hit] = (hap[hit] + shift) % asz
    return hap


def noisy_genotype(rng, h0, h1, error, asz):
    """Observed genotype at every locus under the uniform-within-class error channel."""
    pairs = list(itertools.combinations_with_replacement(range(asz), 2))
    out = []
    for a, b in zip(h0, h1):
        true = canonicalize_genotype((a, b), AlleleAlphabet(asz))
        if error == 0.0 or rng.random() >= error:
            out.append(true)
            continue
        mu1, mu2 = mismatch_normalizers(a, b, asz)
        probs = np.array([0.0 if genotype_mismatch_class(g, a, b) == EXACT
                          else (mu1 if genotype_mismatch_class(g, a, b) == 1 else mu2)
                          for g in pairs])
        out.append(pairs[rng.choice(len(pairs), p=probs / probs.sum())])
    return out


def generate(spec: SimSpec) -> tuple[Dataset, GroundTruth]:
    rng = np.random.default_rng(spec.seed)
    asz = spec.alphabet_size
    private = spec.founders_per_population - spec.shared_founders
    if spec.founder_pool is not None:
        founders = np.asarray(spec.founder_pool, dtype=np.int64)
        if len(founders) < spec.total_founders:
            raise InputError(f"founder pool has {len(founders)} patterns, need {spec.total_founders}")
        founders = founders[: spec.total_founders]
        if len({tuple(f) for f in founders}) != len(founders):
            raise InputError("founder pool patterns are not distinct")
        if founders.shape[1] != spec.n_loci:
            raise InputError("founder pool length differs from n_loci")
    else:
        founders = _distinct_patterns(rng, spec.total_founders, spec.n_loci, asz)
    shared = list(range(spec.shared_founders))
    pop_founders = [shared + list(range(spec.shared_founders + j * private,
                                        spec.shared_founders + (j + 1) * private))
                    for j in range(spec.n_populations)]
    n = spec.n_populations * spec.individuals_per_population
    haps = np.zeros((n, 2, spec.n_loci), dtype=np.int64)
    assign = np.zeros((n, 2), dtype=np.int64)
    pop = np.repeat(np.arange(spec.n_populations), spec.individuals_per_population)
    alphabet = AlleleAlphabet(asz) if asz != 2 else BIALLELIC
    genotypes = []
    for i in range(n):
        choices = pop_founders[pop[i]]
        for e in range(2):
            k = choices[rng.integers(len(choices))]
            assign[i, e] = k
            haps[i, e] = mutate(rng, founders[k], spec.theta, asz)
        genotypes.append(noisy_genotype(rng, haps[i, 0], haps[i, 1], spec.genotype_error, asz))
    ids = [f"p{pop[i]}_i{i % spec.individuals_per_population}" for i in range(n)]
    G = np.array(genotypes, dtype=np.int64)
    data = Dataset.from_arrays(G, pop, ids, [f"pop{j}" for j in range(spec.n_populations)],
                               alphabet)
    truth = GroundTruth(founders, pop_founders, haps, assign, pop, ids)
    return data, truth


def extend_founders(pool: np.ndarray, new_T: int, rng=None, alphabet_size: int = 2,
                    max_tries: int = 100) -> np.ndarray:
    """Append independent uniform alleles so every founder spans ``new_T`` loci.

    Row identity is kept, so a shared founder (one row reused by several
    populations) stays identical everywhere it is used.
    """
    pool = np.asarray(pool, dtype=np.int64)
    cur = pool.shape[1]
    if new_T < cur:
        raise InputError("new_T must be >= current length")
    if new_T == cur:
        return pool.copy()
    rng = rng if rng is not None else np.random.default_rng(0)
    for _ in range(max_tries):
        tail = rng.integers(0, alphabet_size, size=(len(pool), new_T - cur))
        out = np.concatenate([pool, tail], axis=1)
        if len({tuple(r) for r in out}) == len(out):
            return out
    raise InputError("could not extend founders to distinct patterns")


def truth_haplotype_frequencies(truth: GroundTruth, n_populations: int) -> list[dict]:
    from .chain import pattern_key
    out = []
    for j in range(n_populations):
        rows = truth.haplotypes[truth.population == j].reshape(-1, truth.haplotypes.shape[2])
        uniq, counts = np.unique(rows, axis=0, return_counts=True)
        out.append({pattern_key(u): c / len(rows) for u, c in zip(uniq, counts)})
    return out
