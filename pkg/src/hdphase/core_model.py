"""Shared domain types: alleles, genotypes, datasets, founders, urn counts."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MISSING = None  # a GenotypeSite value meaning "not observed"
MISSING_CODE = -1  # array encoding of a missing allele


class InputError(ValueError):
    """Malformed user input (bad symbols, ragged data, unparsable files)."""


class InvariantError(RuntimeError):
    """Internal bookkeeping drifted from its from-scratch recomputation."""


class BoundsError(RuntimeError):
    """A requested computation exceeds a configured resource bound."""


@dataclass(frozen=True)
class AlleleAlphabet:
    size: int = 2

    def __post_init__(self):
        if self.size < 2:
            raise InputError(f"alphabet size must be >= 2, got {self.size}")

    @property
    def symbols(self) -> range:
        return range(self.size)

    def __contains__(self, symbol) -> bool:
        return isinstance(symbol, (int, np.integer)) and 0 <= symbol < self.size


BIALLELIC = AlleleAlphabet(2)


def canonicalize_genotype(pair, alphabet: AlleleAlphabet = BIALLELIC) -> tuple[int, int]:
    """Return the unordered allele pair with the smaller symbol first."""
    if pair is MISSING:
        return MISSING
    a, b = pair
    for s in (a, b):
        if s not in alphabet:
            raise InputError(f"allele {s!r} outside alphabet of size {alphabet.size}")
    a, b = int(a), int(b)
    return (a, b) if a <= b else (b, a)


def het_sites(genotype) -> list[int]:
    """Indices of heterozygous (two distinct alleles) non-missing sites."""
    return [t for t, g in enumerate(genotype) if g is not MISSING and g[0] != g[1]]


@dataclass
class Individual:
    id: str
    genotype: list  # list of (a, b) canonical pairs or MISSING


@dataclass
class Dataset:
    """Genotypes grouped by population, in input order."""

    populations: list[list[Individual]]
    population_names: list[str] = field(default_factory=list)
    alphabet: AlleleAlphabet = BIALLELIC

    def __post_init__(self):
        if not self.population_names:
            self.population_names = [str(j) for j in range(len(self.populations))]

    @property
    def n_populations(self) -> int:
        return len(self.populations)

    @property
    def n_individuals(self) -> int:
        return sum(len(p) for p in self.populations)

    @property
    def n_loci(self) -> int:
        for pop in self.populations:
            for ind in pop:
                return len(ind.genotype)
        return 0

    def individuals(self):
        """Yield (population index, individual) in input order."""
        for j, pop in enumerate(self.populations):
            for ind in pop:
                yield j, ind

    def ids(self) -> list[str]:
        return [ind.id for _, ind in self.individuals()]

    def population_index(self) -> np.ndarray:
        return np.array([j for j, _ in self.individuals()], dtype=np.int64)

    def genotype_array(self) -> np.ndarray:
        """(N, T, 2) int64 array of canonical pairs, MISSING_CODE for missing."""
        n, t = self.n_individuals, self.n_loci
        out = np.full((n, t, 2), MISSING_CODE, dtype=np.int64)
        for i, (_, ind) in enumerate(self.individuals()):
            for s, g in enumerate(ind.genotype):
                if g is not MISSING:
                    out[i, s] = g
        return out

    def subset_loci(self, start: int, stop: int) -> "Dataset":
        pops = [
            [Individual(ind.id, list(ind.genotype[start:stop])) for ind in pop]
            for pop in self.populations
        ]
        return Dataset(pops, list(self.population_names), self.alphabet)

    def pooled(self) -> "Dataset":
        """All individuals as a single population (input order kept)."""
        flat = [ind for pop in self.populations for ind in pop]
        return Dataset([flat], ["pooled"], self.alphabet)

    def single_population(self, j: int) -> "Dataset":
        return Dataset([self.populations[j]], [self.population_names[j]], self.alphabet)

    @classmethod
    def from_arrays(cls, genotypes, pop_index, ids=None, population_names=None,
                    alphabet: AlleleAlphabet = BIALLELIC) -> "Dataset":
        """Build from an (N, T, 2) pair array; rows grouped by ``pop_index``."""
        genotypes = np.asarray(genotypes)
        pop_index = np.asarray(pop_index)
        n_pop = int(pop_index.max()) + 1 if len(pop_index) else 0
        if ids is None:
            ids = [f"ind{i}" for i in range(len(genotypes))]
        pops = [[] for _ in range(n_pop)]
        for i, row in enumerate(genotypes):
            sites = [MISSING if a < 0 else canonicalize_genotype((a, b), alphabet) for a, b in row]
            pops[pop_index[i]].append(Individual(ids[i], sites))
        return cls(pops, list(population_names or []), alphabet)


def validate_dataset(d: Dataset) -> list[str]:
    """Every invariant violation as a readable message; empty list means ok."""
    problems = []
    if d.n_populations < 1:
        problems.append("dataset has no populations")
        return problems
    n_loci = None
    seen = set()
    for j, pop in enumerate(d.populations):
        name = d.population_names[j] if j < len(d.population_names) else str(j)
        if not pop:
            problems.append(f"population {name!r} is empty")
        for ind in pop:
            if ind.id in seen:
                problems.append(f"individual {ind.id!r}: duplicate id")
            seen.add(ind.id)
            if n_loci is None:
                n_loci = len(ind.genotype)
            elif len(ind.genotype) != n_loci:
                problems.append(
                    f"individual {ind.id!r}: {len(ind.genotype)} loci, expected {n_loci}")
            for t, g in enumerate(ind.genotype):
                if g is MISSING:
                    continue
                if len(g) != 2 or any(s not in d.alphabet for s in g):
                    problems.append(f"individual {ind.id!r} locus {t}: invalid pair {g!r}")
                elif g[0] > g[1]:
                    problems.append(f"individual {ind.id!r} locus {t}: pair {g!r} not canonical")
    if n_loci == 0:
        problems.append("dataset has zero loci")
    return problems


@dataclass
class Hyperparams:
    """Beta priors for mutation and genotyping fidelity, inverse-Gamma for concentrations.

    ``alpha_h`` pairs with founder-matching alleles and ``beta_h`` with mutated
    ones, so the prior mean mutation rate is ``beta_h / (alpha_h + beta_h)``.
    Likewise ``alpha_g`` pairs with exact genotype matches.
    """

    alpha_h: float = 19.0
    beta_h: float = 1.0
    alpha_g: float = 19.0
    beta_g: float = 1.0
    iota: float = 1.0
    kappa: float = 1.0

    def __post_init__(self):
        for name in ("alpha_h", "beta_h", "alpha_g", "beta_g", "iota", "kappa"):
            if not getattr(self, name) > 0:
                raise InputError(f"hyperparameter {name} must be > 0")


@dataclass
class Founder:
    alleles: np.ndarray
    match_count: int = 0
    mismatch_count: int = 0


@dataclass
class UrnState:
    """Nested urn counts: ``m[j, k]`` bottom-level, ``n[k]`` top-level balls."""

    m: np.ndarray
    n: np.ndarray
    gamma: float = 1.0
    tau: float = 1.0

    @property
    def K(self) -> int:
        return int(np.count_nonzero(np.asarray(self.n) >= 1))
