"""Plain-text formats: genotypes, haplotypes, founder reports, configs, manifests."""

from __future__ import annotations

import hashlib
import json
import platform
from pathlib import Path

import numpy as np

from . import __version__
from .core_model import (BIALLELIC, MISSING, AlleleAlphabet, Dataset, Individual, InputError,
                   canonicalize_genotype, validate_dataset)

_BIALLELIC_CODES = {"0": (0, 0), "1": (0, 1), "2": (1, 1)}
_BIALLELIC_WRITE = {v: k for k, v in _BIALLELIC_CODES.items()}


def _lines(source) -> list[str]:
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source
                                    and Path(source).exists()):
        try:
            return Path(source).read_text(encoding="utf-8").splitlines()
        except UnicodeDecodeError as e:
            raise InputError(f"{source}: not UTF-8 text ({e})") from None
    return str(source).splitlines()


def _parse_site(tok: str, alphabet: AlleleAlphabet, where: str):
    if tok == "?":
        return MISSING
    if "/" in tok:
        parts = tok.split("/")
        if len(parts) != 2 or not all(p.isdigit() for p in parts):
            raise InputError(f"{where}: bad genotype {tok!r}")
        a, b = int(parts[0]), int(parts[1])
    elif alphabet.size == 2 and tok in _BIALLELIC_CODES:
        a, b = _BIALLELIC_CODES[tok]
    else:
        raise InputError(f"{where}: bad genotype {tok!r}")
    try:
        return canonicalize_genotype((a, b), alphabet)
    except InputError as e:
        raise InputError(f"{where}: {e}") from None


def parse_dataset(source) -> Dataset:
    """Read the genotype format; ``source`` is a path or the file text.

    Header ``#loci T`` (required) and ``#alphabet k`` (optional, default 2),
    then ``id population g_1 ... g_T`` per line. Blank lines and other
    ``#`` lines are ignored.
    """
    n_loci = None
    alphabet = BIALLELIC
    pops: dict[str, list[Individual]] = {}
    for ln, raw in enumerate(_lines(source), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, _, val = line[1:].partition(" ")
            if key in ("loci", "alphabet"):
                if n_loci is not None and pops:
                    raise InputError(f"line {ln}: header after data")
                try:
                    num = int(val.strip())
                except ValueError:
                    raise InputError(f"line {ln}: #{key} needs an integer") from None
                if key == "loci":
                    if num < 1:
                        raise InputError(f"line {ln}: #loci must be positive")
                    n_loci = num
                else:
                    alphabet = AlleleAlphabet(num) if num != 2 else BIALLELIC
            continue
        if n_loci is None:
            raise InputError(f"line {ln}: data before the #loci header")
        toks = line.split()
        if len(toks) != n_loci + 2:
            raise InputError(f"line {ln}: expected {n_loci} genotypes, found {len(toks) - 2}")
        ident, pop = toks[0], toks[1]
        sites = [_parse_site(t, alphabet, f"line {ln} locus {s + 1}")
                 for s, t in enumerate(toks[2:])]
        pops.setdefault(pop, []).append(Individual(ident, sites))
    if n_loci is None:
        raise InputError("missing #loci header")
    if not pops:
        raise InputError("no individuals")
    data = Dataset(list(pops.values()), list(pops.keys()), alphabet)
    problems = validate_dataset(data)
    if problems:
        raise InputError("; ".join(problems))
    return data


def format_dataset(data: Dataset) -> str:
    out = [f"#loci {data.n_loci}"]
    if data.alphabet.size != 2:
        out.append(f"#alphabet {data.alphabet.size}")
    for j, ind in data.individuals():
        toks = []
        for g in ind.genotype:
            if g is MISSING:
                toks.append("?")
            elif data.alphabet.size == 2:
                toks.append(_BIALLELIC_WRITE[tuple(g)])
            else:
                toks.append(f"{g[0]}/{g[1]}")
        out.append(" ".join([ind.id, data.population_names[j], *toks]))
    return "\n".join(out) + "\n"


def _allele_string(row) -> str:
    row = np.asarray(row)
    if row.size and row.max() > 9:
        return ",".join(str(int(a)) for a in row)
    return "".join(str(int(a)) for a in row)


def _parse_alleles(tok: str, where: str) -> list[int]:
    parts = tok.split(",") if "," in tok else list(tok)
    if not all(p.isdigit() for p in parts):
        raise InputError(f"{where}: bad allele string {tok!r}")
    return [int(p) for p in parts]


def format_haplotypes(ids, population_labels, haplotypes) -> str:
    """Two lines per individual: ``id population e alleles``."""
    out = []
    for ident, pop, pair in zip(ids, population_labels, np.asarray(haplotypes)):
        for e in range(2):
            out.append(f"{ident} {pop} {e} {_allele_string(pair[e])}")
    return "\n".join(out) + "\n"


def parse_haplotypes(source):
    """Returns (ids, population labels, (N, 2, T) array); lines may come in any order."""
    rows: dict[str, dict] = {}
    order: list[str] = []
    T = None
    for ln, raw in enumerate(_lines(source), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        toks = line.split()
        if len(toks) != 4 or toks[2] not in ("0", "1"):
            raise InputError(f"line {ln}: expected 'id population e alleles'")
        ident, pop, e = toks[0], toks[1], int(toks[2])
        alleles = _parse_alleles(toks[3], f"line {ln}")
        if T is None:
            T = len(alleles)
        elif len(alleles) != T:
            raise InputError(f"line {ln}: {len(alleles)} alleles, expected {T}")
        if ident not in rows:
            rows[ident] = {"pop": pop}
            order.append(ident)
        elif rows[ident]["pop"] != pop:
            raise InputError(f"line {ln}: individual {ident!r} changes population")
        if e in rows[ident]:
            raise InputError(f"line {ln}: duplicate haplotype {e} for {ident!r}")
        rows[ident][e] = alleles
    missing = [i for i in order if 0 not in rows[i] or 1 not in rows[i]]
    if missing:
        raise InputError(f"individuals lacking two haplotypes: {missing[:5]}")
    if not order:
        raise InputError("no haplotypes")
    haps = np.array([[rows[i][0], rows[i][1]] for i in order], dtype=np.int64)
    return order, [rows[i]["pop"] for i in order], haps


def format_founders(result) -> str:
    names = list(result.population_names)
    head = ["pattern", *[f"freq_{n}" for n in names], "theta", "support", "shared_by"]
    out = ["\t".join(head)]
    for f in result.founders:
        used = [names[j] for j, v in enumerate(f.frequency) if v > 0]
        out.append("\t".join([f.pattern, *[f"{v:.6f}" for v in f.frequency], f"{f.theta:.6f}",
                              f"{f.support:.4f}", ",".join(used) or "-"]))
    return "\n".join(out) + "\n"


def format_truth_founders(truth, population_names) -> str:
    out = ["pattern\tpopulations"]
    for k, row in enumerate(truth.founders):
        used = [population_names[j] for j, fs in enumerate(truth.population_founders) if k in fs]
        out.append(f"{_allele_string(row)}\t{','.join(used)}")
    return "\n".join(out) + "\n"


def parse_config(source) -> dict[str, str]:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out: dict[str, str] = {}
    for ln, raw in enumerate(_lines(source), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"config line {ln}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        if not key:
            raise InputError(f"config line {ln}: empty key")
        out[key.replace("-", "_")] = val
    return out


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(path, command: str, config: dict, seed: int, inputs: dict) -> None:
    manifest = {
        "command": command,
        "version": __version__,
        "seed": seed,
        "config": config,
        "inputs": {k: {"path": str(v), "sha256": file_digest(v)} for k, v in inputs.items()},
        "python": platform.python_version(),
        "numpy": np.__version__,
    }
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n",
                          encoding="utf-8")
