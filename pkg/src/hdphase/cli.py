"""Command-line front end: phase, simulate, evaluate, experiment, oracle-check."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import io
from .core_model import BoundsError, Dataset, Hyperparams, InputError, InvariantError
from .dp_sampler import DPConfig, run_dp, run_dp_per_population
from .hdp_sampler import HDPConfig, run_hdp
from .partition_ligation import LigationConfig, phase_long
from .eval_metrics import mean_freq_kl, score, sign_test
from .synthgen import PRESETS, SimSpec, generate, preset, truth_haplotype_frequencies

log = logging.getLogger("hdphase")

EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_INVARIANT, EXIT_BOUNDS = 0, 1, 2, 3, 4

MODES = {"dp": ("pooled", "per-population"), "hdp": ("hierarchical", "pooled")}

# settings shared by phase and experiment, with their parsers and defaults
_CHAIN_KEYS = {
    "burn_in": (int, 1000), "n_samples": (int, 1000), "seed": (int, 0), "tau": (float, 1.0),
    "xi": (str, "collapsed"), "site_update": (str, "pair"), "pinned_warmup": (float, 0.5),
    "tau_pooling": (str, "product"), "gamma": (float, 1.0),
}
_HYPER_KEYS = {k.name: (float, k.default) for k in dataclasses.fields(Hyperparams)}
_PHASE_KEYS = {
    "model": (str, "hdp"), "mode": (str, None), "pl": (str, "off"), "block_length": (int, 8),
    "entropy_threshold": (float, 1.5), "gibbs_iterations": (int, 200), "threads": (int, 1),
}


def _coerce(key, value, table):
    kind = table[key][0]
    try:
        return kind(value)
    except (TypeError, ValueError):
        raise InputError(f"setting {key!r}: cannot read {value!r} as {kind.__name__}") from None


def resolve_settings(args, tables) -> dict:
    """Defaults, then the ``--config`` file, then explicit flags (flags win)."""
    merged = {}
    for table in tables:
        merged.update({k: v[1] for k, v in table.items()})
    known = {k: t for t in tables for k in t}
    if getattr(args, "config", None):
        for k, v in io.parse_config(Path(args.config)).items():
            if k not in known:
                raise InputError(f"config key {k!r} is not a recognised setting")
            merged[k] = _coerce(k, v, known[k])
    for k in known:
        v = getattr(args, k, None)
        if v is not None:
            merged[k] = _coerce(k, v, known[k])
    return merged


def _xi(value):
    if value in (None, "collapsed", "none", "None"):
        return None
    try:
        return float(value)
    except ValueError:
        raise InputError(f"xi must be a number in [0, 1] or 'collapsed', got {value!r}") from None


def _chain_kwargs(s: dict) -> dict:
    hp = Hyperparams(**{k: s[k] for k in _HYPER_KEYS})
    return dict(hyperparams=hp, burn_in=s["burn_in"], n_samples=s["n_samples"], seed=s["seed"],
                tau=s["tau"], xi=_xi(s["xi"]), site_update=s["site_update"],
                pinned_warmup=s["pinned_warmup"], tau_pooling=s["tau_pooling"])


def run_configured(data: Dataset, s: dict):
    model = s["model"]
    if model not in MODES:
        raise InputError(f"model must be one of {sorted(MODES)}")
    mode = s["mode"] or MODES[model][0]
    if mode not in MODES[model]:
        if mode == "hierarchical":
            raise InputError("mode 'hierarchical' requires model 'hdp'")
        raise InputError(f"model {model!r} supports modes {MODES[model]}")
    pl = str(s["pl"]).lower() in ("on", "true", "1", "yes")
    kw = _chain_kwargs(s)
    if model == "dp":
        if pl:
            raise InputError("partition-ligation runs the hierarchical phaser; use --model hdp")
        cfg = DPConfig(**kw)
        if mode == "per-population":
            return run_dp_per_population(data, cfg, threads=s["threads"])
        return run_dp(data, cfg, pooled=True)
    cfg = HDPConfig(**kw, gamma=s["gamma"])
    if mode == "pooled":
        data = data.pooled()
    if pl:
        lcfg = LigationConfig(block_length=s["block_length"],
                              entropy_threshold=s["entropy_threshold"],
                              gibbs_iterations=s["gibbs_iterations"], threads=s["threads"], hdp=cfg)
        return phase_long(data, lcfg)
    return run_hdp(data, cfg)


def _diagnostics(result) -> dict:
    out = {k: v for k, v in result.diagnostics.items() if k != "parts"}
    if len(result.k_trace):
        out.update(k_mode=result.k_mode, k_mean=result.k_mean,
                   k_pop_mean=[float(v) for v in result.k_pop_mean],
                   theta_mean=result.theta_mean,
                   tau_mean=float(np.mean(result.tau_trace)),
                   k_distribution={str(k): v for k, v in result.k_distribution().items()})
        if len(result.gamma_trace):
            out["gamma_mean"] = float(np.mean(result.gamma_trace))
    out["mean_pair_support"] = float(np.mean(result.pair_support))
    return out


def cmd_phase(args) -> int:
    s = resolve_settings(args, [_CHAIN_KEYS, _HYPER_KEYS, _PHASE_KEYS])
    src = Path(args.input)
    data = io.parse_dataset(src)
    result = run_configured(data, s)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    labels = [data.population_names[j] for j in data.population_index()]
    (out / "haplotypes.txt").write_text(
        io.format_haplotypes(result.ids, labels, result.haplotypes), encoding="utf-8")
    if result.founders:
        (out / "founders.tsv").write_text(io.format_founders(result), encoding="utf-8")
    (out / "diagnostics.json").write_text(
        json.dumps(_diagnostics(result), indent=2, sort_keys=True, default=float) + "\n",
        encoding="utf-8")
    io.write_manifest(out / "manifest.json", "phase", s, s["seed"], {"input": src})
    print(f"phased {data.n_individuals} individuals over {data.n_loci} loci -> {out}")
    return EXIT_OK


def _sim_spec(args) -> SimSpec:
    """Preset (flag, else the spec file's ``preset``), then spec-file fields, then flags."""
    fields = {f.name for f in dataclasses.fields(SimSpec)} - {"founder_pool"}
    given = io.parse_config(Path(args.spec)) if args.spec else {}
    name = args.preset or given.pop("preset", None)
    given.pop("preset", None)
    if name is not None and name not in PRESETS:
        raise InputError(f"spec field 'preset': unknown preset {name!r}")
    base = dict(PRESETS[name]) if name else {}
    for k, v in given.items():
        if k not in fields:
            raise InputError(f"spec field {k!r} is not recognised")
        kind = float if k in ("theta", "genotype_error") else int
        try:
            base[k] = kind(v)
        except ValueError:
            raise InputError(f"spec field {k!r}: cannot read {v!r}") from None
    for flag, key in (("theta", "theta"), ("genotype_error", "genotype_error"), ("loci", "n_loci"),
                      ("populations", "n_populations"), ("individuals", "individuals_per_population"),
                      ("founders", "founders_per_population"), ("shared", "shared_founders"),
                      ("seed", "seed")):
        v = getattr(args, flag)
        if v is not None:
            base[key] = v
    if args.founder_pool:
        base["founder_pool"] = _read_patterns(Path(args.founder_pool))
    return SimSpec(**base)


def _read_patterns(path):
    rows = []
    for ln, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tok = line.split()[0]
        if not tok.replace(",", "").isdigit():
            raise InputError(f"{path} line {ln}: bad founder pattern {tok!r}")
        rows.append([int(c) for c in (tok.split(",") if "," in tok else tok)])
    if not rows or len({len(r) for r in rows}) != 1:
        raise InputError(f"{path}: founder patterns missing or of unequal length")
    return np.array(rows, dtype=np.int64)


def cmd_simulate(args) -> int:
    spec = _sim_spec(args)
    data, truth = generate(spec)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "genotypes.txt").write_text(io.format_dataset(data), encoding="utf-8")
    labels = [data.population_names[j] for j in data.population_index()]
    (out / "truth_haplotypes.txt").write_text(
        io.format_haplotypes(data.ids(), labels, truth.haplotypes), encoding="utf-8")
    (out / "truth_founders.tsv").write_text(
        io.format_truth_founders(truth, data.population_names), encoding="utf-8")
    cfg = {k: v for k, v in dataclasses.asdict(spec).items() if k != "founder_pool"}
    inputs = {"founder_pool": Path(args.founder_pool)} if args.founder_pool else {}
    io.write_manifest(out / "manifest.json", "simulate", cfg, spec.seed, inputs)
    print(f"simulated {data.n_individuals} individuals, {len(truth.founders)} founders -> {out}")
    return EXIT_OK


_SCORE_COLUMNS = ["id", "population", "mismatches", "het_sites", "switches"]
_SUMMARY_COLUMNS = ["err_s", "err_s_macro", "d_w", "n_ambiguous", "n_sites"]


def cmd_evaluate(args) -> int:
    pid, ppop, phaps = io.parse_haplotypes(Path(args.pred))
    tid, tpop, thaps = io.parse_haplotypes(Path(args.truth))
    if set(pid) != set(tid):
        only_p = sorted(set(pid) - set(tid))[:5]
        only_t = sorted(set(tid) - set(pid))[:5]
        raise InputError(f"individual ids differ (prediction only: {only_p}, truth only: {only_t})")
    order = {i: k for k, i in enumerate(pid)}
    phaps = phaps[[order[i] for i in tid]]
    if phaps.shape != thaps.shape:
        raise InputError("prediction and truth cover different numbers of loci")
    sc = score(thaps, phaps, tid)
    if args.out:
        with open(args.out, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(_SCORE_COLUMNS)
            for (ident, m, n, d), pop in zip(sc.per_individual, tpop):
                w.writerow([ident, pop, m, n, d])
    summary = [f"{sc.err_s:.6f}", f"{sc.err_s_macro:.6f}", sc.d_w, sc.n_ambiguous, sc.n_sites]
    if args.summary:
        with open(args.summary, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(_SUMMARY_COLUMNS)
            w.writerow(summary)
    print(" ".join(f"{k}={v}" for k, v in zip(_SUMMARY_COLUMNS, summary)))
    return EXIT_OK


_EXPERIMENT_COLUMNS = ["seed", "method", "err_s", "d_w", "k_mode", "k_mean", "theta", "kl", "kl_frequent"]
_METHODS = ("hdp", "dp-pooled", "dp-per-population")


def _experiment_seed(seed: int, s: dict, sim: dict, min_freq: float):
    data, truth = generate(SimSpec(**{**sim, "seed": seed}))
    tf = truth_haplotype_frequencies(truth, data.n_populations)
    kw = {**_chain_kwargs(s), "seed": seed}
    runs = {
        "hdp": lambda: run_hdp(data, HDPConfig(**kw, gamma=s["gamma"])),
        "dp-pooled": lambda: run_dp(data, DPConfig(**kw), pooled=True),
        "dp-per-population": lambda: run_dp_per_population(data, DPConfig(**kw)),
    }
    rows = []
    for name in _METHODS:
        r = runs[name]()
        sc = score(truth.haplotypes, r.haplotypes)
        rows.append([seed, name, sc.err_s, sc.d_w, r.k_mode, r.k_mean, r.theta_mean,
                     mean_freq_kl(tf, r.hap_freqs), mean_freq_kl(tf, r.hap_freqs, min_freq)])
    return rows


def cmd_experiment(args) -> int:
    s = resolve_settings(args, [_CHAIN_KEYS, _HYPER_KEYS, {"threads": (int, 1)}])
    sim = {k: v for k, v in dataclasses.asdict(preset(args.preset)).items()
           if k not in ("seed", "founder_pool")}
    seeds = list(range(args.start_seed, args.start_seed + args.seeds))
    job = lambda sd: _experiment_seed(sd, s, sim, args.min_freq)
    if s["threads"] > 1:
        with ThreadPoolExecutor(s["threads"]) as ex:
            per_seed = list(ex.map(job, seeds))
    else:
        per_seed = [job(sd) for sd in seeds]
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "per_seed.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(_EXPERIMENT_COLUMNS)
        for rows in per_seed:
            w.writerows(rows)
    table = {(r[0], r[1]): r for rows in per_seed for r in rows}
    with open(out / "summary.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["metric", "baseline", "mean_hdp", "mean_baseline", "wins", "n", "p_value"])
        for metric, col in (("err_s", 2), ("kl", 7), ("kl_frequent", 8)):
            for base in _METHODS[1:]:
                h = np.array([table[(sd, "hdp")][col] for sd in seeds])
                b = np.array([table[(sd, base)][col] for sd in seeds])
                wins, n, p = sign_test(b - h)
                w.writerow([metric, base, f"{h.mean():.6f}", f"{b.mean():.6f}", wins, n, f"{p:.6g}"])
    io.write_manifest(out / "manifest.json", "experiment",
                      {**s, "preset": args.preset, "seeds": seeds}, args.start_seed, {})
    print(f"{len(seeds)} seeds x {len(_METHODS)} methods -> {out}")
    return EXIT_OK


def cmd_oracle_check(args) -> int:
    from .exact_oracle import OracleInstance, exact_posterior, total_variation
    data = io.parse_dataset(Path(args.input))
    if data.n_populations != 1:
        data = data.pooled()
    s = resolve_settings(args, [_HYPER_KEYS])
    hp = Hyperparams(**{k: s[k] for k in _HYPER_KEYS})
    xi = _xi(args.xi)
    exact = exact_posterior(OracleInstance(data, hp, tau=args.tau, k_max=args.k_max, xi=xi))
    res = run_dp(data, DPConfig(hyperparams=hp, burn_in=args.burn_in, n_samples=args.sweeps,
                                seed=args.seed, tau=args.tau, resample_tau=False, xi=xi,
                                pinned_warmup=0.0), pooled=False)
    ok = True
    for ident, p, q in zip(data.ids(), exact.pair_marginals, res.pair_marginals):
        tv = total_variation(p, q)
        ok &= tv <= args.tolerance
        print(f"{ident}\ttv={tv:.4f}\t{'PASS' if tv <= args.tolerance else 'FAIL'}")
    tvk = total_variation(exact.k_distribution, res.k_distribution())
    print(f"K-distribution\ttv={tvk:.4f}")
    print("PASS" if ok else "FAIL")
    return EXIT_OK if ok else EXIT_FAIL


def _add_settings(p, tables):
    for table in tables:
        for key, (kind, _) in table.items():
            p.add_argument("--" + key.replace("_", "-"), dest=key, default=None,
                           type=str if kind is str else kind)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hdphase", description="Multi-population haplotype phasing "
                                 "with hierarchical Dirichlet-process mixtures.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phase", help="phase a genotype file")
    p.add_argument("--input", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--config", help="key = value settings file; flags override it")
    _add_settings(p, [_CHAIN_KEYS, _HYPER_KEYS, _PHASE_KEYS])
    p.set_defaults(func=cmd_phase)

    p = sub.add_parser("simulate", help="draw a synthetic multi-population dataset")
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--spec", help="key = value file of simulation fields")
    p.add_argument("--founder-pool", help="file with one founder pattern per line")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--theta", type=float)
    p.add_argument("--genotype-error", type=float)
    p.add_argument("--loci", type=int)
    p.add_argument("--populations", type=int)
    p.add_argument("--individuals", type=int)
    p.add_argument("--founders", type=int)
    p.add_argument("--shared", type=int)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("evaluate", help="score phased haplotypes against truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--out", help="per-individual CSV")
    p.add_argument("--summary", help="one-row summary CSV")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("experiment", help="HDP vs pooled DP vs per-population DP over seeds")
    p.add_argument("--preset", choices=sorted(PRESETS), default="conserved")
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--start-seed", type=int, default=0)
    p.add_argument("--min-freq", type=float, default=0.05,
                   help="truth frequency filter for the frequent-haplotype KL")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--config")
    _add_settings(p, [_CHAIN_KEYS, _HYPER_KEYS, {"threads": (int, 1)}])
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("oracle-check", help="compare the DP sampler with exact enumeration")
    p.add_argument("--input", required=True)
    p.add_argument("--config")
    p.add_argument("--tau", type=float, default=1.0)
    p.add_argument("--k-max", type=int, default=None)
    p.add_argument("--xi", default="1")
    p.add_argument("--burn-in", type=int, default=1000)
    p.add_argument("--sweeps", type=int, default=50000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tolerance", type=float, default=0.03)
    _add_settings(p, [_HYPER_KEYS])
    p.set_defaults(func=cmd_oracle_check)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except InputError as e:
        print(f"input error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except InvariantError as e:
        print(f"invariant violation: {e}", file=sys.stderr)
        return EXIT_INVARIANT
    except BoundsError as e:
        print(f"resource bound exceeded: {e}", file=sys.stderr)
        return EXIT_BOUNDS
    except OSError as e:
        print(f"input error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
