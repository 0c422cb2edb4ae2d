"""Scoring phased haplotypes against ground truth."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core_model import InputError

KL_FLOOR = 1e-6


def _het_sites(true_pair, pred_pair):
    t0, t1 = (np.asarray(h) for h in true_pair)
    p0, p1 = (np.asarray(h) for h in pred_pair)
    if t0.shape != p0.shape or t1.shape != p1.shape or t0.shape != t1.shape:
        raise InputError("haplotype pairs differ in length")
    same = ((t0 == p0) & (t1 == p1)) | ((t0 == p1) & (t1 == p0))
    if not same.all():
        raise InputError(f"pairs disagree on genotype at loci {np.flatnonzero(~same).tolist()}")
    return np.flatnonzero(t0 != t1), t0, p0


def site_error(true_pair, pred_pair) -> tuple[int, int]:
    """(mismatched, nontrivial) het sites under the better orientation of ``pred_pair``.

    Individuals with fewer than two het sites have nothing to phase and score (0, 0).
    """
    het, t0, p0 = _het_sites(true_pair, pred_pair)
    if len(het) < 2:
        return 0, 0
    mism = int(np.sum(p0[het] != t0[het]))
    return min(mism, len(het) - mism), len(het)


def switch_distance(true_pair, pred_pair) -> int:
    het, t0, p0 = _het_sites(true_pair, pred_pair)
    if len(het) < 2:
        return 0
    rel = p0[het] == t0[het]
    return int(np.sum(rel[1:] != rel[:-1]))


@dataclass
class PhasingScore:
    err_s: float
    d_w: int
    n_ambiguous: int
    n_sites: int
    per_individual: list = field(default_factory=list)   # (id, mismatches, sites, switches)
    err_s_macro: float = float("nan")


def score(true_haps, pred_haps, ids=None) -> PhasingScore:
    """Micro-averaged err_s (pooled over sites) plus total switch distance."""
    true_haps = np.asarray(true_haps)
    pred_haps = np.asarray(pred_haps)
    if true_haps.shape != pred_haps.shape:
        raise InputError("truth and prediction have different shapes")
    ids = ids if ids is not None else [str(i) for i in range(len(true_haps))]
    rows = []
    mism = sites = dw = amb = 0
    rates = []
    for i, (tp, pp) in enumerate(zip(true_haps, pred_haps)):
        m, s = site_error(tp, pp)
        d = switch_distance(tp, pp)
        rows.append((ids[i], m, s, d))
        if s:
            amb += 1
            rates.append(m / s)
        mism += m
        sites += s
        dw += d
    err = mism / sites if sites else float("nan")
    macro = float(np.mean(rates)) if rates else float("nan")
    return PhasingScore(err, dw, amb, sites, rows, macro)


def freq_kl(true_freqs: dict, est_freqs: dict, min_freq_filter: float = 0.0,
            floor: float = KL_FLOOR) -> float:
    """D_KL(p || q) over p's support (entries >= filter, renormalized).

    q is floored on p's support and renormalized over everything it covers, so
    mass q spends on haplotypes absent from the truth still counts against it.
    """
    if not 0.0 <= min_freq_filter < 1.0:
        raise InputError("filter must lie in [0, 1)")
    p = {x: v for x, v in true_freqs.items() if v > 0 and v >= min_freq_filter}
    zp = sum(p.values())
    if zp <= 0:
        raise InputError("filtered truth distribution is empty")
    keys = list(p)
    pv = np.array([p[x] / zp for x in keys])
    q = {x: v for x, v in est_freqs.items() if v > 0}
    for x in keys:
        q[x] = max(q.get(x, 0.0), floor)
    zq = sum(q.values())
    qv = np.array([q[x] / zq for x in keys])
    return float(max(0.0, np.sum(pv * (np.log(pv) - np.log(qv)))))


def mean_freq_kl(true_freqs: list, est_freqs: list, min_freq_filter: float = 0.0) -> float:
    """Average of per-population divergences."""
    return float(np.mean([freq_kl(p, q, min_freq_filter) for p, q in zip(true_freqs, est_freqs)]))


def hamming(a, b) -> int:
    return int(np.sum(np.asarray(a) != np.asarray(b)))


def greedy_match(recovered, truth) -> list[tuple[int, int, int]]:
    """Greedy minimal-Hamming one-to-one matching; (recovered idx, truth idx, distance)."""
    recovered = np.asarray(recovered)
    truth = np.asarray(truth)
    if len(recovered) == 0 or len(truth) == 0:
        return []
    d = (recovered[:, None, :] != truth[None, :, :]).sum(axis=2)
    pairs = sorted((int(d[r, t]), r, t) for r in range(len(recovered)) for t in range(len(truth)))
    used_r, used_t, out = set(), set(), []
    for dist, r, t in pairs:
        if r in used_r or t in used_t:
            continue
        used_r.add(r)
        used_t.add(t)
        out.append((r, t, dist))
    return out


def k_theta_summary(result, truth=None, min_freq: float = 0.0) -> dict:
    """K and mutation-rate recovery report; an empty result yields an error entry."""
    if result is None or len(getattr(result, "k_trace", [])) == 0:
        return {"error": "result has no posterior samples"}
    report = {
        "k_mode": result.k_mode,
        "k_mean": result.k_mean,
        "k_pop_mode": [int(v) for v in result.k_pop_mode],
        "k_pop_mean": [float(v) for v in result.k_pop_mean],
        "theta_mean": result.theta_mean,
        "founder_thetas": {f.pattern: f.theta for f in result.founders[:50]},
    }
    if truth is not None:
        strong = [f for f in result.founders if f.support >= 0.5 and f.frequency.sum() > min_freq]
        pats = np.array([[int(c) for c in f.pattern] for f in strong]) if strong else np.zeros((0, truth.founders.shape[1]))
        match = greedy_match(pats, truth.founders)
        report["matched"] = [(strong[r].pattern, t, dist) for r, t, dist in match]
        report["exact_matches"] = sum(1 for _, _, dist in match if dist == 0)
        report["true_K"] = len(truth.founders)
    return report


def sign_test(differences) -> tuple[int, int, float]:
    """One-sided paired sign test that differences are positive; ties dropped.

    Returns (wins, n_non_tied, p-value).
    """
    d = np.asarray(differences, dtype=float)
    wins = int(np.sum(d > 0))
    n = int(np.sum(d != 0))
    if n == 0:
        return 0, 0, 1.0
    p = sum(math.comb(n, k) for k in range(wins, n + 1)) / 2.0 ** n
    return wins, n, p
