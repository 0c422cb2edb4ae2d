"""Likelihood kernels for the mutation channel and the noisy genotyping channel.

Conventions: under the Beta prior on a founder's mutation rate, ``alpha_h``
pairs with the count of alleles matching the founder and ``beta_h`` with the
count of mutated alleles. All accumulation happens in log space.
"""

from __future__ import annotations

import itertools
import math
from enum import IntEnum

import numpy as np
from scipy.special import gammaln

from .core_model import MISSING, InputError

EXACT, DIFF1, DIFF2 = 0, 1, 2


class MismatchClass(IntEnum):
    EXACT = EXACT
    DIFF1 = DIFF1
    DIFF2 = DIFF2


def p_h_site(h_t: int, a_t: int, theta: float, alphabet_size: int = 2) -> float:
    if not 0.0 <= theta <= 1.0:
        raise InputError(f"theta must lie in [0, 1], got {theta}")
    if h_t == a_t:
        return 1.0 - theta
    return theta / (alphabet_size - 1)


def _log_beta(a, b):
    return gammaln(a) + gammaln(b) - gammaln(a + b)


def collapsed_h_marginal(stats_per_founder, alpha_h: float, beta_h: float,
                         alphabet_size: int = 2) -> float:
    """Log marginal of all haplotypes given founders, mutation rates integrated out.

    ``stats_per_founder`` is an iterable of ``(l, l_prime)`` match/mismatch counts.
    """
    total = 0.0
    log_other = math.log(alphabet_size - 1)
    for l, lp in stats_per_founder:
        total += _log_beta(alpha_h + l, beta_h + lp) - _log_beta(alpha_h, beta_h)
        total -= lp * log_other
    return float(total)


def collapsed_h_predictive(h_t: int, a_t: int, stats, alpha_h: float, beta_h: float,
                           alphabet_size: int = 2) -> float:
    """Predictive probability of one more allele given a founder's (l, l') counts."""
    l, lp = stats
    denom = alpha_h + beta_h + l + lp
    if h_t == a_t:
        return (alpha_h + l) / denom
    return (beta_h + lp) / (denom * (alphabet_size - 1))


def log_haplotype_predictive(h, a, l: int, lp: int, alpha_h: float, beta_h: float,
                             alphabet_size: int = 2) -> float:
    """Log predictive of a whole haplotype ``h`` under founder ``a`` with stats (l, l')."""
    h = np.asarray(h)
    a = np.asarray(a)
    x = int(np.sum(h == a))
    y = len(h) - x
    return float(_log_beta(alpha_h + l + x, beta_h + lp + y) - _log_beta(alpha_h + l, beta_h + lp)
                 - y * math.log(alphabet_size - 1))


def genotype_mismatch_class(g, h0: int, h1: int) -> int:
    """EXACT, DIFF1 or DIFF2 by multiset overlap of ``g`` with ``{h0, h1}``."""
    if g is MISSING:
        raise InputError("genotype site is missing")
    remaining = [h0, h1]
    shared = 0
    for s in g:
        if s in remaining:
            remaining.remove(s)
            shared += 1
    return (DIFF2, DIFF1, EXACT)[shared]


def mismatch_normalizers(h0: int, h1: int, alphabet_size: int = 2) -> tuple[float, float]:
    """(mu1, mu2) for true pair (h0, h1): the error mass 1 - xi spread evenly over
    every observable genotype that is not an exact match, so the channel sums to one.

    A class with no observable pairs gets 0.0; its value is never used.
    """
    sizes = [0, 0, 0]
    for g in itertools.combinations_with_replacement(range(alphabet_size), 2):
        sizes[genotype_mismatch_class(g, h0, h1)] += 1
    share = 1.0 / (sizes[DIFF1] + sizes[DIFF2])
    mu1 = share if sizes[DIFF1] else 0.0
    mu2 = share if sizes[DIFF2] else 0.0
    return mu1, mu2


def log_mu_table(alphabet_size: int) -> np.ndarray:
    """``table[h0, h1, cls]`` = log of the within-class normalizer (0 for EXACT)."""
    table = np.zeros((alphabet_size, alphabet_size, 3))
    for h0 in range(alphabet_size):
        for h1 in range(alphabet_size):
            mu1, mu2 = mismatch_normalizers(h0, h1, alphabet_size)
            table[h0, h1, DIFF1] = math.log(mu1) if mu1 > 0 else -np.inf
            table[h0, h1, DIFF2] = math.log(mu2) if mu2 > 0 else -np.inf
    return table


def p_g_site(g, h0: int, h1: int, xi: float, alphabet_size: int = 2) -> float:
    if not 0.0 <= xi <= 1.0:
        raise InputError(f"xi must lie in [0, 1], got {xi}")
    cls = genotype_mismatch_class(g, h0, h1)
    if cls == EXACT:
        return xi
    mu1, mu2 = mismatch_normalizers(h0, h1, alphabet_size)
    return (mu1 if cls == DIFF1 else mu2) * (1.0 - xi)


def collapsed_g_factor(cls: int, stats, alpha_g: float, beta_g: float, mu: float = 1.0) -> float:
    """Unnormalized collapsed weight of a genotype mismatch class.

    ``stats`` is ``(u, u1, u2)`` excluding the site being scored; ``mu`` is the
    class normalizer for the candidate pair (ignored for EXACT). The shared
    denominator ``alpha_g + beta_g + n_scored`` cancels between candidates.
    """
    u, u1, u2 = stats
    if cls == EXACT:
        return alpha_g + u
    return (beta_g + u1 + u2) * mu
