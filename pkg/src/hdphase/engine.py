"""Sampler state and the compiled Gibbs kernels shared by the DP and HDP phasers.

Founders live in slots ``0..K-1`` of capacity-sized arrays; removing a founder
moves the last one into the hole so represented founders stay contiguous.
Per-founder sufficient statistics are kept incrementally:

* ``cnt[k, t, a]`` haplotypes assigned to k carrying allele a at locus t
* ``nhap[k]``      haplotype instances assigned to k
* ``lmatch[k]``, ``lmis[k]``  pooled match/mismatch counts against ``A[k]``
* ``m[j, k]``      slots of population j assigned to k
* ``ntop[k]``      top-level balls: populations with ``m[j, k] >= 1``
* ``gstats``       (u, u', u'') exact/one/two-allele genotype discrepancies
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba as nb
import numpy as np

from .core_model import MISSING_CODE, InvariantError
from .likelihoods import log_mu_table

MODEL_DP = 0
MODEL_HDP = 1

SITE_PAIR = 0
SITE_SINGLE = 1

_NEG_INF = -np.inf


@dataclass
class SamplerState:
    G: np.ndarray          # (N, T, 2) genotype pairs, -1 = missing
    pop: np.ndarray        # (N,) population index
    H: np.ndarray          # (N, 2, T) current haplotypes
    C: np.ndarray          # (N, 2) founder index per slot
    A: np.ndarray          # (Kcap, T) founder alleles
    cnt: np.ndarray        # (Kcap, T, |A|)
    nhap: np.ndarray       # (Kcap,)
    lmatch: np.ndarray     # (Kcap,)
    lmis: np.ndarray       # (Kcap,)
    m: np.ndarray          # (J, Kcap)
    ntop: np.ndarray       # (Kcap,)
    gstats: np.ndarray     # (3,)
    K: int
    gamma: float
    tau: np.ndarray        # (J,) or shared value broadcast to all populations
    alphabet_size: int
    logmu: np.ndarray = field(repr=False, default=None)

    @property
    def n_individuals(self) -> int:
        return self.G.shape[0]

    @property
    def n_loci(self) -> int:
        return self.G.shape[1]

    @property
    def n_populations(self) -> int:
        return self.m.shape[0]

    def copy(self) -> "SamplerState":
        out = SamplerState(**{k: (v.copy() if isinstance(v, np.ndarray) else v)
                              for k, v in self.__dict__.items()})
        return out

    def founder_stats(self):
        """(l_k, l'_k) for represented founders."""
        return [(int(self.lmatch[k]), int(self.lmis[k])) for k in range(self.K)]


def new_state(G, pop, n_populations, alphabet_size, rng, init_haplotypes=None,
              gamma=1.0, tau=1.0) -> SamplerState:
    """Single-founder start: random phase at het sites, founder = site-wise majority."""
    G = np.ascontiguousarray(G, dtype=np.int64)
    pop = np.ascontiguousarray(pop, dtype=np.int64)
    n, t_len, _ = G.shape
    if init_haplotypes is None:
        H = np.empty((n, 2, t_len), dtype=np.int64)
        flip = rng.random((n, t_len)) < 0.5
        H[:, 0, :] = np.where(flip, G[:, :, 1], G[:, :, 0])
        H[:, 1, :] = np.where(flip, G[:, :, 0], G[:, :, 1])
        miss = G[:, :, 0] == MISSING_CODE
        if miss.any():
            H[:, 0, :][miss] = rng.integers(0, alphabet_size, size=miss.sum())
            H[:, 1, :][miss] = rng.integers(0, alphabet_size, size=miss.sum())
    else:
        H = np.array(init_haplotypes, dtype=np.int64, copy=True)
    kcap = 2 * n + 2
    A = np.zeros((kcap, t_len), dtype=np.int64)
    counts = np.stack([(H == a).sum(axis=(0, 1)) for a in range(alphabet_size)], axis=1)
    A[0] = counts.argmax(axis=1)
    C = np.zeros((n, 2), dtype=np.int64)
    state = SamplerState(
        G=G, pop=pop, H=H, C=C, A=A,
        cnt=np.zeros((kcap, t_len, alphabet_size), dtype=np.int64),
        nhap=np.zeros(kcap, dtype=np.int64),
        lmatch=np.zeros(kcap, dtype=np.int64),
        lmis=np.zeros(kcap, dtype=np.int64),
        m=np.zeros((n_populations, kcap), dtype=np.int64),
        ntop=np.zeros(kcap, dtype=np.int64),
        gstats=np.zeros(3, dtype=np.int64),
        K=1, gamma=float(gamma),
        tau=np.full(n_populations, float(tau)),
        alphabet_size=alphabet_size,
        logmu=log_mu_table(alphabet_size),
    )
    recompute_counts(state, into=state)
    return state


def recompute_counts(state: SamplerState, into: SamplerState | None = None) -> dict:
    """Rebuild every count table from (G, H, C, A); optionally store into ``into``."""
    n, t_len, _ = state.G.shape
    kcap = state.A.shape[0]
    asz = state.alphabet_size
    cnt = np.zeros((kcap, t_len, asz), dtype=np.int64)
    m = np.zeros((state.m.shape[0], kcap), dtype=np.int64)
    for i in range(n):
        for e in range(2):
            k = state.C[i, e]
            cnt[k, np.arange(t_len), state.H[i, e]] += 1
            m[state.pop[i], k] += 1
    nhap = m.sum(axis=0)
    lmatch = np.array([cnt[k, np.arange(t_len), state.A[k]].sum() for k in range(kcap)],
                      dtype=np.int64)
    lmis = nhap * t_len - lmatch
    ntop = (m >= 1).sum(axis=0).astype(np.int64)
    gstats = np.zeros(3, dtype=np.int64)
    for i in range(n):
        for t in range(t_len):
            if state.G[i, t, 0] == MISSING_CODE:
                continue
            gstats[_gclass(state.G[i, t, 0], state.G[i, t, 1], state.H[i, 0, t], state.H[i, 1, t])] += 1
    K = int(np.count_nonzero(nhap))
    fresh = dict(cnt=cnt, m=m, nhap=nhap, lmatch=lmatch, lmis=lmis, ntop=ntop, gstats=gstats, K=K)
    if into is not None:
        for k, v in fresh.items():
            setattr(into, k, v)
    return fresh


def check_counts(state: SamplerState) -> None:
    """Raise InvariantError unless maintained counts equal a from-scratch rebuild."""
    K = state.K
    if np.any(state.nhap[:K] < 1) or np.any(state.nhap[K:] != 0):
        raise InvariantError("represented founders are not contiguous and non-empty")
    if np.any(state.C >= K) or np.any(state.C < 0):
        raise InvariantError("assignment points at an unrepresented founder")
    fresh = recompute_counts(state)
    if fresh.pop("K") != K:
        raise InvariantError("K drifted from recomputation")
    for name, value in fresh.items():
        if not np.array_equal(getattr(state, name), value):
            raise InvariantError(f"{name} drifted from recomputation")
    if state.m.sum() != 2 * state.n_individuals:
        raise InvariantError("sum of m differs from 2 x individuals")


# ---------------------------------------------------------------------------
# compiled kernels

@nb.njit(cache=True)
def seed_kernels(seed):
    np.random.seed(seed)


@nb.njit(cache=True, nogil=True)
def _gclass(g0, g1, x0, x1):
    # 0/1/2 = EXACT/DIFF1/DIFF2 by multiset overlap of {g0, g1} with {x0, x1}
    used0 = False
    used1 = False
    shared = 0
    for g in (g0, g1):
        if not used0 and g == x0:
            used0 = True
            shared += 1
        elif not used1 and g == x1:
            used1 = True
            shared += 1
    return 2 - shared


@nb.njit(cache=True, nogil=True)
def _sample_log(logw, n):
    mx = _NEG_INF
    for k in range(n):
        if logw[k] > mx:
            mx = logw[k]
    total = 0.0
    for k in range(n):
        logw[k] = math.exp(logw[k] - mx) if logw[k] > _NEG_INF else 0.0
        total += logw[k]
    u = np.random.random() * total
    acc = 0.0
    for k in range(n):
        acc += logw[k]
        if u < acc:
            return k
    # float round-off at the top end
    for k in range(n - 1, -1, -1):
        if logw[k] > 0.0:
            return k
    return n - 1


@nb.njit(cache=True, nogil=True)
def _log_beta(a, b):
    return math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)


@nb.njit(cache=True, nogil=True)
def _add_hap(k, hap, A, cnt, nhap, lmatch, lmis, sign):
    t_len = hap.shape[0]
    x = 0
    for t in range(t_len):
        cnt[k, t, hap[t]] += sign
        if hap[t] == A[k, t]:
            x += 1
    nhap[k] += sign
    lmatch[k] += sign * x
    lmis[k] += sign * (t_len - x)


@nb.njit(cache=True, nogil=True)
def _remove_founder(k, K, C, A, cnt, nhap, lmatch, lmis, m, ntop):
    """Drop empty founder k by moving founder K-1 into its slot; returns new K."""
    last = K - 1
    if k != last:
        A[k] = A[last]
        cnt[k] = cnt[last]
        nhap[k] = nhap[last]
        lmatch[k] = lmatch[last]
        lmis[k] = lmis[last]
        m[:, k] = m[:, last]
        ntop[k] = ntop[last]
        for i in range(C.shape[0]):
            for e in range(2):
                if C[i, e] == last:
                    C[i, e] = k
    A[last] = 0
    cnt[last] = 0
    nhap[last] = 0
    lmatch[last] = 0
    lmis[last] = 0
    m[:, last] = 0
    ntop[last] = 0
    return last


@nb.njit(cache=True, nogil=True)
def _log_prior_weights(model, j, K, m, ntop, tau_j, gamma, out):
    """Fill out[0..K] with log prior weights of the K+1 choices for a slot in population j."""
    if model == 0:
        for k in range(K):
            out[k] = math.log(m[j, k]) if m[j, k] > 0 else _NEG_INF
        out[K] = math.log(tau_j)
    else:
        n = 0
        for k in range(K):
            n += ntop[k]
        denom = n - 1.0 + gamma
        for k in range(K):
            w = m[j, k] + tau_j * ntop[k] / denom
            out[k] = math.log(w) if w > 0 else _NEG_INF
        out[K] = math.log(tau_j * gamma / denom)


@nb.njit(cache=True, nogil=True)
def _draw_new_founder(hap, asz, alpha_h, beta_h, out):
    # posterior of a fresh founder given one haplotype: mutation rate from its
    # prior, then each allele copied from hap unless mutated
    theta = np.random.beta(beta_h, alpha_h)
    for t in range(hap.shape[0]):
        if np.random.random() < theta:
            b = np.random.randint(0, asz - 1)
            out[t] = b if b < hap[t] else b + 1
        else:
            out[t] = hap[t]


@nb.njit(cache=True, nogil=True)
def assign_slot(i, e, model, pop, H, C, A, cnt, nhap, lmatch, lmis, m, ntop, K,
                tau, gamma, alpha_h, beta_h, asz, logw):
    """Resample the founder of slot (i, e); returns the new K."""
    j = pop[i]
    hap = H[i, e]
    t_len = hap.shape[0]
    k_old = C[i, e]
    _add_hap(k_old, hap, A, cnt, nhap, lmatch, lmis, -1)
    m[j, k_old] -= 1
    if m[j, k_old] == 0:
        ntop[k_old] -= 1
    C[i, e] = -1
    if nhap[k_old] == 0:
        K = _remove_founder(k_old, K, C, A, cnt, nhap, lmatch, lmis, m, ntop)

    _log_prior_weights(model, j, K, m, ntop, tau[j], gamma, logw)
    log_other = math.log(asz - 1.0)
    for k in range(K):
        if logw[k] == _NEG_INF:
            continue
        x = 0
        for t in range(t_len):
            if hap[t] == A[k, t]:
                x += 1
        y = t_len - x
        l = lmatch[k]
        lp = lmis[k]
        logw[k] += (_log_beta(alpha_h + l + x, beta_h + lp + y)
                    - _log_beta(alpha_h + l, beta_h + lp) - y * log_other)
    logw[K] += -t_len * math.log(asz)
    k_new = _sample_log(logw, K + 1)

    if k_new == K:
        _draw_new_founder(hap, asz, alpha_h, beta_h, A[K])
        K += 1
    _add_hap(k_new, hap, A, cnt, nhap, lmatch, lmis, 1)
    m[j, k_new] += 1
    if m[j, k_new] == 1:
        ntop[k_new] += 1
    C[i, e] = k_new
    return K


@nb.njit(cache=True, nogil=True)
def resample_founder_site(k, t, A, cnt, nhap, lmatch, lmis, alpha_h, beta_h, asz, logw):
    cur = A[k, t]
    n = nhap[k]
    l_ex = lmatch[k] - cnt[k, t, cur]
    lp_ex = lmis[k] - (n - cnt[k, t, cur])
    log_other = math.log(asz - 1.0) if asz > 2 else 0.0
    for a in range(asz):
        x = cnt[k, t, a]
        y = n - x
        logw[a] = math.lgamma(alpha_h + l_ex + x) + math.lgamma(beta_h + lp_ex + y) - y * log_other
    a_new = _sample_log(logw, asz)
    A[k, t] = a_new
    lmatch[k] = l_ex + cnt[k, t, a_new]
    lmis[k] = lp_ex + (n - cnt[k, t, a_new])


@nb.njit(cache=True, nogil=True)
def _log_pred_allele(x, a, l, lp, alpha_h, beta_h, log_other):
    denom = math.log(alpha_h + beta_h + l + lp)
    if x == a:
        return math.log(alpha_h + l) - denom
    return math.log(beta_h + lp) - denom - log_other


@nb.njit(cache=True, nogil=True)
def _log_gfactor(cls, x0, x1, u, u12, alpha_g, beta_g, xi, logmu):
    if cls == 0:
        if xi >= 0.0:
            return math.log(xi) if xi > 0.0 else _NEG_INF
        return math.log(alpha_g + u)
    lm = logmu[x0, x1, cls]
    if xi >= 0.0:
        return math.log(1.0 - xi) + lm if xi < 1.0 else _NEG_INF
    return math.log(beta_g + u12) + lm


@nb.njit(cache=True, nogil=True)
def _site_out(i, t, G, H, C, A, cnt, nhap, lmatch, lmis, gstats, e_mask):
    """Withdraw site t of individual i (slots in e_mask) from the statistics."""
    missing = G[i, t, 0] < 0
    if not missing:
        gstats[_gclass(G[i, t, 0], G[i, t, 1], H[i, 0, t], H[i, 1, t])] -= 1
    for e in range(2):
        if e_mask[e]:
            k = C[i, e]
            x = H[i, e, t]
            cnt[k, t, x] -= 1
            if x == A[k, t]:
                lmatch[k] -= 1
            else:
                lmis[k] -= 1
    return missing


@nb.njit(cache=True, nogil=True)
def _site_in(i, t, G, H, C, A, cnt, lmatch, lmis, gstats, e_mask, missing):
    if not missing:
        gstats[_gclass(G[i, t, 0], G[i, t, 1], H[i, 0, t], H[i, 1, t])] += 1
    for e in range(2):
        if e_mask[e]:
            k = C[i, e]
            x = H[i, e, t]
            cnt[k, t, x] += 1
            if x == A[k, t]:
                lmatch[k] += 1
            else:
                lmis[k] += 1


@nb.njit(cache=True, nogil=True)
def resample_hap_site(i, e, t, G, H, C, A, cnt, nhap, lmatch, lmis, gstats,
                      alpha_h, beta_h, alpha_g, beta_g, xi, logmu, asz, logw):
    """Single-slot update of h[i, e, t] given the partner allele."""
    mask = np.zeros(2, dtype=np.bool_)
    mask[e] = True
    missing = _site_out(i, t, G, H, C, A, cnt, nhap, lmatch, lmis, gstats, mask)
    k = C[i, e]
    partner = H[i, 1 - e, t]
    log_other = math.log(asz - 1.0)
    u = gstats[0]
    u12 = gstats[1] + gstats[2]
    for x in range(asz):
        lw = _log_pred_allele(x, A[k, t], lmatch[k], lmis[k], alpha_h, beta_h, log_other)
        if not missing:
            x0 = x if e == 0 else partner
            x1 = partner if e == 0 else x
            cls = _gclass(G[i, t, 0], G[i, t, 1], x0, x1)
            lw += _log_gfactor(cls, x0, x1, u, u12, alpha_g, beta_g, xi, logmu)
        logw[x] = lw
    H[i, e, t] = _sample_log(logw, asz)
    _site_in(i, t, G, H, C, A, cnt, lmatch, lmis, gstats, mask, missing)


@nb.njit(cache=True, nogil=True)
def resample_pair_site(i, t, G, H, C, A, cnt, nhap, lmatch, lmis, gstats,
                       alpha_h, beta_h, alpha_g, beta_g, xi, logmu, asz, logw):
    """Joint update of (h[i, 0, t], h[i, 1, t]); lets phase flip even at xi = 1."""
    mask = np.ones(2, dtype=np.bool_)
    missing = _site_out(i, t, G, H, C, A, cnt, nhap, lmatch, lmis, gstats, mask)
    k0 = C[i, 0]
    k1 = C[i, 1]
    a0 = A[k0, t]
    a1 = A[k1, t]
    log_other = math.log(asz - 1.0)
    u = gstats[0]
    u12 = gstats[1] + gstats[2]
    for x0 in range(asz):
        lw0 = _log_pred_allele(x0, a0, lmatch[k0], lmis[k0], alpha_h, beta_h, log_other)
        for x1 in range(asz):
            l1 = lmatch[k1]
            lp1 = lmis[k1]
            if k1 == k0:
                # second draw from the same founder sees the first
                if x0 == a0:
                    l1 += 1
                else:
                    lp1 += 1
            lw = lw0 + _log_pred_allele(x1, a1, l1, lp1, alpha_h, beta_h, log_other)
            if not missing:
                cls = _gclass(G[i, t, 0], G[i, t, 1], x0, x1)
                lw += _log_gfactor(cls, x0, x1, u, u12, alpha_g, beta_g, xi, logmu)
            logw[x0 * asz + x1] = lw
    c = _sample_log(logw, asz * asz)
    H[i, 0, t] = c // asz
    H[i, 1, t] = c % asz
    _site_in(i, t, G, H, C, A, cnt, lmatch, lmis, gstats, mask, missing)


@nb.njit(cache=True, nogil=True)
def sweep_assignments(model, pop, H, C, A, cnt, nhap, lmatch, lmis, m, ntop, K,
                      tau, gamma, alpha_h, beta_h, asz):
    logw = np.empty(A.shape[0] + 1)
    for i in range(H.shape[0]):
        for e in range(2):
            K = assign_slot(i, e, model, pop, H, C, A, cnt, nhap, lmatch, lmis, m, ntop, K,
                            tau, gamma, alpha_h, beta_h, asz, logw)
    return K


@nb.njit(cache=True, nogil=True)
def sweep_founders(K, A, cnt, nhap, lmatch, lmis, alpha_h, beta_h, asz):
    logw = np.empty(asz)
    for k in range(K):
        for t in range(A.shape[1]):
            resample_founder_site(k, t, A, cnt, nhap, lmatch, lmis, alpha_h, beta_h, asz, logw)


@nb.njit(cache=True, nogil=True)
def sweep_haplotypes(site_mode, G, H, C, A, cnt, nhap, lmatch, lmis, gstats,
                     alpha_h, beta_h, alpha_g, beta_g, xi, logmu, asz):
    logw = np.empty(asz * asz)
    for i in range(H.shape[0]):
        for t in range(H.shape[2]):
            if site_mode == 0:
                resample_pair_site(i, t, G, H, C, A, cnt, nhap, lmatch, lmis, gstats,
                                   alpha_h, beta_h, alpha_g, beta_g, xi, logmu, asz, logw)
            else:
                for e in range(2):
                    resample_hap_site(i, e, t, G, H, C, A, cnt, nhap, lmatch, lmis, gstats,
                                      alpha_h, beta_h, alpha_g, beta_g, xi, logmu, asz, logw)
