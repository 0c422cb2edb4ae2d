"""Hierarchical DP mixture phaser: population urns coupled through a shared founder urn."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import engine
from .chain import (ChainConfig, PhasingResult, log_concentration_density, run_chain,
                    slice_sample_log_concentration, sweep)
from .core_model import Dataset, Hyperparams, InputError, UrnState
from .engine import SamplerState


@dataclass
class HDPConfig(ChainConfig):
    gamma: float = 1.0
    resample_gamma: bool = True
    shared_tau: bool = True

    def __post_init__(self):
        super().__post_init__()
        if self.gamma <= 0:
            raise InputError("gamma must be > 0")


def top_level_weights(n, gamma: float) -> np.ndarray:
    """(n_1, ..., n_K, gamma) / (n - 1 + gamma), renormalized to sum to one."""
    n = np.asarray(n, dtype=float)
    w = np.append(n, gamma) / (n.sum() - 1.0 + gamma)
    return w / w.sum()


def hdp_prior_weights(urn: UrnState, j: int) -> np.ndarray:
    """Prior over existing founders plus a new one for the next draw in population ``j``."""
    n_k = np.asarray(urn.n, dtype=float)
    m_j = np.asarray(urn.m, dtype=float)[j]
    denom = n_k.sum() - 1.0 + urn.gamma
    w = np.append(m_j + urn.tau * n_k / denom, urn.tau * urn.gamma / denom)
    return w / w.sum()


def _global_index(state: SamplerState, j: int, i: int) -> int:
    members = np.flatnonzero(state.pop == j)
    if not 0 <= i < len(members):
        raise InputError(f"population {j} has no individual {i}")
    return int(members[i])


def sample_assignment(state: SamplerState, j: int, i: int, e: int, hyper: Hyperparams,
                      model: int = engine.MODEL_HDP) -> SamplerState:
    """Resample the founder of haplotype slot ``e`` of individual ``i`` in population ``j``."""
    g = _global_index(state, j, i)
    logw = np.empty(state.A.shape[0] + 1)
    state.K = engine.assign_slot(
        g, e, model, state.pop, state.H, state.C, state.A, state.cnt, state.nhap, state.lmatch,
        state.lmis, state.m, state.ntop, state.K, state.tau, state.gamma,
        hyper.alpha_h, hyper.beta_h, state.alphabet_size, logw)
    return state


def sample_founder_site(state: SamplerState, k: int, t: int, hyper: Hyperparams) -> SamplerState:
    if not 0 <= k < state.K:
        raise InputError(f"founder {k} is not represented")
    engine.resample_founder_site(k, t, state.A, state.cnt, state.nhap, state.lmatch, state.lmis,
                                 hyper.alpha_h, hyper.beta_h, state.alphabet_size,
                                 np.empty(state.alphabet_size))
    return state


def sample_haplotype_site(state: SamplerState, j: int, i: int, e: int, t: int,
                          hyper: Hyperparams, xi: float | None = None) -> SamplerState:
    g = _global_index(state, j, i)
    engine.resample_hap_site(g, e, t, state.G, state.H, state.C, state.A, state.cnt, state.nhap,
                             state.lmatch, state.lmis, state.gstats, hyper.alpha_h, hyper.beta_h,
                             hyper.alpha_g, hyper.beta_g, -1.0 if xi is None else float(xi),
                             state.logmu, state.alphabet_size, np.empty(state.alphabet_size))
    return state


def sample_concentration(k: int, n: int, iota: float, kappa: float, current: float,
                         rng: np.random.Generator) -> float:
    """Slice-sampling draw of a concentration given k clusters among n draws."""
    return slice_sample_log_concentration(k, n, iota, kappa, current, rng)


def concentration_log_density(gamma: float, k: int, n: int, iota: float, kappa: float) -> float:
    """Unnormalized log posterior density of the concentration itself (not its log)."""
    return log_concentration_density(np.log(gamma), k, n, iota, kappa) - np.log(gamma)


def hdp_gibbs_sweep(state: SamplerState, cfg: HDPConfig, rng: np.random.Generator) -> SamplerState:
    return sweep(state, engine.MODEL_HDP, cfg, rng, resample_gamma=cfg.resample_gamma,
                 shared_tau=cfg.shared_tau)


def run_hdp(data: Dataset, cfg: HDPConfig | None = None, init_haplotypes=None) -> PhasingResult:
    cfg = cfg or HDPConfig()
    if data.n_individuals == 0:
        raise InputError("empty dataset")
    return run_chain(data, engine.MODEL_HDP, cfg, gamma=cfg.gamma,
                     resample_gamma=cfg.resample_gamma, shared_tau=cfg.shared_tau,
                     init_haplotypes=init_haplotypes)
