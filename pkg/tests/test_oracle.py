import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hdphase.core_model import BoundsError, Dataset, Hyperparams, InputError
from hdphase.exact_oracle import (OracleInstance, count_partitions, exact_posterior, partition_prior,
                            set_partitions, total_variation)


def _inst(G, **kw):
    G = np.asarray(G)
    return OracleInstance(Dataset.from_arrays(G, [0] * len(G)), **kw)


def test_all_together_prior():
    assert partition_prior((0, 0, 0, 0), 1.0) == pytest.approx(0.25, abs=1e-15)


@pytest.mark.parametrize("n", [1, 2, 3, 4, 5, 6])
@pytest.mark.parametrize("tau", [0.3, 1.0, 4.0])
def test_partition_prior_sums_to_one(n, tau):
    parts = list(set_partitions(n, n))
    assert len(parts) == count_partitions(n, n)
    assert sum(partition_prior(p, tau) for p in parts) == pytest.approx(1.0, abs=1e-12)


def test_truncated_partition_count():
    assert count_partitions(4, 2) == 8
    assert len(list(set_partitions(4, 2))) == 8


def test_hand_computed_evidence():
    # one homozygous individual, one locus, flat priors:
    # together (1/2) x 2/3 x 1/2  +  apart (1/2) x 1/2 x 1/2 = 7/24
    post = exact_posterior(_inst([[[0, 0]]], hyperparams=Hyperparams(alpha_h=1, beta_h=1)))
    assert post.log_evidence == pytest.approx(math.log(7 / 24), abs=1e-12)
    assert post.k_distribution[1] == pytest.approx((1 / 6) / (7 / 24))


def test_single_het_site_symmetric():
    post = exact_posterior(_inst([[[0, 1]]]))
    assert post.phase_marginals[0]["0|1"] == pytest.approx(0.5, abs=1e-12)
    assert post.phase_marginals[0]["1|0"] == pytest.approx(0.5, abs=1e-12)


def test_identical_hets_prefer_same_phase_frozen():
    inst = _inst([[[0, 1], [0, 1]]] * 2, hyperparams=Hyperparams(alpha_h=50, beta_h=1), tau=0.1)
    post = exact_posterior(inst)
    same = sum(p for (a, b), p in post.joint.items()
               if sorted(a.split("|")) == sorted(b.split("|")))
    best = max(post.joint, key=post.joint.get)
    assert sorted(best[0].split("|")) == sorted(best[1].split("|"))
    assert same == pytest.approx(0.9847196670006824, abs=1e-12)
    assert post.log_evidence == pytest.approx(-5.038276604389097, abs=1e-12)


CASES = [
    [[[0, 1], [0, 1], [0, 0]], [[0, 1], [1, 1], [0, 1]], [[0, 0], [0, 1], [0, 1]]],
    [[[0, 1], [0, 1], [0, 1]], [[0, 1], [0, 1], [0, 1]], [[0, 0], [1, 1], [0, 1]]],
]


@pytest.mark.parametrize("G", CASES)
def test_exchangeable_in_individuals(G):
    hp = Hyperparams(alpha_h=4, beta_h=1)
    base = exact_posterior(_inst(G, hyperparams=hp))
    for perm in itertools.permutations(range(len(G))):
        post = exact_posterior(_inst([G[i] for i in perm], hyperparams=hp))
        assert post.log_evidence == pytest.approx(base.log_evidence, abs=1e-10)
        for new, old in enumerate(perm):
            assert total_variation(post.pair_marginals[new], base.pair_marginals[old]) < 1e-10


@pytest.mark.parametrize("xi", [1.0, 0.8, None])
def test_marginals_are_distributions(xi):
    post = exact_posterior(_inst(CASES[0][:2], xi=xi, hyperparams=Hyperparams(alpha_h=4, beta_h=1)))
    for marg in post.pair_marginals + post.phase_marginals:
        assert sum(marg.values()) == pytest.approx(1.0, abs=1e-10)
    assert sum(post.joint.values()) == pytest.approx(1.0, abs=1e-10)
    assert sum(post.k_distribution.values()) == pytest.approx(1.0, abs=1e-10)


def test_fidelity_one_keeps_genotypes():
    post = exact_posterior(_inst(CASES[0]))
    for marg, g in zip(post.pair_marginals, CASES[0]):
        for key in marg:
            h0, h1 = key.split("|")
            assert [tuple(sorted((int(a), int(b)))) for a, b in zip(h0, h1)] == [tuple(s) for s in g]


def test_bounds_refused_with_estimate():
    G = [[[0, 1]] * 5] * 2
    with pytest.raises(BoundsError, match="5"):
        exact_posterior(_inst(G))
    with pytest.raises(BoundsError, match="terms"):
        exact_posterior(_inst(CASES[1]), max_terms=100)


def test_instance_validation():
    d = Dataset.from_arrays(np.array([[[0, 1]], [[0, 0]]]), [0, 1])
    with pytest.raises(InputError):
        OracleInstance(d)
    with pytest.raises(InputError):
        _inst([[[0, 1]]], tau=0.0)
    with pytest.raises(InputError):
        _inst([[[0, 1]]], k_max=3)


@settings(max_examples=40, deadline=None)
@given(st.dictionaries(st.sampled_from("abcd"), st.floats(0, 1), min_size=1))
def test_total_variation_bounds(p):
    assert total_variation(p, p) == 0.0
    q = {k: 1 - v for k, v in p.items()}
    assert 0.0 <= total_variation(p, q) <= max(sum(p.values()), sum(q.values()))
