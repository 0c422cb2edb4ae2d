import numpy as np
import pytest

from hdphase.core_model import InputError, validate_dataset
from hdphase.synthgen import (SimSpec, extend_founders, generate, noisy_genotype, preset,
                           truth_haplotype_frequencies)


def test_conserved_preset_structure():
    data, truth = generate(preset("conserved", seed=1))
    assert data.n_populations == 5 and data.n_individuals == 100 and data.n_loci == 10
    assert len(truth.founders) == 17
    assert len({tuple(f) for f in truth.founders}) == 17
    assert truth.shared == [0, 1]
    assert all(len(p) == 5 for p in truth.population_founders)
    assert validate_dataset(data) == []
    for j, fs in enumerate(truth.population_founders):
        assert set(truth.assignments[truth.population == j].ravel()) <= set(fs)


def test_diverse_preset_theta():
    assert preset("diverse").theta == 0.05
    with pytest.raises(InputError, match="unknown"):
        preset("medium")


def test_zero_noise_copies_founders():
    data, truth = generate(SimSpec(theta=0.0, genotype_error=0.0, seed=3))
    np.testing.assert_array_equal(truth.haplotypes, truth.founders[truth.assignments])
    G = np.sort(truth.haplotypes.transpose(0, 2, 1), axis=2)
    np.testing.assert_array_equal(data.genotype_array(), G)


def test_diverse_mutation_count():
    _, truth = generate(preset("diverse", seed=5, individuals_per_population=200))
    d = (truth.haplotypes != truth.founders[truth.assignments]).sum(axis=2).ravel()
    expected = 10 * 0.05
    sd = np.sqrt(10 * 0.05 * 0.95 / len(d))
    assert abs(d.mean() - expected) < 3 * sd


def test_genotype_error_rate():
    rng = np.random.default_rng(0)
    h0 = rng.integers(0, 2, 20000)
    h1 = rng.integers(0, 2, 20000)
    g = np.array(noisy_genotype(rng, h0, h1, 0.1, 2))
    true = np.sort(np.stack([h0, h1], axis=1), axis=1)
    assert abs(np.mean(np.any(g != true, axis=1)) - 0.1) < 0.01


def test_seeded_generation_repeats():
    a, ta = generate(SimSpec(seed=9))
    b, tb = generate(SimSpec(seed=9))
    np.testing.assert_array_equal(a.genotype_array(), b.genotype_array())
    np.testing.assert_array_equal(ta.haplotypes, tb.haplotypes)


def test_spec_validation_names_field():
    with pytest.raises(InputError, match="n_loci"):
        SimSpec(n_loci=0)
    with pytest.raises(InputError, match="shared_founders"):
        SimSpec(shared_founders=6)
    with pytest.raises(InputError, match="theta"):
        SimSpec(theta=1.5)


def test_founder_pool_checks():
    pool = np.zeros((17, 10), int)
    with pytest.raises(InputError, match="distinct"):
        generate(SimSpec(founder_pool=pool))
    with pytest.raises(InputError):
        generate(SimSpec(founder_pool=np.eye(10, dtype=int)))


def test_extend_founders():
    _, truth = generate(preset("conserved", seed=2))
    longer = extend_founders(truth.founders, 60, np.random.default_rng(1))
    assert longer.shape == (17, 60)
    np.testing.assert_array_equal(longer[:, :10], truth.founders)
    assert len({tuple(r) for r in longer}) == 17
    np.testing.assert_array_equal(extend_founders(truth.founders, 10), truth.founders)
    with pytest.raises(InputError):
        extend_founders(truth.founders, 5)
    data, t60 = generate(preset("conserved", seed=2, n_loci=60, founder_pool=longer))
    for k in t60.shared:
        users = t60.assignments == k
        assert users.any()
    assert data.n_loci == 60


def test_truth_frequencies_sum_to_one():
    _, truth = generate(SimSpec(seed=4))
    for freqs in truth_haplotype_frequencies(truth, 5):
        assert sum(freqs.values()) == pytest.approx(1.0)
