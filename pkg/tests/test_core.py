import numpy as np
import pytest
from hypothesis import given, strategies as st

from hdphase.core_model import (BIALLELIC, MISSING, AlleleAlphabet, Dataset, Hyperparams, Individual,
                          InputError, canonicalize_genotype, het_sites, validate_dataset)


@pytest.mark.parametrize("pair,expected", [((1, 0), (0, 1)), ((0, 0), (0, 0)), ((1, 1), (1, 1))])
def test_canonicalize(pair, expected):
    assert canonicalize_genotype(pair) == expected


def test_canonicalize_rejects_foreign_symbol():
    with pytest.raises(InputError):
        canonicalize_genotype((0, 2))
    assert canonicalize_genotype((3, 2), AlleleAlphabet(4)) == (2, 3)
    assert canonicalize_genotype(MISSING) is MISSING


@given(st.integers(0, 5), st.integers(0, 5))
def test_canonicalize_is_order_free(a, b):
    alph = AlleleAlphabet(6)
    assert canonicalize_genotype((a, b), alph) == canonicalize_genotype((b, a), alph)


@pytest.mark.parametrize("geno,expected", [
    ([(0, 0), (0, 1), (1, 1)], [1]),
    ([(0, 0), (1, 1), (0, 0)], []),
    ([(0, 1), (0, 1), (0, 1)], [0, 1, 2]),
    ([(0, 1), MISSING, (0, 1)], [0, 2]),
])
def test_het_sites(geno, expected):
    assert het_sites(geno) == expected


def test_validate_ok(two_pop_dataset):
    assert validate_dataset(two_pop_dataset) == []
    assert two_pop_dataset.n_populations == 2
    assert two_pop_dataset.n_individuals == 4
    assert two_pop_dataset.n_loci == 3


def test_validate_ragged_names_individual():
    d = Dataset([[Individual("x", [(0, 1), (0, 0)]), Individual("y", [(0, 1)])]])
    problems = validate_dataset(d)
    assert any("'y'" in p for p in problems)


def test_validate_empty_population_names_group():
    d = Dataset([[Individual("x", [(0, 1)])], []], ["full", "hollow"])
    assert any("'hollow'" in p for p in validate_dataset(d))


def test_validate_duplicate_and_noncanonical():
    d = Dataset([[Individual("x", [(1, 0)]), Individual("x", [(0, 1)])]])
    problems = validate_dataset(d)
    assert any("duplicate" in p for p in problems)
    assert any("canonical" in p for p in problems)


def test_dataset_views(two_pop_dataset):
    d = two_pop_dataset
    assert d.ids() == ["a", "b", "c", "d"]
    assert d.population_index().tolist() == [0, 0, 1, 1]
    assert d.pooled().n_populations == 1
    assert d.single_population(1).ids() == ["c", "d"]
    sub = d.subset_loci(1, 3)
    assert sub.n_loci == 2
    np.testing.assert_array_equal(sub.genotype_array(), d.genotype_array()[:, 1:3])


def test_missing_round_trip():
    G = np.array([[[-1, -1], [0, 1]]])
    d = Dataset.from_arrays(G, [0])
    assert d.populations[0][0].genotype[0] is MISSING
    np.testing.assert_array_equal(d.genotype_array(), G)


def test_hyperparams_positive():
    with pytest.raises(InputError):
        Hyperparams(alpha_h=0)
    with pytest.raises(InputError):
        AlleleAlphabet(1)
    assert 0 in BIALLELIC and 2 not in BIALLELIC
