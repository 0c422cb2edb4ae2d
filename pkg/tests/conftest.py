import numpy as np
import pytest

# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES = []


def report(number, name, ok, detail=""):
    line = f"criterion {number:>2} [{'PASS' if ok else 'FAIL'}] {name}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

from hdphase.core_model import Dataset


def hap(s):
    return np.array([int(c) for c in s], dtype=np.int64)


def genotypes_from_pairs(pairs):
    """(N, 2, T) haplotype array -> (N, T, 2) sorted genotype array."""
    pairs = np.asarray(pairs)
    return np.sort(np.stack([pairs[:, 0], pairs[:, 1]], axis=2), axis=2)


@pytest.fixture
def two_pop_dataset():
    G = np.array([[[0, 1], [0, 0], [1, 1]],
                  [[0, 0], [0, 1], [0, 1]],
                  [[1, 1], [0, 1], [0, 0]],
                  [[0, 1], [0, 1], [0, 1]]])
    return Dataset.from_arrays(G, [0, 0, 1, 1], ids=["a", "b", "c", "d"],
                               population_names=["north", "south"])


def build_state(H, C, A, pop=None, G=None, tau=1.0, gamma=1.0, alphabet_size=2):
    """Sampler state with given haplotypes, assignments and founder patterns."""
    from hdphase import engine
    H = np.asarray(H, dtype=np.int64)
    n, _, t_len = H.shape
    pop = np.zeros(n, dtype=np.int64) if pop is None else np.asarray(pop, dtype=np.int64)
    G = genotypes_from_pairs(H) if G is None else np.asarray(G, dtype=np.int64)
    J = int(pop.max()) + 1
    state = engine.new_state(G, pop, J, alphabet_size, np.random.default_rng(0),
                             init_haplotypes=H, gamma=gamma, tau=tau)
    A = np.asarray(A, dtype=np.int64)
    state.A[:] = 0
    state.A[: len(A)] = A
    state.C[:] = np.asarray(C, dtype=np.int64)
    engine.recompute_counts(state, into=state)
    engine.check_counts(state)
    return state
