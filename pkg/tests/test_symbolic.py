import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from torus_entropy.errors import DomainError, RangeError
from torus_entropy.symbolic import (BACKWARD, FinitePartition, TableMeasure, Word,
                                    bernoulli_measure, dirac_measure, index_word,
                                    ks_entropy_estimate, markov_measure, partition_entropy,
                                    refined_entropy, stationary_distribution,
                                    subadditivity_defect, word_index)

P_MARKOV = np.array([[0.9, 0.1], [0.5, 0.5]])


def stationary_markov(P=P_MARKOV, depth=10):
    return markov_measure(P, stationary_distribution(P), depth)


def enumerate_h(P, pi, n):
    """-sum over all words of length n of mu log mu, by brute force."""
    K = len(pi)
    h = 0.0
    for w in itertools.product(range(K), repeat=n):
        m = pi[w[0]]
        for a, b in zip(w, w[1:]):
            m *= P[a][b]
        if m > 0:
            h -= m * math.log(m)
    return h


@st.composite
def stochastic_matrices(draw, K=None):
    K = K or draw(st.integers(2, 3))
    rows = []
    for _ in range(K):
        raw = draw(st.lists(st.floats(0.05, 1.0), min_size=K, max_size=K))
        rows.append(np.array(raw) / sum(raw))
    return np.array(rows)


class TestPartitionEntropy:
    def test_uniform(self):
        assert partition_entropy([0.25] * 4) == pytest.approx(math.log(4), abs=1e-12)
        assert math.log(4) == pytest.approx(1.386294, abs=1e-6)

    def test_dirac(self):
        assert partition_entropy([1.0, 0.0, 0.0]) == 0.0

    def test_two_atoms(self):
        assert partition_entropy([0.25, 0.75]) == pytest.approx(0.562335, abs=1e-6)

    @pytest.mark.parametrize("bad", [[0.5, 0.6], [-0.1, 1.1], []])
    def test_rejects_non_probability_vectors(self, bad):
        with pytest.raises(DomainError):
            partition_entropy(bad)


def test_word_index_roundtrip():
    for i in range(27):
        assert word_index(index_word(i, 3, 3), 3) == i


def test_word_rejects_bad_symbols():
    with pytest.raises(DomainError):
        Word((0, 3)).check_alphabet(3)
    assert Word((1, 0)).concat(Word((1,))).symbols == (1, 0, 1)


def test_bernoulli_refined_entropy():
    assert refined_entropy(bernoulli_measure([0.5, 0.5], 4), 3) == pytest.approx(3 * math.log(2), abs=1e-12)


def test_periodic_dirac_has_zero_entropy():
    mu = dirac_measure((0, 1), 2, 6)
    assert all(refined_entropy(mu, n) == 0 for n in range(1, 7))
    slope, _ = ks_entropy_estimate(mu, 2, 6)
    assert slope == pytest.approx(0.0, abs=1e-15)


def test_markov_refined_entropy_matches_enumeration():
    mu = stationary_markov()
    pi = stationary_distribution(P_MARKOV)
    assert refined_entropy(mu, 2) == pytest.approx(enumerate_h(P_MARKOV, pi, 2), abs=1e-12)


def test_stationary_mass():
    mu = stationary_markov()
    np.testing.assert_allclose(stationary_distribution(P_MARKOV), [5 / 6, 1 / 6], atol=1e-15)
    assert mu.mass((0, 0)) == pytest.approx(0.75, abs=1e-15)


def test_identity_transition_gives_constant_words():
    mu = markov_measure(np.eye(3), np.full(3, 1 / 3), 3)
    table = mu.table(3)
    for a in range(3):
        assert table[word_index((a, a, a), 3)] == pytest.approx(1 / 3)
    assert table.sum() == pytest.approx(1.0)
    assert np.count_nonzero(table) == 3


def test_bernoulli_rows_give_product_measure():
    p = np.array([0.2, 0.3, 0.5])
    mu = markov_measure(np.tile(p, (3, 1)), p, 3)
    for w in itertools.product(range(3), repeat=3):
        assert mu.mass(w) == pytest.approx(np.prod(p[list(w)]), rel=1e-14)


def test_ks_entropy_bernoulli():
    slope, _ = ks_entropy_estimate(bernoulli_measure([0.5, 0.5], 8), 2, 8)
    assert slope == pytest.approx(math.log(2), abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(stochastic_matrices(), st.integers(3, 7))
def test_ks_entropy_equals_markov_rate(P, n_max):
    mu = markov_measure(P, stationary_distribution(P), n_max)
    pi = stationary_distribution(P)
    closed = -sum(pi[i] * sum(p * math.log(p) for p in P[i] if p > 0) for i in range(len(pi)))
    slope, _ = ks_entropy_estimate(mu, 2, n_max)
    assert slope == pytest.approx(closed, abs=1e-9)
    assert mu.entropy_rate() == pytest.approx(closed, abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(stochastic_matrices())
def test_entropy_sequence_properties(P):
    depth = 6
    mu = markov_measure(P, stationary_distribution(P), depth)
    K = P.shape[0]
    H = [refined_entropy(mu, n) for n in range(1, depth + 1)]
    assert all(b >= a - 1e-12 for a, b in zip(H, H[1:]))
    assert all(0 <= h <= n * math.log(K) + 1e-12 for n, h in enumerate(H, start=1))
    for n in range(1, depth):
        for m in range(1, depth - n + 1):
            assert subadditivity_defect(mu, n, m) <= 1e-10
    assert mu.compatibility_residual() < 1e-10


def test_iid_subadditivity_is_additive():
    mu = bernoulli_measure([0.3, 0.7], 6)
    for n, m in [(1, 1), (2, 3), (3, 3)]:
        assert subadditivity_defect(mu, n, m) == pytest.approx(0.0, abs=1e-12)


def test_ks_estimate_range_checks():
    mu = bernoulli_measure([0.5, 0.5], 4)
    with pytest.raises(RangeError):
        ks_entropy_estimate(mu, 1, 3)
    with pytest.raises(RangeError):
        ks_entropy_estimate(mu, 2, 5)


def test_reversed_backward_table():
    # Backward measure written (b_-1, b_0): reversing gives the forward table on (b_0, b_-1).
    t1 = np.array([0.4, 0.6])
    t2 = np.array([0.1, 0.3, 0.3, 0.3])
    mu = TableMeasure([t1, t2], 2, orientation=BACKWARD)
    assert mu.compatibility_residual() < 1e-15
    rev = mu.reversed()
    assert rev.mass((1, 0)) == mu.mass((0, 1))


class TestFinitePartition:
    def test_entropy_of_cylinder_unions(self):
        mu = bernoulli_measure([0.5, 0.5], 3)
        part = FinitePartition((((0,),), ((1, 0), (1, 1, 0)), ((1, 1, 1),)), 2)
        assert part.entropy(mu) == pytest.approx(partition_entropy([0.5, 0.375, 0.125]))

    def test_overlapping_atoms_rejected(self):
        with pytest.raises(DomainError):
            FinitePartition((((0,),), ((0, 1),)), 2)
