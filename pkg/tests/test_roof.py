import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import GENERIC_ROOF, LOG_LAMBDA
from torus_entropy.dynamics import Cover, discrete_jacobian
from torus_entropy.errors import ConfigurationError, DomainError, NeedsMoreSymbols, ResourceError
from torus_entropy.roof import (BACKWARD, RoofFunction, adapted_partition, check_eps,
                                check_partition_completeness, index_family, k_prime, minimal_eps,
                                refine, roof_from_jacobian, stopping_data, stopping_time)
from torus_entropy.symbolic import bernoulli_measure

TENTH = Fraction(1, 10)
VARIABLE = [[0.3, 0.3], [0.5, 0.5]]


def tenth_roof(K=2):
    return RoofFunction.constant(TENTH, K, eta=0.1, exact=True)


def quarter_roof(K=2):
    return RoofFunction.constant(Fraction(1, 4), K, eta=0.25, exact=True)


def variable_roof(exact=True):
    return RoofFunction.from_values(VARIABLE, eta=0.5, exact=exact)


def brute_stopping_time(values, word, t):
    """Smallest k with sum_{i=1}^{k-1} f(x_i, x_{i+1}) > t, by direct summation."""
    s = 0
    for k in range(2, len(word)):
        s += values[word[k - 1]][word[k]]
        if s > t:
            return k
    raise AssertionError("word too short")


def two_sided(f, word, t):
    k = len(word) - 1
    lower = sum(f(word[i], word[i + 1]) for i in range(1, k - 1))
    upper = lower + f(word[k - 1], word[k])
    return lower <= t < upper


class TestRoofFromJacobian:
    def test_linear_cat(self, cat):
        table = discrete_jacobian(cat, Cover.strips(2, halo=0.05, eta=0.1))
        f = roof_from_jacobian(table)
        vals = np.asarray(f.values)[~table.empty]
        np.testing.assert_allclose(vals, 0.1 * LOG_LAMBDA, atol=1e-12)
        assert vals[0] == pytest.approx(0.0962424, abs=1e-7)

    def test_empty_cells_get_eta_b0(self, perturbed):
        table = discrete_jacobian(perturbed, Cover.grid(4, 4, halo=0.02, eta=0.1), grid_density=8)
        f = roof_from_jacobian(table)
        vals = np.asarray(f.values)
        assert table.empty.any()
        assert np.all(vals[table.empty] == pytest.approx(table.eta * table.b0, rel=1e-15))
        assert np.all((table.a0 * table.eta <= vals + 1e-15) & (vals <= table.b0 * table.eta + 1e-15))

    def test_eps_constraints_are_named(self):
        with pytest.raises(ConfigurationError, match="eta\\*b0 <= eps/2"):
            check_eps(1.0, 1.0, 0.1, 0.1)
        with pytest.raises(ConfigurationError, match="2\\+b0/a0"):
            check_eps(1.0, 1.0, 0.1, 0.5)
        check_eps(1.0, 1.0, 0.1, minimal_eps(1.0, 1.0, 0.1))

    def test_out_of_bounds_value_rejected(self):
        with pytest.raises(DomainError):
            RoofFunction(((0.1, 0.5), (0.1, 0.1)), eta=0.1, a0=1.0, b0=1.0)


class TestStoppingTime:
    def test_constant_tenth(self):
        f = tenth_roof()
        assert stopping_time(f, (0,) * 20, 1) == 12
        assert stopping_time(f, (1,) * 20, Fraction(1, 4)) == 4

    def test_threshold_precondition(self):
        with pytest.raises(DomainError):
            stopping_time(tenth_roof(), (0,) * 20, Fraction(1, 10))

    def test_short_stream_reports_deficit(self):
        with pytest.raises(NeedsMoreSymbols) as info:
            stopping_time(tenth_roof(), (0,) * 8, 1)
        assert info.value.deficit >= 1

    @settings(max_examples=80, deadline=None)
    @given(st.lists(st.integers(0, 1), min_size=14, max_size=14),
           st.floats(0.996, 2.0), st.lists(st.integers(0, 1), min_size=10, max_size=10))
    def test_tamper_and_brute_force(self, word, t, tail):
        f = RoofFunction.from_values(GENERIC_ROOF, eta=0.5)
        stream = tuple(word) + tuple(tail)
        try:
            k = stopping_time(f, stream, t)
        except NeedsMoreSymbols:
            return
        assert k == brute_stopping_time(GENERIC_ROOF, stream, t)
        # Symbols after position k never change the answer.
        tampered = stream[: k + 1] + tuple(1 - s for s in stream[k + 1:])
        assert stopping_time(f, tampered, t) == k

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.integers(0, 2), min_size=40, max_size=40), st.floats(0.4, 3.0), st.floats(0.0, 1.0))
    def test_monotone_in_t(self, word, t, dt):
        f = RoofFunction.from_values([[0.11, 0.13, 0.17], [0.12, 0.14, 0.15], [0.1, 0.16, 0.18]],
                                     eta=0.1)
        assert stopping_time(f, word, t) <= stopping_time(f, word, t + dt)

    def test_genericity_guard(self, rng):
        f = RoofFunction.from_values(GENERIC_ROOF, eta=0.5)
        checked = 0
        for _ in range(300):
            word = tuple(rng.integers(0, 2, 30))
            t = float(rng.uniform(1.0, 5.0))
            partial = np.cumsum([GENERIC_ROOF[a][b] for a, b in zip(word[1:], word[2:])])
            if np.min(np.abs(partial - t)) < 1e-9:
                continue
            checked += 1
            assert stopping_time(f, word, t) == stopping_time(f, word, t - 1e-12)
        assert checked > 250


class TestIndexFamily:
    def test_constant_quarter_threshold(self):
        fam = index_family(tenth_roof(), Fraction(1, 4))
        assert len(fam) == 32
        assert set(fam) == set(itertools.product(range(2), repeat=5))

    @pytest.mark.parametrize("K, roof, t", [
        (2, VARIABLE, 1.0),
        (2, GENERIC_ROOF, 1.3),
        (3, [[0.3, 0.4, 0.5], [0.35, 0.45, 0.3], [0.5, 0.3, 0.4]], 1.2),
    ])
    def test_complete_prefix_code(self, K, roof, t):
        f = RoofFunction.from_values(roof, eta=0.5, exact=True)
        fam = list(index_family(f, t))
        words = set(fam)
        # Exact Kraft sum 1 means every infinite stream starts with some member.
        assert sum(Fraction(1, K ** len(w)) for w in fam) == 1
        for w in fam:
            assert all(w[:j] not in words for j in range(1, len(w)))
            assert two_sided(f, w, Fraction(repr(t)))

    def test_variable_roof_lengths_differ(self):
        fam = index_family(variable_roof(), 1)
        assert len(set(fam.lengths.tolist())) > 1
        assert all(len(w) >= 4 for w in fam)

    def test_bernoulli_completeness(self):
        fam = index_family(RoofFunction.from_values(GENERIC_ROOF, eta=0.5), 1.5)
        mu = bernoulli_measure([0.5, 0.5], fam.max_length)
        assert check_partition_completeness(fam, mu) < 1e-12

    def test_backward_family_reverses_transposed(self):
        f = RoofFunction.from_values(GENERIC_ROOF, eta=0.5)
        fwd = set(index_family(f.transposed(), 1.2))
        bwd = set(index_family(f, 1.2, orientation=BACKWARD))
        assert bwd == {w[::-1] for w in fwd}

    def test_cap_raises(self):
        with pytest.raises(ResourceError):
            index_family(tenth_roof(), 1, cap=1000)

    def test_orientation_mismatch(self):
        fam = index_family(tenth_roof(), Fraction(1, 4))
        with pytest.raises(DomainError):
            check_partition_completeness(fam, bernoulli_measure([0.5, 0.5], 6).reversed())


class TestAdaptedPartition:
    def test_constant_tenth_k_prime(self):
        f = tenth_roof()
        gamma = (0,) * 13
        k, kp, chain = stopping_data(f, gamma)
        assert (k, kp) == (12, 11)
        assert k_prime(f, gamma) == 11
        assert abs(k - kp) <= f.b0 / f.a0 + 1
        assert chain == [(11, 0, TENTH), (12, TENTH, TENTH)]

    def test_constant_tenth_atoms(self):
        atoms = adapted_partition(tenth_roof())
        assert len(atoms) == 2 * 2 ** 13
        first = [a for a in atoms if a.gamma == (1,) * 13]
        assert [(a.p - 2, a.interval, a.empty) for a in first] == [
            (9, (0, TENTH), False), (10, (TENTH, TENTH), True)]

    def test_non_member_rejected(self):
        with pytest.raises(DomainError):
            k_prime(tenth_roof(), (0,) * 12)
        with pytest.raises(DomainError):
            k_prime(tenth_roof(), (0,) * 14)

    def test_variable_roof_chains(self):
        f = variable_roof()
        fam = index_family(f, 1)
        atoms = adapted_partition(f)
        bound = f.b0 / f.a0 + 1
        degenerate = 0
        for gamma in fam:
            k, kp, chain = stopping_data(f, gamma)
            assert abs(k - kp) <= bound
            assert len(chain) == k - kp + 1
            fg = f(gamma[0], gamma[1])
            nonempty = sorted((lo, hi) for _, lo, hi in chain if lo < hi)
            assert nonempty[0][0] == 0 and nonempty[-1][1] == fg
            assert all(a[1] == b[0] for a, b in zip(nonempty, nonempty[1:]))
            if k == kp:
                degenerate += 1
                assert chain == [(k, 0, fg)]
        assert degenerate > 0
        assert all(a.width <= f(a.gamma[0], a.gamma[1]) for a in atoms)

    def test_unit_threshold_required(self):
        with pytest.raises(DomainError):
            adapted_partition(RoofFunction.constant(1.5, 2, eta=1.5))


class TestRefine:
    def test_n1_reproduces_atoms(self):
        f = variable_roof()
        atoms = adapted_partition(f)
        part = refine(atoms, f, 1)
        expected = {(a.gamma, a.interval) for a in atoms if not a.empty}
        assert {(w, iv) for w, iv in part} == expected

    @pytest.mark.parametrize("n", [1, 2, 3])
    def test_constant_quarter(self, n):
        # Each unit of time spends 4 roof steps; a word also carries 3 boundary symbols.
        f = quarter_roof()
        part = refine(None, f, n)
        assert set(part.lengths.tolist()) == {4 * n + 3}
        assert len(part) == 2 ** (4 * n + 3)
        for i in (0, len(part) - 1):
            w = part.word(i)
            assert sum(f(w[j], w[j + 1]) for j in range(4 * n)) == n
            assert (part.lo[i], part.hi[i]) == (0, Fraction(1, 4))

    def test_rejects_n0(self):
        with pytest.raises(DomainError):
            refine(None, variable_roof(), 0)

    @pytest.mark.parametrize("n", [1, 2, 3, 4])
    def test_float_and_exact_agree_on_generic_roof(self, n):
        fl = refine(None, RoofFunction.from_values(GENERIC_ROOF, eta=0.5), n)
        ex = refine(None, RoofFunction.from_values(GENERIC_ROOF, eta=0.5, exact=True), n)
        assert len(fl) == len(ex)
        assert {fl.word(i) for i in range(len(fl))} == {ex.word(i) for i in range(len(ex))}
        np.testing.assert_allclose(np.sort(fl.widths), np.sort(ex.widths), atol=1e-12)

    def test_atom_count_growth(self):
        f = RoofFunction.from_values(GENERIC_ROOF, eta=0.5)
        counts = [len(refine(None, f, n)) for n in range(1, 5)]
        assert counts == [74, 704, 5632, 42320]
        # Growth is at most exponential with rate K^(max word length per unit time).
        ratios = [b / a for a, b in zip(counts, counts[1:])]
        assert max(ratios) <= 2 ** (1 / (f.a0 * f.eta) + 1)
        assert math.log(counts[-1]) / 4 < 4 * math.log(2)
