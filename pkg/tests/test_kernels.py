"""The compiled kernels must match the pure-Python ones bit for bit."""

import numpy as np
import pytest

from conftest import GENERIC_ROOF
from torus_entropy._kernels import compiled, python

pytestmark = pytest.mark.skipif(compiled is None, reason="compiled kernels not built")

ROOFS = {
    "generic": GENERIC_ROOF,
    "variable": [[0.3, 0.3], [0.5, 0.5]],
    "three": [[0.3, 0.4, 0.5], [0.35, 0.45, 0.3], [0.5, 0.3, 0.4]],
}


def as_tuples(words, lengths):
    return [tuple(int(s) for s in row[:L]) for row, L in zip(words, lengths)]


def keyed(words, *columns):
    order = sorted(range(len(words)), key=words.__getitem__)
    return [words[i] for i in order], [[col[i] for i in order] for col in columns]


@pytest.mark.parametrize("name", ROOFS)
@pytest.mark.parametrize("t", [1.0, 1.7, 2.9])
def test_family_enumerate(name, t):
    roof = ROOFS[name]
    py_words = python.family_enumerate(roof, t, 10 ** 6)
    words, lengths = compiled.family_enumerate(np.array(roof), t, 10 ** 6)
    assert sorted(as_tuples(words, lengths)) == sorted(py_words)


@pytest.mark.parametrize("name", ["generic", "variable"])
@pytest.mark.parametrize("n", [1, 2, 3])
def test_refine_enumerate(name, n):
    roof = ROOFS[name]
    py_words, py_lo, py_hi = python.refine_enumerate(roof, n, 10 ** 7, 1.0)
    w, L, lo, hi = compiled.refine_enumerate(np.array(roof), n, 10 ** 7)
    a, (alo, ahi) = keyed(py_words, py_lo, py_hi)
    b, (blo, bhi) = keyed(as_tuples(w, L), list(lo), list(hi))
    assert a == b
    assert alo == blo and ahi == bhi


def test_stopping_index(rng):
    roof = np.array(GENERIC_ROOF)
    for _ in range(200):
        word = rng.integers(0, 2, 24).astype(np.int8)
        t = float(rng.uniform(1.0, 6.0))
        assert compiled.stopping_index(roof, word, t) == python.stopping_index(GENERIC_ROOF, tuple(word.tolist()), t)


@pytest.mark.parametrize("alpha, lo, hi, m", [
    ((0, 1, 1, 0, 1), 0.0, 0.2982679491924311, 1),
    ((1, 0, 0, 1, 1, 0), 0.1, 0.4, 2),
    ((1, 1, 1, 1, 0), 0.0, 0.4973542486889354, 3),
])
def test_preimage_terms(alpha, lo, hi, m):
    py = python.preimage_terms(GENERIC_ROOF, alpha, lo, hi, m, 20)
    w, L, ov = compiled.preimage_terms(np.array(GENERIC_ROOF), np.array(alpha, dtype=np.int8), lo, hi, m, 20)
    a, (aov,) = keyed([u for u, _ in py], [o for _, o in py])
    b, (bov,) = keyed(as_tuples(w, L), list(ov))
    assert a and a == b
    assert aov == bov
