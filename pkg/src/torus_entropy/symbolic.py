"""Shift spaces over a finite alphabet, cylinder measures and entropies.

Symbols are the integers ``0..K-1``.  A forward word ``(a_0, ..., a_k)`` is
stored in time order.  A backward word ``(b_{-k}, ..., b_0)`` is also stored
in the order it is written, so its present symbol ``b_0`` is the last entry;
:meth:`CylinderMeasure.reversed` turns a backward measure into a forward one
over the reversed words, which is how the rest of the package consumes it.

Cylinder tables are flat arrays of length ``K**d``; the first symbol of a
word is the most significant base-``K`` digit.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import DomainError, RangeError

FORWARD = "forward"
BACKWARD = "backward"
_ORIENTATIONS = (FORWARD, BACKWARD)


@dataclass(frozen=True)
class Word:
    """A finite word with an orientation."""

    symbols: tuple
    orientation: str = FORWARD

    def __post_init__(self):
        if len(self.symbols) < 1:
            raise DomainError("a word has length >= 1")
        if self.orientation not in _ORIENTATIONS:
            raise DomainError(f"unknown orientation {self.orientation!r}")
        object.__setattr__(self, "symbols", tuple(int(s) for s in self.symbols))

    def __len__(self):
        return len(self.symbols)

    def check_alphabet(self, K: int) -> None:
        if any(s < 0 or s >= K for s in self.symbols):
            raise DomainError(f"word {self.symbols} has symbols outside 0..{K - 1}")

    def concat(self, other: "Word") -> "Word":
        """Concatenation ``self.other`` (the ``beta.alpha`` notation)."""
        return Word(self.symbols + other.symbols, self.orientation)


def word_index(word: Sequence[int], K: int) -> int:
    """Base-``K`` index of ``word`` with the first symbol most significant."""
    idx = 0
    for s in word:
        idx = idx * K + int(s)
    return idx


def index_word(index: int, K: int, length: int) -> tuple:
    out = []
    for _ in range(length):
        index, r = divmod(index, K)
        out.append(r)
    return tuple(reversed(out))


def _xlogx(w: np.ndarray) -> np.ndarray:
    out = np.zeros_like(w, dtype=float)
    pos = w > 0
    out[pos] = w[pos] * np.log(w[pos])
    return out


def partition_entropy(weights: Iterable[float], *, atol: float = 1e-9) -> float:
    """Entropy ``-sum w log w`` of a probability vector (natural log, 0 log 0 = 0)."""
    w = np.asarray(list(weights) if not isinstance(weights, np.ndarray) else weights, dtype=float)
    if w.size == 0:
        raise DomainError("empty weight vector")
    if np.any(w < 0):
        raise DomainError("negative weight")
    total = float(np.sum(w))
    if abs(total - 1.0) > atol:
        raise DomainError(f"weights sum to {total!r}, not 1 within {atol}")
    return float(-np.sum(_xlogx(w)))


class CylinderMeasure:
    """Finitely additive weights on cylinders of a one-sided shift.

    Subclasses provide :meth:`table` and, optionally, a faster :meth:`masses`.
    """

    K: int
    depth: int
    orientation: str

    def table(self, d: int) -> np.ndarray:  # pragma: no cover - abstract
        raise NotImplementedError

    def _check_depth(self, d: int) -> None:
        if d < 1 or d > self.depth:
            raise RangeError(f"depth {d} outside 1..{self.depth}")

    def mass(self, word: Sequence[int]) -> float:
        word = tuple(word.symbols) if isinstance(word, Word) else tuple(word)
        self._check_depth(len(word))
        return float(self.table(len(word))[word_index(word, self.K)])

    def masses(self, words: np.ndarray, lengths: np.ndarray) -> np.ndarray:
        """Masses of many words given as a padded 2-D array plus lengths."""
        words = np.asarray(words)
        lengths = np.asarray(lengths)
        out = np.empty(len(lengths), dtype=float)
        for L in np.unique(lengths):
            L = int(L)
            self._check_depth(L)
            sel = lengths == L
            idx = np.zeros(int(sel.sum()), dtype=np.int64)
            for col in range(L):
                idx = idx * self.K + words[sel, col]
            out[sel] = self.table(L)[idx]
        return out

    def compatibility_residual(self) -> float:
        """Largest Kolmogorov-compatibility violation over all stored depths."""
        res = abs(float(self.table(1).sum()) - 1.0)
        for d in range(1, self.depth):
            nxt = self.table(d + 1).reshape(-1, self.K)
            if self.orientation == FORWARD:
                summed = nxt.sum(axis=1)
            else:
                summed = self.table(d + 1).reshape(self.K, -1).sum(axis=0)
            res = max(res, float(np.max(np.abs(summed - self.table(d)))))
        return res

    def reversed(self) -> "TableMeasure":
        """Forward-oriented measure over reversed words.

        For a backward measure this is the natural forward object: the shift
        that forgets the present symbol becomes the usual left shift.
        """
        tables = []
        for d in range(1, self.depth + 1):
            t = self.table(d).reshape((self.K,) * d)
            tables.append(np.ascontiguousarray(t.transpose(tuple(range(d - 1, -1, -1)))).ravel())
        orient = FORWARD if self.orientation == BACKWARD else BACKWARD
        return TableMeasure(tables, self.K, orient)


class TableMeasure(CylinderMeasure):
    """Cylinder measure given by explicit tables for depths ``1..depth``."""

    def __init__(self, tables: Sequence[np.ndarray], K: int, orientation: str = FORWARD,
                 *, check: bool = True, atol: float = 1e-9):
        if orientation not in _ORIENTATIONS:
            raise DomainError(f"unknown orientation {orientation!r}")
        self.K = int(K)
        self.orientation = orientation
        self._tables = [np.asarray(t, dtype=float).ravel() for t in tables]
        self.depth = len(self._tables)
        for d, t in enumerate(self._tables, start=1):
            if t.size != self.K ** d:
                raise DomainError(f"table at depth {d} has size {t.size}, expected {self.K ** d}")
            if np.any(t < -1e-15):
                raise DomainError("negative cylinder mass")
        if check:
            res = self.compatibility_residual()
            if res > atol:
                raise DomainError(f"compatibility residual {res:.3e} exceeds {atol}")

    def table(self, d: int) -> np.ndarray:
        self._check_depth(d)
        return self._tables[d - 1]


class MarkovMeasure(CylinderMeasure):
    """Markov chain cylinder measure, exact at any depth.

    Full tables are materialised lazily (and cached) up to
    ``table_limit`` entries; masses of individual long words are products of
    transition probabilities and never need a table.
    """

    def __init__(self, transition, initial, depth: int, *, table_limit: int = 1 << 24):
        P = np.asarray(transition, dtype=float)
        pi = np.asarray(initial, dtype=float)
        if P.ndim != 2 or P.shape[0] != P.shape[1]:
            raise DomainError("transition matrix must be square")
        if np.any(P < 0) or np.any(np.abs(P.sum(axis=1) - 1.0) > 1e-12):
            raise DomainError("transition matrix is not stochastic (rows must sum to 1 +- 1e-12)")
        if pi.shape != (P.shape[0],) or np.any(pi < 0) or abs(pi.sum() - 1.0) > 1e-12:
            raise DomainError("initial distribution is not a probability vector")
        if depth < 1:
            raise RangeError("depth must be >= 1")
        self.P = P
        self.initial = pi
        self.K = P.shape[0]
        self.depth = int(depth)
        self.orientation = FORWARD
        self.table_limit = table_limit
        self._cache = {1: pi.copy()}

    def table(self, d: int) -> np.ndarray:
        self._check_depth(d)
        if self.K ** d > self.table_limit:
            raise RangeError(f"table at depth {d} exceeds {self.table_limit} entries; use masses()")
        top = max(k for k in self._cache if k <= d)
        cur = self._cache[top]
        for k in range(top + 1, d + 1):
            # new[w.a.b] = old[w.a] * P[a, b]
            cur = (cur.reshape(-1, self.K)[:, :, None] * self.P[None, :, :]).ravel()
            self._cache[k] = cur
        return self._cache[d]

    def masses(self, words: np.ndarray, lengths: np.ndarray) -> np.ndarray:
        words = np.asarray(words, dtype=np.int64)
        lengths = np.asarray(lengths)
        if lengths.size and (lengths.min() < 1 or lengths.max() > self.depth):
            raise RangeError(f"word length outside 1..{self.depth}")
        out = self.initial[words[:, 0]].copy()
        for col in range(1, words.shape[1] if words.ndim == 2 else 0):
            live = lengths > col
            out[live] *= self.P[words[live, col - 1], words[live, col]]
        return out

    def mass(self, word: Sequence[int]) -> float:
        word = tuple(word.symbols) if isinstance(word, Word) else tuple(word)
        self._check_depth(len(word))
        m = self.initial[word[0]]
        for a, b in zip(word, word[1:]):
            m *= self.P[a, b]
        return float(m)

    def entropy_rate(self) -> float:
        """Closed-form ``-sum_i pi_i sum_j p_ij log p_ij`` (uses ``initial`` as pi)."""
        return float(-np.sum(self.initial[:, None] * _xlogx(self.P)))


def stationary_distribution(transition) -> np.ndarray:
    """Left Perron vector of a stochastic matrix, normalised to sum 1."""
    P = np.asarray(transition, dtype=float)
    K = P.shape[0]
    # Solve pi (P - I) = 0 with sum(pi) = 1 as a least-squares system.
    A = np.vstack([(P - np.eye(K)).T, np.ones((1, K))])
    b = np.zeros(K + 1)
    b[-1] = 1.0
    pi, *_ = np.linalg.lstsq(A, b, rcond=None)
    return pi


def markov_measure(transition, initial, depth: int) -> MarkovMeasure:
    """Cylinder measure of a Markov chain with the given initial law."""
    return MarkovMeasure(transition, initial, depth)


def bernoulli_measure(p: Sequence[float], depth: int) -> MarkovMeasure:
    """Product measure with one-symbol law ``p``."""
    p = np.asarray(p, dtype=float)
    return MarkovMeasure(np.tile(p, (p.size, 1)), p, depth)


def dirac_measure(word: Sequence[int], K: int, depth: int) -> TableMeasure:
    """Point mass on the periodic sequence ``word word word ...``."""
    word = tuple(word)
    tables = []
    for d in range(1, depth + 1):
        t = np.zeros(K ** d)
        prefix = tuple(word[i % len(word)] for i in range(d))
        t[word_index(prefix, K)] = 1.0
        tables.append(t)
    return TableMeasure(tables, K)


def refined_entropy(measure: CylinderMeasure, n: int) -> float:
    """``H_n``: entropy of the depth-``n`` cylinder masses."""
    if n < 1 or n > measure.depth:
        raise RangeError(f"n={n} outside 1..{measure.depth}")
    return partition_entropy(measure.table(n))


def ks_entropy_estimate(measure: CylinderMeasure, n_min: int, n_max: int):
    """Least-squares slope of ``H_n`` over ``n_min..n_max`` and the ``H_n/n`` list."""
    if n_min < 2:
        raise RangeError("n_min must be >= 2")
    if n_max > measure.depth:
        raise RangeError(f"n_max={n_max} exceeds depth {measure.depth}")
    if n_max < n_min:
        raise RangeError("n_max < n_min")
    ns = np.arange(n_min, n_max + 1)
    H = np.array([refined_entropy(measure, int(n)) for n in ns])
    per_n = list(H / ns)
    if len(ns) == 1:
        # A single point fixes no slope; fall back to the increment H_n - H_{n-1}.
        slope = float(H[0] - refined_entropy(measure, n_min - 1))
    else:
        slope = float(np.polyfit(ns, H, 1)[0])
    return slope, per_n


def subadditivity_defect(measure: CylinderMeasure, n: int, m: int) -> float:
    """``H_{n+m} - H_n - H_m(pushforward by shift^n)``; non-positive means subadditive."""
    if n < 1 or m < 1:
        raise RangeError("n and m must be >= 1")
    if n + m > measure.depth:
        raise RangeError(f"n+m={n + m} exceeds depth {measure.depth}")
    K = measure.K
    big = measure.table(n + m)
    if measure.orientation == FORWARD:
        pushed = big.reshape(K ** n, K ** m).sum(axis=0)
    else:
        pushed = big.reshape(K ** m, K ** n).sum(axis=1)
    return (partition_entropy(big) - refined_entropy(measure, n)
            - partition_entropy(pushed))


@dataclass(frozen=True)
class FinitePartition:
    """A finite partition of the shift space into unions of cylinders.

    Each atom is a tuple of words; the atom is the union of their cylinders.
    """

    atoms: tuple
    K: int

    def __post_init__(self):
        seen = []
        for atom in self.atoms:
            for w in atom:
                seen.append(tuple(w))
        # Disjointness: no word is a prefix of another (cylinders nest by prefix).
        ordered = sorted(seen)
        for a, b in zip(ordered, ordered[1:]):
            if b[: len(a)] == a:
                raise DomainError(f"atoms overlap: {a} is a prefix of {b}")

    def weights(self, measure: CylinderMeasure) -> np.ndarray:
        return np.array([sum(measure.mass(w) for w in atom) for atom in self.atoms])

    def entropy(self, measure: CylinderMeasure) -> float:
        w = self.weights(measure)
        if abs(w.sum() - 1.0) > 1e-9:
            raise DomainError(f"atoms are not exhaustive: total mass {w.sum()!r}")
        return partition_entropy(w)
