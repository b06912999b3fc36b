"""Roof functions, stopping times, index families and the adapted partition.

A roof assigns a positive value ``f(a, b)`` to each symbol pair; for a word
``alpha`` we write ``f(alpha) = f(alpha_0, alpha_1)`` and ``f(sigma^j alpha)``
for the value on the pair starting at position ``j``.

Roof values may be floats or :class:`fractions.Fraction`.  Fractions switch
every combinatorial routine to exact arithmetic on the pure-Python kernels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, Sequence

import numpy as np

from . import _kernels
from ._kernels import python as _py
from .errors import ConfigurationError, DomainError, NeedsMoreSymbols, NumericError
from .symbolic import BACKWARD, FORWARD, CylinderMeasure, Word

DEFAULT_CAP = 10 ** 7


def _as_exact(v) -> Fraction:
    # Decimal strings give the intended rational (Fraction(0.1) would not).
    return v if isinstance(v, Fraction) else Fraction(repr(float(v)))


def minimal_eps(a0: float, b0: float, eta: float) -> float:
    """Smallest epsilon with ``eta*b0 <= eps/2`` and ``(2+b0/a0)*b0*eta <= eps/2``."""
    return 2.0 * max(eta * b0, (2.0 + b0 / a0) * b0 * eta)


def check_eps(a0, b0, eta, eps) -> None:
    """Raise :class:`ConfigurationError` naming the first violated constraint."""
    if not eta * b0 <= eps / 2:
        raise ConfigurationError(
            f"constraint eta*b0 <= eps/2 violated: {eta * b0!r} > {eps / 2!r}")
    lhs = (2 + b0 / a0) * b0 * eta
    if not lhs <= eps / 2:
        raise ConfigurationError(
            f"constraint (2+b0/a0)*b0*eta <= eps/2 violated: {lhs!r} > {eps / 2!r}")


@dataclass(frozen=True)
class RoofFunction:
    """Positive function on symbol pairs with bounds ``a0*eta <= f <= b0*eta``."""

    values: tuple
    eta: float
    a0: float
    b0: float
    eps: float = None
    array: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        vals = tuple(tuple(row) for row in self.values)
        K = len(vals)
        if K < 1 or any(len(r) != K for r in vals):
            raise DomainError("roof values must form a square K x K table")
        if any(v <= 0 for r in vals for v in r):
            raise DomainError("roof values must be strictly positive")
        object.__setattr__(self, "values", vals)
        if not (0 < self.a0 <= self.b0):
            raise DomainError("need 0 < a0 <= b0")
        lo, hi = self.a0 * self.eta, self.b0 * self.eta
        tol = 0 if self.exact else 1e-12 * hi
        for r in vals:
            for v in r:
                if v < lo - tol or v > hi + tol:
                    raise DomainError(f"roof value {v!r} outside [a0*eta, b0*eta] = [{lo!r}, {hi!r}]")
        eps = self.eps
        if eps is None:
            eps = minimal_eps(float(self.a0), float(self.b0), float(self.eta))
            object.__setattr__(self, "eps", eps)
        check_eps(float(self.a0), float(self.b0), float(self.eta), float(eps))
        object.__setattr__(self, "array", np.array([[float(v) for v in r] for r in vals]))

    @classmethod
    def from_values(cls, values, eta: float = 1.0, eps: float = None, *, exact: bool = False):
        """Roof with ``a0``/``b0`` read off the extreme values (no widening)."""
        vals = [list(r) for r in np.asarray(values, dtype=object).tolist()] \
            if not isinstance(values, (list, tuple)) else [list(r) for r in values]
        if exact:
            vals = [[_as_exact(v) for v in r] for r in vals]
            eta = _as_exact(eta)
            flat = [v for r in vals for v in r]
            return cls(tuple(map(tuple, vals)), eta, min(flat) / eta, max(flat) / eta, eps)
        vals = [[float(v) for v in r] for r in vals]
        flat = [v for r in vals for v in r]
        return cls(tuple(map(tuple, vals)), float(eta), min(flat) / eta, max(flat) / eta, eps)

    @classmethod
    def constant(cls, c, K: int, eta: float = 1.0, eps: float = None, *, exact: bool = False):
        return cls.from_values([[c] * K for _ in range(K)], eta, eps, exact=exact)

    @property
    def K(self) -> int:
        return len(self.values)

    @property
    def exact(self) -> bool:
        return isinstance(self.values[0][0], Fraction)

    @property
    def max_value(self):
        return max(v for r in self.values for v in r)

    @property
    def min_value(self):
        return min(v for r in self.values for v in r)

    def __call__(self, a: int, b: int):
        return self.values[a][b]

    def to_exact(self) -> "RoofFunction":
        if self.exact:
            return self
        vals = tuple(tuple(_as_exact(v) for v in r) for r in self.values)
        eta = _as_exact(self.eta)
        return RoofFunction(vals, eta, _as_exact(self.a0), _as_exact(self.b0), self.eps)

    def transposed(self) -> "RoofFunction":
        """Roof read on reversed words: ``f^T(a, b) = f(b, a)``.

        The backward roof ``f_-(beta) = f(beta_{-1}, beta_0)`` becomes an
        ordinary forward roof on the reversed word ``(beta_0, beta_{-1}, ...)``
        once transposed.
        """
        vals = tuple(tuple(self.values[b][a] for b in range(self.K)) for a in range(self.K))
        return RoofFunction(vals, self.eta, self.a0, self.b0, self.eps)

    def backward_value(self, beta: Sequence[int]):
        """``f_-(beta) = f(beta_{-1}, beta_0)`` for a word written ``(..., beta_{-1}, beta_0)``."""
        return self.values[beta[-2]][beta[-1]]

    def pair_sum(self, word: Sequence[int], start: int = 0, stop: int = None):
        """Compensated ``sum_{j=start}^{stop-1} f(word_j, word_{j+1})``."""
        stop = len(word) - 1 if stop is None else stop
        zero = self.values[0][0] - self.values[0][0]
        s, c = zero, zero
        for j in range(start, stop):
            s, c = _py._nadd(s, c, self.values[word[j]][word[j + 1]])
        return s + c

    def kernel_args(self):
        """Kernel module and roof argument matching this roof's number type."""
        if self.exact or _kernels.compiled is None:
            return _py, [list(r) for r in self.values]
        return _kernels.compiled, np.ascontiguousarray(self.array)


def roof_from_jacobian(table, eps: float = None) -> RoofFunction:
    """``f(gamma) = -eta log J(gamma)`` with the table's ``a0``, ``b0``, ``eta``."""
    J = np.asarray(table.values, dtype=float)
    vals = -table.eta * np.log(J)
    return RoofFunction(tuple(map(tuple, vals.tolist())), float(table.eta),
                        float(table.a0), float(table.b0), eps)


def _symbols(x) -> tuple:
    if isinstance(x, Word):
        return x.symbols
    return tuple(int(s) for s in x)


def _threshold(f: RoofFunction, t):
    if f.exact:
        return _as_exact(t)
    return float(t)


def stopping_time(f: RoofFunction, x, t, *, check_threshold: bool = True) -> int:
    """Stopping time ``k_t(x)``; only the first ``k_t + 1`` symbols are read."""
    t = _threshold(f, t)
    if check_threshold and t < 2 * f.b0 * f.eta:
        raise DomainError(f"t={t!r} below 2*b0*eta={2 * f.b0 * f.eta!r}")
    word = _symbols(x)
    mod, roof = f.kernel_args()
    if mod is _py:
        k = _py.stopping_index(roof, word, t)
    else:
        k = mod.stopping_index(roof, np.asarray(word, dtype=np.int8), t)
    if k < 0:
        partial = f.pair_sum(word, 1) if len(word) > 2 else 0
        deficit = max(1, int(math.floor(float(t - partial) / float(f.max_value))) + 1)
        raise NeedsMoreSymbols(deficit)
    return k


@dataclass(frozen=True)
class IndexFamily:
    """Complete prefix code ``I(t)`` (forward) or ``K(t)`` (backward).

    Words are held as a padded ``int8`` array; backward words are stored in
    written order ``(beta_{-k}, ..., beta_0)``.
    """

    t: object
    K: int
    words: np.ndarray
    lengths: np.ndarray
    orientation: str = FORWARD

    def __len__(self) -> int:
        return len(self.lengths)

    def __iter__(self) -> Iterator[tuple]:
        for row, L in zip(self.words, self.lengths):
            yield tuple(int(s) for s in row[:L])

    @property
    def max_length(self) -> int:
        return int(self.lengths.max()) if len(self.lengths) else 0


def _enumerate(f: RoofFunction, t, cap: int):
    mod, roof = f.kernel_args()
    if mod is _py:
        return _py.pad_words(_py.family_enumerate(roof, t, cap))
    return mod.family_enumerate(roof, float(t), int(cap))


def index_family(f: RoofFunction, t, K: int = None, *, cap: int = DEFAULT_CAP,
                 orientation: str = FORWARD, check_threshold: bool = True) -> IndexFamily:
    """Exhaustive prefix-tree enumeration of ``I(t)`` or ``K(t)``.

    Every word over the alphabet is included, whether or not its phase-space
    cell is empty.
    """
    if K is not None and K != f.K:
        raise DomainError(f"alphabet size {K} does not match roof ({f.K})")
    t = _threshold(f, t)
    if check_threshold and t < 2 * f.b0 * f.eta:
        raise DomainError(f"t={t!r} below 2*b0*eta={2 * f.b0 * f.eta!r}")
    if orientation == FORWARD:
        words, lengths = _enumerate(f, t, cap)
    elif orientation == BACKWARD:
        words, lengths = _enumerate(f.transposed(), t, cap)
        words = words.copy()
        for i, L in enumerate(lengths):
            words[i, :L] = words[i, :L][::-1]
    else:
        raise DomainError(f"unknown orientation {orientation!r}")
    return IndexFamily(t, f.K, words, lengths, orientation)


def check_partition_completeness(family: IndexFamily, measure: CylinderMeasure) -> float:
    """``|sum_{alpha in family} mu([alpha]) - 1|``."""
    if measure.orientation != family.orientation:
        raise DomainError("family and measure orientations differ")
    if family.max_length > measure.depth:
        raise NeedsMoreSymbols(family.max_length - measure.depth,
                               "measure depth is below the longest family word")
    return abs(float(np.sum(measure.masses(family.words, family.lengths))) - 1.0)


def _one(f: RoofFunction):
    return Fraction(1) if f.exact else 1.0


def _check_unit_threshold(f: RoofFunction) -> None:
    # The t=1 family has every stopping index >= 3 exactly when max f <= 1.
    if f.max_value > 1:
        raise DomainError("the adapted partition needs every roof value <= 1")


def stopping_data(f: RoofFunction, gamma: Sequence[int]):
    """``(k, k', chain)`` for a word of ``I(1)``; ``chain`` lists ``(p, lo, hi)``."""
    gamma = _symbols(gamma)
    one = _one(f)
    try:
        k = stopping_time(f, gamma, one, check_threshold=False)
    except NeedsMoreSymbols:
        k = None
    if k != len(gamma) - 1:
        raise DomainError(f"{gamma} is not a member of I(1)")
    roof = [list(r) for r in f.values]
    k, kp, chain, _ = _py.adapted_intervals(roof, gamma, one)
    return k, kp, chain


def k_prime(f: RoofFunction, alpha) -> int:
    """``k'(alpha)`` with ``sum_{j<k'-1} f <= 1 < sum_{j<k'} f``; checks ``|k-k'| <= b0/a0+1``."""
    k, kp, _ = stopping_data(f, alpha)
    if abs(k - kp) > f.b0 / f.a0 + 1:
        raise NumericError(f"|k-k'| = {abs(k - kp)} exceeds b0/a0+1 = {f.b0 / f.a0 + 1}")
    return kp


@dataclass(frozen=True)
class AdaptedAtom:
    """Atom ``[gamma] x I_{p-2}(gamma)`` of the adapted partition."""

    gamma: tuple
    p: int
    interval: tuple
    k: int
    k_prime: int

    @property
    def empty(self) -> bool:
        return not self.interval[0] < self.interval[1]

    @property
    def width(self):
        return max(self.interval[1] - self.interval[0], 0)


def adapted_partition(f: RoofFunction, *, cap: int = DEFAULT_CAP) -> list:
    """All atoms ``(gamma, p, I_{p-2}(gamma))``, empty intervals included."""
    _check_unit_threshold(f)
    family = index_family(f, _one(f), cap=cap, check_threshold=False)
    roof = [list(r) for r in f.values]
    atoms = []
    for gamma in family:
        k, kp, chain, _ = _py.adapted_intervals(roof, gamma, _one(f))
        for p, lo, hi in chain:
            atoms.append(AdaptedAtom(gamma, p, (lo, hi), k, kp))
    return atoms


@dataclass(frozen=True)
class RefinedPartition:
    """Atoms ``[alpha] x [lo, hi)`` of the join over ``n`` unit time steps."""

    n: int
    K: int
    words: np.ndarray
    lengths: np.ndarray
    lo: object
    hi: object

    def __len__(self) -> int:
        return len(self.lengths)

    def __iter__(self):
        for i in range(len(self.lengths)):
            yield self.word(i), (self.lo[i], self.hi[i])

    def word(self, i: int) -> tuple:
        return tuple(int(s) for s in self.words[i, : self.lengths[i]])

    @property
    def widths(self) -> np.ndarray:
        return np.asarray([float(h - l) for l, h in zip(self.lo, self.hi)]) \
            if isinstance(self.lo, list) else self.hi - self.lo


def refine(atoms, f: RoofFunction, n: int, *, cap: int = DEFAULT_CAP) -> RefinedPartition:
    """Nonempty atoms of the ``n``-fold join of the adapted partition.

    ``atoms`` is accepted for symmetry with :func:`adapted_partition`; the
    enumeration rebuilds the chain of family words directly from ``f``.
    """
    if n < 1:
        raise DomainError("n must be >= 1")
    _check_unit_threshold(f)
    mod, roof = f.kernel_args()
    if mod is _py:
        words, los, his = _py.refine_enumerate(roof, n, cap, _one(f))
        w, L = _py.pad_words(words)
        if not f.exact:
            los, his = np.asarray(los, dtype=float), np.asarray(his, dtype=float)
        part = RefinedPartition(n, f.K, w, L, los, his)
    else:
        w, L, lo, hi = mod.refine_enumerate(roof, int(n), int(cap))
        part = RefinedPartition(n, f.K, w, L, lo, hi)
    if atoms is not None and n == 1:
        nonempty = sum(1 for a in atoms if not a.empty)
        if nonempty != len(part):
            raise NumericError(f"n=1 refinement has {len(part)} atoms, expected {nonempty}")
    return part
