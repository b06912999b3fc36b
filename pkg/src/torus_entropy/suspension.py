"""Special flows under a roof, suspension measures and their entropies.

The suspension space is ``{(x, s) : 0 <= s < f(x_0, x_1)}``.  A point stores a
finite window of its base sequence plus a cursor, so it can flow forwards
until the window runs out and backwards over symbols already seen.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ._kernels import compiled as _compiled
from ._kernels import python as _py
from .errors import DomainError, NeedsMoreSymbols, RangeError
from .roof import (AdaptedAtom, RefinedPartition, RoofFunction, adapted_partition,
                   refine, stopping_data)
from .symbolic import BACKWARD, CylinderMeasure, _xlogx, ks_entropy_estimate


@dataclass(frozen=True)
class SuspensionPoint:
    """``(sigma^pos x, height)`` with ``x`` given by the window ``base``."""

    base: tuple
    height: float
    pos: int = 0

    def __post_init__(self):
        object.__setattr__(self, "base", tuple(int(s) for s in self.base))

    def check(self, f: RoofFunction) -> None:
        if self.pos + 1 >= len(self.base):
            raise NeedsMoreSymbols(self.pos + 2 - len(self.base))
        top = f(self.base[self.pos], self.base[self.pos + 1])
        if not 0 <= self.height < top:
            raise DomainError(f"height {self.height!r} outside [0, {top!r})")


def flow(f: RoofFunction, p: SuspensionPoint, t) -> SuspensionPoint:
    """Special flow: move up by ``t`` and jump through the roof via the shift."""
    w, pos = p.base, p.pos
    target = p.height + t
    zero = target - target
    S, C = zero, zero
    if t >= 0:
        while True:
            if pos + 1 >= len(w):
                raise NeedsMoreSymbols(pos + 2 - len(w), "window exhausted while flowing forward")
            S2, C2 = _py._nadd(S, C, f(w[pos], w[pos + 1]))
            if S2 + C2 <= target:
                S, C, pos = S2, C2, pos + 1
            else:
                break
        return SuspensionPoint(w, (target - S) - C, pos)
    while target + (S + C) < 0:
        if pos == 0:
            raise NeedsMoreSymbols(1, "no past symbols left while flowing backward")
        pos -= 1
        S, C = _py._nadd(S, C, f(w[pos], w[pos + 1]))
    return SuspensionPoint(w, (target + S) + C, pos)


@dataclass(frozen=True)
class SuspensionMeasure:
    """``lambda * mu([alpha]) * |B|`` on sets ``[alpha] x B``.

    Backward base measures are stored reversed with the transposed roof, so
    the object is always forward-oriented internally; ``orientation`` keeps
    the original.
    """

    base_measure: CylinderMeasure
    roof: RoofFunction
    normalizer: float
    orientation: str = "forward"

    def mass(self, alpha: Sequence[int], interval) -> float:
        lo, hi = interval
        return self.normalizer * self.base_measure.mass(tuple(alpha)) * max(float(hi - lo), 0.0)

    def masses(self, part: RefinedPartition) -> np.ndarray:
        widths = np.maximum(part.widths, 0.0)
        return self.normalizer * self.base_measure.masses(part.words, part.lengths) * widths

    @property
    def mean_roof(self) -> float:
        return 1.0 / self.normalizer


def suspension_measure(mu: CylinderMeasure, f: RoofFunction) -> SuspensionMeasure:
    """Normalize ``mu x Lebesgue`` under the roof to a probability measure."""
    if mu.K != f.K:
        raise DomainError("measure and roof alphabets differ")
    orientation = mu.orientation
    if orientation == BACKWARD:
        mu, f = mu.reversed(), f.transposed()
    pairs = mu.table(2).reshape(f.K, f.K)
    denom = float(np.sum(pairs * f.array))
    if not denom > 0:
        raise DomainError("zero normalizer: all depth-2 masses vanish")
    return SuspensionMeasure(mu, f, 1.0 / denom, orientation)


def _entropy(masses: np.ndarray, atol: float = 1e-8) -> float:
    total = float(np.sum(masses))
    if abs(total - 1.0) > atol:
        raise DomainError(f"atom masses sum to {total!r}; the base measure is not deep enough "
                          "or not compatible")
    return float(-np.sum(_xlogx(masses)))


def suspension_entropy(mu_bar: SuspensionMeasure, atoms, n: int, *, cap: int = 10 ** 7) -> float:
    """``H_n`` of the suspension measure over the refined adapted partition."""
    part = refine(atoms, mu_bar.roof, n, cap=cap)
    if part.lengths.max() > mu_bar.base_measure.depth:
        raise NeedsMoreSymbols(int(part.lengths.max()) - mu_bar.base_measure.depth,
                               "base measure depth is below the longest refined word")
    return _entropy(mu_bar.masses(part))


@dataclass(frozen=True)
class AbramovResult:
    """Both sides of the Abramov identity; unpacks as ``(lhs, rhs)``."""

    lhs: float
    rhs: float
    base_entropy: float
    mean_roof: float
    ns: tuple
    entropies: tuple

    def __iter__(self):
        return iter((self.lhs, self.rhs))

    @property
    def relative_error(self) -> float:
        return abs(self.lhs / self.rhs - 1.0) if self.rhs else abs(self.lhs)


def abramov_check(mu: CylinderMeasure, f: RoofFunction, n_max: int, *, window: int = 3,
                  cap: int = 10 ** 7) -> AbramovResult:
    """Suspension entropy slope against ``h(sigma, mu) / int f dmu``.

    The slope is the least-squares fit of ``H_n`` over the last ``window``
    values of ``n`` up to ``n_max``.
    """
    if n_max < 2:
        raise RangeError("n_max must be >= 2")
    mu_bar = suspension_measure(mu, f)
    atoms = adapted_partition(f)
    ns = tuple(range(max(1, n_max - window + 1), n_max + 1))
    H = tuple(suspension_entropy(mu_bar, atoms, n, cap=cap) for n in ns)
    lhs = float(np.polyfit(ns, H, 1)[0])
    h, _ = ks_entropy_estimate(mu, 2, min(mu.depth, 8))
    return AbramovResult(lhs, h / mu_bar.mean_roof, h, mu_bar.mean_roof, ns, H)


def _atom_parts(atom):
    if isinstance(atom, AdaptedAtom):
        return atom.gamma, atom.interval
    alpha, interval = atom
    return tuple(int(s) for s in alpha), interval


def preimage_mass(mu_bar: SuspensionMeasure, atom, m: int) -> float:
    """``mu_bar(sigma_bar^{-m} A)`` for ``A = [alpha] x [lo, hi)``.

    Sums ``lambda * mu([u.alpha]) * |[lo, hi) & [m-S, m-S+f(u.alpha))|`` over
    prefixes ``u``, with ``S`` the roof time spent on ``u``.
    """
    if m < 1:
        raise RangeError("m must be >= 1")
    alpha, (lo, hi) = _atom_parts(atom)
    f, mu = mu_bar.roof, mu_bar.base_measure
    if len(alpha) < 2:
        raise DomainError("atom words need at least two symbols")
    if _compiled is not None and not f.exact:
        words, lengths, overlap = _compiled.preimage_terms(
            np.ascontiguousarray(f.array), np.asarray(alpha, dtype=np.int8),
            float(lo), float(hi), int(m), int(mu.depth))
        full = np.full((len(lengths), words.shape[1] + len(alpha) if len(lengths) else 0), -1,
                       dtype=np.int8)
        for i, L in enumerate(lengths):
            full[i, :L] = words[i, :L]
            full[i, L:L + len(alpha)] = alpha
        return float(mu_bar.normalizer * np.sum(mu.masses(full, lengths + len(alpha)) * overlap)) \
            if len(lengths) else 0.0
    terms = _py.preimage_terms([list(r) for r in f.values], alpha, lo, hi, m, mu.depth)
    return float(sum(mu_bar.normalizer * mu.mass(u + alpha) * float(ov) for u, ov in terms))


def pushforward_deviation(mu_bar: SuspensionMeasure, atom, m: int) -> float:
    """``|mu_bar(sigma_bar^{-m} A) - mu_bar(A)|``.

    ``atom`` is an ``(alpha, (lo, hi))`` pair, an :class:`AdaptedAtom`, or a
    list of them (their union, e.g. a whole partition).
    """
    atoms = atom if isinstance(atom, list) else [atom]
    diff = 0.0
    for a in atoms:
        alpha, interval = _atom_parts(a)
        if not interval[0] < interval[1]:
            continue
        diff += preimage_mass(mu_bar, a, m) - mu_bar.mass(alpha, interval)
    return abs(diff)


def quantum_subadditivity_defect(mu_bar: SuspensionMeasure, n0: int, m: int, *,
                                 cap: int = 10 ** 7) -> float:
    """``R = H_{n0+m} - H_{n0} - H_m`` over the adapted partition."""
    if n0 < 1 or m < 1:
        raise RangeError("n0 and m must be >= 1")
    atoms = adapted_partition(mu_bar.roof, cap=cap)
    H = {k: suspension_entropy(mu_bar, atoms, k, cap=cap) for k in {n0, m, n0 + m}}
    return H[n0 + m] - H[n0] - H[m]


# -- refinement audit -----------------------------------------------------

@dataclass
class RefinementAudit:
    """Outcome of checking one refinement against its certified bounds."""

    n: int
    atoms: int
    eps: float
    single_interval: bool
    roof_sum_min: float
    roof_sum_max: float
    eps_bounds: bool
    sharp_bounds: bool
    finer_than_family: bool
    samples: int = 0
    chain_mismatches: int = 0
    atom_mismatches: int = 0
    label_collisions: int = 0
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return (self.single_interval and self.eps_bounds and self.sharp_bounds
                and self.finer_than_family and self.chain_mismatches == 0
                and self.atom_mismatches == 0 and self.label_collisions == 0)


def _pair_sums(f: RoofFunction, words: np.ndarray, lengths: np.ndarray, start: int):
    """Per word ``sum_{j=start}^{len-2} f(w_j, w_{j+1})`` (pairwise in column order)."""
    out = np.zeros(len(lengths))
    for j in range(start, words.shape[1] - 1):
        live = lengths > j + 1
        out[live] += f.array[words[live, j], words[live, j + 1]]
    return out


def _simulate_labels(f: RoofFunction, x: tuple, t: float, n: int):
    """Adapted-atom labels ``(gamma_j, p_j)`` of ``(x, t)`` for ``n`` unit steps.

    Returns ``(labels, used, chain_ok)`` where ``used`` is the number of
    symbols the itinerary reads.
    """
    p = SuspensionPoint(x, t)
    labels, used, chain_ok = [], 0, True
    for _ in range(n):
        s = p.pos
        gamma = None
        for k in range(3, len(x) - s):
            # Stopping index at t=1 read off directly from partial sums.
            if f.pair_sum(x, s + 1, s + k) > 1:
                gamma = x[s: s + k + 1]
                break
        if gamma is None:
            raise NeedsMoreSymbols(1, "sample window too short")
        q = flow(f, p, 1.0)
        crossings = q.pos - s
        pp = crossings + 1
        k, kp, chain = stopping_data(f, gamma)
        hit = [c for c in chain if c[0] == pp]
        if not (kp <= pp <= k and hit and hit[0][1] <= p.height < hit[0][2]):
            chain_ok = False
        labels.append((gamma, pp))
        used = max(used, s + len(gamma))
        p = q
    return tuple(labels), used, chain_ok


def refinement_audit(f: RoofFunction, n: int, *, eps: float = None, samples: int = 500,
                     seed: int = 0, cap: int = 10 ** 7) -> RefinementAudit:
    """Check the refined adapted partition against its certified properties.

    Exhaustive over atoms: single nonempty fibre interval inside ``[0, f)``;
    roof sum inside ``[n(1-eps), n(1+eps)]`` and inside the sharper bounds
    ``n(1+b0 eta)+b0 eta`` (all pairs) and ``n-(n-1)(2+b0/a0)b0 eta`` (pairs
    from index 1); a prefix in the family at ``n(1-eps)``.

    Sampled: points drawn inside random atoms are flowed for ``n`` unit
    steps; the observed ``(gamma, p)`` itinerary must match the printed
    interval chain, locate the point in exactly the atom it was drawn from,
    and differ between distinct atoms.
    """
    eps = float(f.eps if eps is None else eps)
    part = refine(None, f, n, cap=cap)
    lo = np.asarray([float(v) for v in part.lo]) if isinstance(part.lo, list) else part.lo
    hi = np.asarray([float(v) for v in part.hi]) if isinstance(part.hi, list) else part.hi
    first = f.array[part.words[:, 0], part.words[:, 1]]
    single = bool(np.all(lo < hi) and np.all(lo >= 0) and np.all(hi <= first))
    total = _pair_sums(f, part.words, part.lengths, 0)
    inner = _pair_sums(f, part.words, part.lengths, 1)
    b0e = float(f.b0 * f.eta)
    ratio = float(f.b0 / f.a0)
    tol = 1e-12 * n
    eps_ok = bool(np.all(total >= n * (1 - eps) - tol) and np.all(total <= n * (1 + eps) + tol))
    sharp_ok = bool(np.all(total <= n * (1 + b0e) + b0e + tol)
                    and np.all(inner > n - (n - 1) * (2 + ratio) * b0e - tol))
    # A prefix of alpha lies in I(n(1-eps)) iff the inner sum exceeds n(1-eps).
    finer = bool(np.all(inner > n * (1 - eps) - tol))
    audit = RefinementAudit(n, len(part), eps, single, float(total.min()), float(total.max()),
                            eps_ok, sharp_ok, finer)
    audit.details["vacuous_eps"] = bool(n * (1 - eps) <= 0)
    if samples:
        _flow_oracle(f, part, lo, hi, audit, samples, seed)
    return audit


class _AtomIndex:
    """Lookup of atoms by word via sorted integer keys ``(base-K value, length)``."""

    def __init__(self, part: RefinedPartition):
        self.K = part.K
        if part.K ** int(part.lengths.max()) * 64 >= 2 ** 62:
            raise RangeError("words too long for the integer atom index")
        value = np.zeros(len(part), dtype=np.int64)
        for j in range(part.words.shape[1]):
            live = part.lengths > j
            value[live] = value[live] * part.K + part.words[live, j]
        keys = value * 64 + part.lengths
        self.order = np.argsort(keys, kind="stable")
        self.keys = keys[self.order]
        self.lengths = sorted(set(int(L) for L in part.lengths))

    def lookup(self, x: tuple) -> list:
        out, value = [], 0
        for L in range(1, self.lengths[-1] + 1):
            value = value * self.K + x[L - 1]
            if L in self.lengths:
                key = value * 64 + L
                a = np.searchsorted(self.keys, key, side="left")
                b = np.searchsorted(self.keys, key, side="right")
                out.extend(int(i) for i in self.order[a:b])
        return out


def _flow_oracle(f, part, lo, hi, audit, samples, seed):
    rng = np.random.default_rng(seed)
    K = f.K
    pad = int(math.ceil(2.0 / float(f.min_value))) + 4
    index = _AtomIndex(part)
    seen = {}
    picks = rng.integers(0, len(part), size=max(1, samples // 2))
    for i in picks:
        alpha = part.word(int(i))
        for _ in range(2):
            x = alpha + tuple(int(s) for s in rng.integers(0, K, size=pad))
            t = float(lo[i] + (hi[i] - lo[i]) * rng.random())
            labels, used, chain_ok = _simulate_labels(f, x, t, part.n)
            audit.samples += 1
            audit.chain_mismatches += not chain_ok
            found = [j for j in index.lookup(x) if lo[j] <= t < hi[j]]
            if found != [int(i)] or used != len(alpha):
                audit.atom_mismatches += 1
            prev = seen.setdefault(labels, int(i))
            audit.label_collisions += prev != int(i)
