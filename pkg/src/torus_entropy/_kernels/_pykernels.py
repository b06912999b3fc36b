"""Pure-Python reference kernels.

Every routine mirrors the compiled version operation for operation, so both
produce bit-identical floats.  They also run unchanged on
``fractions.Fraction`` inputs, which is how the exact-rational mode works:
with exact arithmetic the compensation term of the Neumaier sum stays zero.
"""

from __future__ import annotations

import numpy as np

from ..errors import DomainError, NeedsMoreSymbols, ResourceError


def _nadd(s, c, x):
    """One Neumaier compensated-summation step; returns the new (sum, carry)."""
    t = s + x
    if abs(s) >= abs(x):
        c += (s - t) + x
    else:
        c += (x - t) + s
    return t, c


def stopping_index(roof, word, t):
    """Return ``k`` with ``sum_{i=1}^{k-2} f <= t < sum_{i=1}^{k-1} f``.

    ``word`` is any sequence of symbols.  Returns -1 when the stopping
    condition is not reached inside the word.
    """
    zero = t - t
    s, c = zero, zero
    L = len(word)
    for m in range(1, L - 1):
        s, c = _nadd(s, c, roof[word[m]][word[m + 1]])
        if s + c > t:
            k = m + 1
            if k < 3:
                raise DomainError(f"stopping index {k} < 3: a single roof value exceeds t")
            return k
    return -1


def family_enumerate(roof, t, cap):
    """All words of the complete prefix code at threshold ``t``.

    Depth-first, lexicographic.  Returns a list of tuples.
    """
    K = len(roof)
    zero = t - t
    words = []
    stack = [((a, b), zero, zero) for a in range(K - 1, -1, -1) for b in range(K - 1, -1, -1)]
    while stack:
        w, s, c = stack.pop()
        if len(w) >= 3 and s + c > t:
            if len(w) < 4:
                raise DomainError("a single roof value exceeds t; the family needs t >= max f")
            if len(words) >= cap:
                raise ResourceError(f"index family exceeds cap {cap}")
            words.append(w)
            continue
        last = w[-1]
        for a in range(K - 1, -1, -1):
            s2, c2 = _nadd(s, c, roof[last][a])
            stack.append((w + (a,), s2, c2))
    return words


def adapted_intervals(roof, gamma, one):
    """``(k, k', [(p, lo, hi), ...], T)`` for a word ``gamma`` of the t=1 family.

    Interval endpoints follow the printed boundary formulas; empty intervals
    are kept so the list always has ``k - k' + 1`` entries.  ``T[m]`` is the
    compensated pair ``sum_{i<m} f(gamma_i, gamma_{i+1})``.
    """
    zero = one - one
    k = len(gamma) - 1
    # T[m] = sum_{i=0}^{m-1} f(gamma_i, gamma_{i+1}) as (sum, carry) pairs.
    T = [(zero, zero)]
    s, c = zero, zero
    for m in range(1, k + 1):
        s, c = _nadd(s, c, roof[gamma[m - 1]][gamma[m]])
        T.append((s, c))
    kp = 1
    while T[kp][0] + T[kp][1] <= one:
        kp += 1
    f0 = roof[gamma[0]][gamma[1]]
    if kp == k:
        return k, kp, [(k, zero, f0)], T
    out = []
    for p in range(kp, k + 1):
        lo = zero if p == kp else (T[p - 1][0] + T[p - 1][1]) - one
        hi = f0 if p == k else (T[p][0] + T[p][1]) - one
        out.append((p, lo, hi))
    return k, kp, out, T


def refine_enumerate(roof, n, cap, one):
    """Atoms ``[alpha] x [lo, hi)`` of the n-fold refined adapted partition.

    ``lo``/``hi`` bound the initial height.  Returns parallel lists.
    """
    K = len(roof)
    zero = one - one
    words, los, his = [], [], []
    w = []

    def rec(j, s, Ss, Sc, lo, hi):
        if j == n:
            if len(words) >= cap:
                raise ResourceError(f"refinement exceeds cap {cap}")
            words.append(tuple(w))
            los.append(lo)
            his.append(hi)
            return
        # Identify the family word starting at position s.
        A, Ac = zero, zero
        m = 0
        while True:
            m += 1
            if s + m + 1 >= len(w):
                for a in range(K):
                    w.append(a)
                    rec(j, s, Ss, Sc, lo, hi)
                    w.pop()
                return
            A, Ac = _nadd(A, Ac, roof[w[s + m]][w[s + m + 1]])
            if A + Ac > one:
                break
        gamma = w[s: s + m + 2]
        _, _, chain, P = adapted_intervals(roof, gamma, one)
        base = (Ss + Sc) - j
        for p, ilo, ihi in chain:
            a = ilo + base
            b = ihi + base
            if lo is not None:
                if lo > a:
                    a = lo
                if hi < b:
                    b = hi
            if a < b:
                s2, c2 = _nadd(Ss, Sc, P[p - 1][0])
                s2, c2 = _nadd(s2, c2, P[p - 1][1])
                rec(j + 1, s + p - 1, s2, c2, a, b)

    rec(0, 0, zero, zero, None, None)
    return words, los, his


def preimage_terms(roof, alpha, lo, hi, m, max_len):
    """Prefixes ``u`` with ``|u.alpha| <= max_len`` and overlap lengths.

    For ``beta = u.alpha`` with ``p - 1 = len(u)`` the contribution interval
    is ``[m - S, m - S + f(beta)) & [lo, hi)`` with ``S`` the first ``p - 1``
    pair sums of ``beta``.  Returns a list of ``(u, overlap)`` with positive
    overlap.
    """
    K = len(roof)
    zero = lo - lo
    out = []
    # stack entries: (beta tuple, S, carry)
    stack = [(tuple(alpha), zero, zero)]
    while stack:
        beta, S, C = stack.pop()
        top = m - (S + C)
        a = top
        b = top + roof[beta[0]][beta[1]]
        a = lo if lo > a else a
        b = hi if hi < b else b
        if a < b:
            out.append((beta[: len(beta) - len(alpha)], b - a))
        # Prepending lowers every later interval below ``top``.
        if top <= lo:
            continue
        if len(beta) >= max_len:
            raise NeedsMoreSymbols(1, f"preimage words longer than {max_len} still contribute")
        for s in range(K - 1, -1, -1):
            S2, C2 = _nadd(S, C, roof[s][beta[0]])
            stack.append(((s,) + beta, S2, C2))
    return out


def pad_words(words, fill=-1):
    """Pack a list of tuples into a padded int8 array plus lengths."""
    n = len(words)
    L = max((len(w) for w in words), default=0)
    arr = np.full((n, L), fill, dtype=np.int8)
    lengths = np.zeros(n, dtype=np.int32)
    for i, w in enumerate(words):
        arr[i, : len(w)] = w
        lengths[i] = len(w)
    return arr, lengths
