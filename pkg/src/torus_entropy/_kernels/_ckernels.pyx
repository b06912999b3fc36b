# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled prefix-tree kernels.

Same algorithms and the same floating-point operation order as
``_pykernels``; the test suite checks bit-for-bit agreement.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, INFINITY
from libcpp.vector cimport vector

from ..errors import DomainError, NeedsMoreSymbols, ResourceError

cnp.import_array()


cdef inline void nadd(double* s, double* c, double x) noexcept nogil:
    cdef double t = s[0] + x
    if fabs(s[0]) >= fabs(x):
        c[0] += (s[0] - t) + x
    else:
        c[0] += (x - t) + s[0]
    s[0] = t


def stopping_index(double[:, ::1] roof, const signed char[::1] word, double t):
    cdef double s = 0.0, c = 0.0
    cdef Py_ssize_t m, L = word.shape[0]
    for m in range(1, L - 1):
        nadd(&s, &c, roof[word[m], word[m + 1]])
        if s + c > t:
            if m + 1 < 3:
                raise DomainError(f"stopping index {m + 1} < 3: a single roof value exceeds t")
            return m + 1
    return -1


cdef class _Buffer:
    cdef vector[signed char] symbols
    cdef vector[int] lengths
    cdef vector[double] lo
    cdef vector[double] hi

    cdef object pack(self):
        cdef Py_ssize_t n = self.lengths.size()
        cdef Py_ssize_t i, j, pos = 0, L = 0
        for i in range(n):
            if self.lengths[i] > L:
                L = self.lengths[i]
        words = np.full((n, L), -1, dtype=np.int8)
        lengths = np.empty(n, dtype=np.int32)
        cdef signed char[:, ::1] wv = words
        cdef int[::1] lv = lengths
        for i in range(n):
            lv[i] = self.lengths[i]
            for j in range(self.lengths[i]):
                wv[i, j] = self.symbols[pos]
                pos += 1
        return words, lengths

    cdef object pack_float(self, vector[double]& v):
        cdef Py_ssize_t i, n = v.size()
        out = np.empty(n, dtype=np.float64)
        cdef double[::1] ov = out
        for i in range(n):
            ov[i] = v[i]
        return out


def family_enumerate(double[:, ::1] roof, double t, long cap):
    """Complete prefix code at threshold ``t``; returns padded words, lengths."""
    cdef int K = roof.shape[0]
    cdef _Buffer buf = _Buffer()
    cdef vector[signed char] w
    cdef vector[double] S, C
    cdef vector[int] nxt
    cdef int a, b, d, a2
    cdef double s, c
    for a in range(K):
        for b in range(K):
            w.clear(); S.clear(); C.clear(); nxt.clear()
            w.push_back(<signed char>a); w.push_back(<signed char>b)
            S.push_back(0.0); S.push_back(0.0)
            C.push_back(0.0); C.push_back(0.0)
            nxt.push_back(K); nxt.push_back(0)
            # Iterative pre-order walk; frame d is the prefix of length d+1.
            while w.size() >= 2:
                d = <int>w.size() - 1
                if nxt[d] == 0 and d >= 2 and S[d] + C[d] > t:
                    if d < 3:
                        raise DomainError("a single roof value exceeds t; the family needs t >= max f")
                    if <long>buf.lengths.size() >= cap:
                        raise ResourceError(f"index family exceeds cap {cap}")
                    for a2 in range(d + 1):
                        buf.symbols.push_back(w[a2])
                    buf.lengths.push_back(d + 1)
                    nxt[d] = K
                if nxt[d] >= K:
                    w.pop_back(); S.pop_back(); C.pop_back(); nxt.pop_back()
                    if w.size() < 2:
                        break
                    continue
                s = S[d]
                c = C[d]
                nadd(&s, &c, roof[w[d], nxt[d]])
                w.push_back(<signed char>nxt[d])
                nxt[d] += 1
                S.push_back(s); C.push_back(c); nxt.push_back(0)
    return buf.pack()


cdef struct Ctx:
    int K
    int n
    long cap
    double one


cdef class _Refiner:
    cdef double[:, ::1] roof
    cdef Ctx ctx
    cdef vector[signed char] w
    cdef _Buffer buf

    def __init__(self, double[:, ::1] roof, int n, long cap):
        self.roof = roof
        self.ctx.K = roof.shape[0]
        self.ctx.n = n
        self.ctx.cap = cap
        self.ctx.one = 1.0
        self.buf = _Buffer()

    cdef int rec(self, int j, int s, double Ss, double Sc, double lo, double hi) except -1:
        cdef int m, a, k, kp, p, i
        cdef double A, Ac, base, ia, ib, f0, s2, c2, ilo, ihi
        cdef vector[double] T, Tc
        if j == self.ctx.n:
            if <long>self.buf.lengths.size() >= self.ctx.cap:
                raise ResourceError(f"refinement exceeds cap {self.ctx.cap}")
            for i in range(<int>self.w.size()):
                self.buf.symbols.push_back(self.w[i])
            self.buf.lengths.push_back(<int>self.w.size())
            self.buf.lo.push_back(lo)
            self.buf.hi.push_back(hi)
            return 0
        A = 0.0
        Ac = 0.0
        m = 0
        while True:
            m += 1
            if s + m + 1 >= <int>self.w.size():
                for a in range(self.ctx.K):
                    self.w.push_back(<signed char>a)
                    self.rec(j, s, Ss, Sc, lo, hi)
                    self.w.pop_back()
                return 0
            nadd(&A, &Ac, self.roof[self.w[s + m], self.w[s + m + 1]])
            if A + Ac > self.ctx.one:
                break
        k = m + 1
        # Prefix sums T[q] = sum_{i<q} f(gamma_i, gamma_{i+1}).
        T.push_back(0.0)
        Tc.push_back(0.0)
        A = 0.0
        Ac = 0.0
        for i in range(1, k + 1):
            nadd(&A, &Ac, self.roof[self.w[s + i - 1], self.w[s + i]])
            T.push_back(A)
            Tc.push_back(Ac)
        kp = 1
        while T[kp] + Tc[kp] <= self.ctx.one:
            kp += 1
        f0 = self.roof[self.w[s], self.w[s + 1]]
        base = (Ss + Sc) - j
        for p in range(kp, k + 1):
            if kp == k:
                ilo = 0.0
                ihi = f0
            else:
                ilo = 0.0 if p == kp else (T[p - 1] + Tc[p - 1]) - self.ctx.one
                ihi = f0 if p == k else (T[p] + Tc[p]) - self.ctx.one
            ia = ilo + base
            ib = ihi + base
            if lo > ia:
                ia = lo
            if hi < ib:
                ib = hi
            if ia < ib:
                s2 = Ss
                c2 = Sc
                nadd(&s2, &c2, T[p - 1])
                nadd(&s2, &c2, Tc[p - 1])
                self.rec(j + 1, s + p - 1, s2, c2, ia, ib)
        return 0

    def run(self):
        self.rec(0, 0, 0.0, 0.0, -INFINITY, INFINITY)
        words, lengths = self.buf.pack()
        return words, lengths, self.buf.pack_float(self.buf.lo), self.buf.pack_float(self.buf.hi)


def refine_enumerate(double[:, ::1] roof, int n, long cap):
    """Refined adapted atoms; returns padded words, lengths, lo, hi arrays."""
    return _Refiner(roof, n, cap).run()


cdef class _Preimager:
    cdef double[:, ::1] roof
    cdef int K, alen, max_len
    cdef double lo, hi, m
    cdef vector[signed char] beta   # stored reversed: beta[-1] is the first symbol
    cdef _Buffer buf
    cdef vector[double] overlap

    cdef int rec(self, double S, double C) except -1:
        cdef int L = <int>self.beta.size()
        cdef double top = self.m - (S + C)
        cdef double a = top
        cdef double b = top + self.roof[self.beta[L - 1], self.beta[L - 2]]
        cdef int i, s
        cdef double S2, C2
        if self.lo > a:
            a = self.lo
        if self.hi < b:
            b = self.hi
        if a < b:
            for i in range(L - 1, self.alen - 1, -1):
                self.buf.symbols.push_back(self.beta[i])
            self.buf.lengths.push_back(L - self.alen)
            self.overlap.push_back(b - a)
        if top <= self.lo:
            return 0
        if L >= self.max_len:
            raise NeedsMoreSymbols(1, f"preimage words longer than {self.max_len} still contribute")
        for s in range(self.K):
            S2 = S
            C2 = C
            nadd(&S2, &C2, self.roof[s, self.beta[L - 1]])
            self.beta.push_back(<signed char>s)
            self.rec(S2, C2)
            self.beta.pop_back()
        return 0


def preimage_terms(double[:, ::1] roof, const signed char[::1] alpha, double lo, double hi,
                   int m, int max_len):
    """Prefixes with positive overlap; returns padded prefixes, lengths, overlaps."""
    cdef _Preimager pm = _Preimager()
    cdef Py_ssize_t i
    pm.roof = roof
    pm.K = roof.shape[0]
    pm.alen = alpha.shape[0]
    pm.max_len = max_len
    pm.lo = lo
    pm.hi = hi
    pm.m = m
    pm.buf = _Buffer()
    for i in range(alpha.shape[0] - 1, -1, -1):
        pm.beta.push_back(alpha[i])
    pm.rec(0.0, 0.0)
    words, lengths = pm.buf.pack()
    return words, lengths, pm.buf.pack_float(pm.overlap)
