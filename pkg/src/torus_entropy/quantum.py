"""Quantized torus maps, partitions of identity and the entropic uncertainty bound.

Conventions: the Hilbert space is ``C^N`` with position basis ``|j>``,
``j = 0..N-1`` (``q_j = j/N``) and ``hbar = 1/(2 pi N)``.  The torus
coordinate ``x`` is position and ``y`` is momentum.  One propagator step is
one ``eta`` step, and ``A(t) = U^{-t} A U^t``.

The Weyl operator of the mode ``e^{2 pi i (m x + n y)}`` is
``T(m, n)_{j,k} = e^{i pi m n / N} e^{2 pi i m j / N} [k = j + n mod N]``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np
import scipy.linalg

from .dynamics import Cover, TorusMap
from .errors import ConfigurationError, DomainError, NumericError, RangeError
from .roof import RoofFunction, check_eps, index_family
from .symbolic import BACKWARD, FORWARD, CylinderMeasure, _xlogx, index_word

UNITARY_TOL = 1e-10


@dataclass(frozen=True)
class QuantSpace:
    N: int

    def __post_init__(self):
        if self.N < 2:
            raise DomainError("N must be >= 2")

    @property
    def hbar(self) -> float:
        return 1.0 / (2 * np.pi * self.N)

    @property
    def positions(self) -> np.ndarray:
        return np.arange(self.N) / self.N


def _unitarity_residual(U: np.ndarray) -> float:
    return float(np.linalg.norm(U.conj().T @ U - np.eye(len(U)), 2))


def quantize_cat(A, N: int) -> np.ndarray:
    """Metaplectic propagator of ``A`` in SL(2, Z) on ``C^N``.

    For ``b != 0`` the kernel is the quadratic Gauss sum
    ``(iNb)^{-1/2} sum_nu exp(i pi (d j^2 - 2 j k_nu + a k_nu^2) / (N b))``
    with ``k_nu = k + nu N``; for ``b = 0`` it is a shear times a parity.
    Raises :class:`ConfigurationError` when the kernel is not ``N``-periodic
    (the parity condition fails) or not unitary.
    """
    A = np.asarray(A, dtype=np.int64)
    if A.shape != (2, 2) or round(np.linalg.det(A)) != 1:
        raise DomainError("A must be a 2x2 integer matrix with determinant 1")
    a, b, c, d = (int(v) for v in A.ravel())
    N = int(N)
    j = np.arange(N)
    if b == 0:
        # a = d = +-1; x -> a x, y -> c x + d y.
        if (c * a * N) % 2:
            raise ConfigurationError(f"shear {c} needs c*N even (N={N})")
        phase = np.exp(1j * np.pi * c * a * j.astype(float) ** 2 / N)
        U = np.zeros((N, N), dtype=complex)
        U[(a * j) % N, j] = phase
    else:
        sb = abs(b)
        jj = j[:, None].astype(float)
        U = np.zeros((N, N), dtype=complex)
        for nu in range(sb):
            kk = (j[None, :] + nu * N).astype(float)
            U += np.exp(1j * np.pi * (d * jj ** 2 - 2 * jj * kk + a * kk ** 2) / (N * b))
        U /= np.sqrt(1j * N * b + 0j)
        # Periodicity: the same formula at j+N, k+N must agree.
        jN = jj + N
        V = np.zeros_like(U)
        for nu in range(sb):
            kk = (j[None, :] + nu * N + N).astype(float)
            V += np.exp(1j * np.pi * (d * jN ** 2 - 2 * jN * kk + a * kk ** 2) / (N * b))
        V /= np.sqrt(1j * N * b + 0j)
        if np.max(np.abs(U - V)) > 1e-8:
            raise ConfigurationError(f"matrix {A.tolist()} has no periodic quantization at N={N}")
    res = _unitarity_residual(U)
    if res > UNITARY_TOL:
        raise ConfigurationError(f"quantization of {A.tolist()} at N={N} is not unitary ({res:.2e})")
    return U


def kick_operator(g: TorusMap, N: int) -> np.ndarray:
    """Diagonal quantization of the shear ``(x, y) -> (x, y + kappa h(x))``."""
    q = np.arange(N) / N
    F = g.amplitude * g.perturbation.antiderivative(q)
    return np.diag(np.exp(2j * np.pi * N * F))


def quantize_map(g: TorusMap, N: int) -> np.ndarray:
    """Propagator of ``g = K o A``: ``U_K U_A`` (so ``U* Op(a) U ~ Op(a o g)``)."""
    U = quantize_cat(g.matrix, N)
    if not g.is_linear:
        U = kick_operator(g, N) @ U
    return U


def weyl_operator(m: int, n: int, N: int) -> np.ndarray:
    j = np.arange(N)
    T = np.zeros((N, N), dtype=complex)
    T[j, (j + n) % N] = np.exp(1j * np.pi * m * n / N) * np.exp(2j * np.pi * m * j / N)
    return T


def _mode_cap(N: int) -> int:
    return (N - 1) // 2


def quantize_observable(coeffs: Mapping, N: int) -> np.ndarray:
    """Weyl quantization of ``sum c_{m,n} e^{2 pi i (m x + n y)}``."""
    cap = _mode_cap(N)
    out = np.zeros((N, N), dtype=complex)
    for (m, n), c in coeffs.items():
        if abs(m) > cap or abs(n) > cap:
            raise RangeError(f"mode ({m}, {n}) exceeds the cap {cap} at N={N}")
        out += c * weyl_operator(int(m), int(n), N)
    return out


def cos_observable(m: int = 1, n: int = 0) -> dict:
    """Fourier table of ``cos(2 pi (m x + n y))``."""
    return {(m, n): 0.5, (-m, -n): 0.5}


def compose_linear(coeffs: Mapping, A, t: int) -> dict:
    """Fourier table of ``a o A^t``: mode ``k`` moves to ``(A^t)^T k``."""
    M = np.linalg.matrix_power(np.asarray(A, dtype=object), t)
    out = {}
    for (m, n), c in coeffs.items():
        k = (int(M[0][0] * m + M[1][0] * n), int(M[0][1] * m + M[1][1] * n))
        out[k] = out.get(k, 0) + c
    return out


def compose_sampled(a: Callable, g: TorusMap, t: int, N: int, *, tol: float = 1e-9) -> dict:
    """Fourier table of ``a o g^t`` fitted on a ``2N x 2N`` grid.

    Raises :class:`RangeError` if modes beyond the cap carry more than
    ``tol`` relative weight.
    """
    G = 2 * N
    x = np.arange(G) / G
    X, Y = np.meshgrid(x, x, indexing="ij")
    pts = np.stack([X.ravel(), Y.ravel()], axis=1)
    for _ in range(t):
        pts = g.apply_array(pts)
    vals = a(pts[:, 0], pts[:, 1]).reshape(G, G)
    F = np.fft.fft2(vals) / G ** 2
    cap = _mode_cap(N)
    m = np.fft.fftfreq(G, 1.0 / G).astype(int)
    Mi, Ni = np.meshgrid(m, m, indexing="ij")
    inside = (np.abs(Mi) <= cap) & (np.abs(Ni) <= cap)
    scale = np.max(np.abs(F))
    if np.max(np.abs(F[~inside]), initial=0.0) > tol * scale:
        raise RangeError(f"a o g^{t} has modes beyond the cap {cap} at N={N}")
    return {(int(Mi[i]), int(Ni[i])): complex(F[i]) for i in zip(*np.nonzero(inside & (np.abs(F) > tol * scale)))}


# -- partitions ------------------------------------------------------------

@dataclass(frozen=True)
class QuantumPartition:
    """Operators ``P_i`` with ``sum P_i* P_i = Id``.

    ``symbols`` holds the diagonal of each ``P_i`` when the partition is
    made of position multipliers (``None`` otherwise).
    """

    ops: tuple
    completeness_residual: float
    symbols: np.ndarray = None

    @property
    def K(self) -> int:
        return len(self.ops)

    @property
    def N(self) -> int:
        return self.ops[0].shape[0]

    def apply(self, i: int, X: np.ndarray) -> np.ndarray:
        """``P_i X`` for a vector or a matrix of column states."""
        if self.symbols is not None:
            d = self.symbols[i]
            return d[:, None] * X if X.ndim == 2 else d * X
        return self.ops[i] @ X

    @classmethod
    def from_ops(cls, ops: Sequence[np.ndarray], *, tol: float = UNITARY_TOL) -> "QuantumPartition":
        ops = tuple(np.asarray(P, dtype=complex) for P in ops)
        N = ops[0].shape[0]
        S = sum(P.conj().T @ P for P in ops)
        res = float(np.linalg.norm(S - np.eye(N), 2))
        if res > tol:
            raise DomainError(f"sum P_i* P_i deviates from Id by {res:.2e}")
        diag = None
        if all(np.count_nonzero(P - np.diag(np.diag(P))) == 0 for P in ops):
            diag = np.array([np.diag(P) for P in ops])
        return cls(ops, res, diag)


def _smoothstep(u: np.ndarray) -> np.ndarray:
    """C-infinity step: 0 for u <= 0, 1 for u >= 1."""
    u = np.clip(np.asarray(u, dtype=float), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(u > 0, np.exp(-1.0 / np.where(u > 0, u, 1.0)), 0.0)
        b = np.where(u < 1, np.exp(-1.0 / np.where(u < 1, 1.0 - u, 1.0)), 0.0)
    return a / (a + b)


def smooth_indicators(cover: Cover, smoothing: float, x: np.ndarray) -> np.ndarray:
    """Smoothed strip indicators ``chi_i(x)``; each rises over ``[x0 - s, x0)``.

    This is ``1_{O_i}`` convolved with a bump supported in ``[-s, 0]``, so
    ``sum chi_i = 1`` and ``chi_i`` vanishes outside ``[x0 - s, x1)``.
    """
    x = np.asarray(x, dtype=float)
    out = np.empty((cover.K, x.size))
    for i, c in enumerate(cover.cells):
        u = (x - (c.x0 - smoothing)) % 1.0
        width = c.width
        if smoothing == 0:
            out[i] = ((x - c.x0) % 1.0 < width).astype(float)
            continue
        rise = _smoothstep(u / smoothing)
        fall = 1.0 - _smoothstep((u - width) / smoothing)
        out[i] = np.where(u < width + smoothing, rise * fall, 0.0)
    return out


def smooth_partition(cover: Cover, smoothing: float, N: int) -> QuantumPartition:
    """``P_i = chi_i / sqrt(sum chi^2)`` as position multipliers.

    Only vertical strips (cells spanning the full ``y`` range) are
    supported, since position multipliers cannot localize in momentum.
    """
    if cover.K == 1:
        return QuantumPartition.from_ops([np.eye(N, dtype=complex)])
    if any(not c.full_y for c in cover.cells):
        raise ConfigurationError("smooth_partition supports vertical strips only")
    min_width = min(c.width for c in cover.cells)
    if not 0 <= smoothing < min_width / 4:
        raise ConfigurationError(f"smoothing {smoothing} must be < min cell width / 4 = {min_width / 4}")
    for c, h in zip(cover.cells, cover.halos):
        if c.x0 - smoothing < h.x0:
            raise ConfigurationError("smoothing exceeds the halo: P_i would leave Omega_i")
    chi = smooth_indicators(cover, smoothing, np.arange(N) / N)
    P = chi / np.sqrt(np.sum(chi ** 2, axis=0))
    return QuantumPartition.from_ops([np.diag(p).astype(complex) for p in P])


def projective_partition(basis: np.ndarray, groups: Sequence[Sequence[int]] = None) -> QuantumPartition:
    """Orthogonal projectors onto groups of columns of a unitary ``basis``."""
    N = basis.shape[0]
    groups = [[i] for i in range(N)] if groups is None else groups
    ops = [basis[:, g] @ basis[:, g].conj().T for g in groups]
    return QuantumPartition.from_ops(ops)


def dft_matrix(N: int) -> np.ndarray:
    j = np.arange(N)
    return np.exp(-2j * np.pi * np.outer(j, j) / N) / np.sqrt(N)


# -- evolution and refined operators ------------------------------------------

def _power(U: np.ndarray, t: int) -> np.ndarray:
    if t >= 0:
        return np.linalg.matrix_power(U, t)
    return np.linalg.matrix_power(U.conj().T, -t)


def evolve(U: np.ndarray, A: np.ndarray, t: int) -> np.ndarray:
    """``A(t) = U^{-t} A U^t``."""
    Ut = _power(U, t)
    return Ut.conj().T @ A @ Ut


def tau(partition: QuantumPartition, U: np.ndarray, alpha: Sequence[int], eta_steps: int = 1) -> np.ndarray:
    """``P_{alpha_k}(k eta) ... P_{alpha_1}(eta) P_{alpha_0}``."""
    V = _power(U, eta_steps)
    out = partition.ops[alpha[0]].copy()
    for k, a in enumerate(alpha[1:], start=1):
        out = evolve(V, partition.ops[a], k) @ out
    return out


def pi(partition: QuantumPartition, U: np.ndarray, beta: Sequence[int], eta_steps: int = 1) -> np.ndarray:
    """``P_{b_-k}(-k eta) ... P_{b_-2}(-2 eta) P_{b_0} P_{b_-1}(-eta)``.

    ``beta`` is written ``(b_-k, ..., b_-1, b_0)``.
    """
    V = _power(U, eta_steps)
    beta = list(beta)
    if len(beta) == 1:
        return partition.ops[beta[0]].copy()
    out = partition.ops[beta[-1]] @ evolve(V, partition.ops[beta[-2]], -1)
    for k in range(2, len(beta)):
        out = evolve(V, partition.ops[beta[-1 - k]], -k) @ out
    return out


def family_gram(partition: QuantumPartition, U: np.ndarray, words: Sequence[Sequence[int]],
                eta_steps: int = 1) -> np.ndarray:
    """``sum_alpha tau_alpha* tau_alpha`` summed term by term over ``words``.

    ``tau_alpha = U^{-k} W_alpha`` with ``W_{alpha.a} = P_a U W_alpha``, so
    each term is ``W_alpha* W_alpha``.  Siblings are stacked and contracted
    in one product; no completeness identity is used.
    """
    V = _power(U, eta_steps)
    N = partition.N
    S = np.zeros((N, N), dtype=complex)
    groups = {}
    for w in words:
        w = tuple(int(a) for a in w)
        groups.setdefault(w[:-1], []).append(w[-1])
    stack_seq, stack_w = (), [np.eye(N, dtype=complex)]
    for parent in sorted(groups):
        c = 0
        while c < min(len(parent), len(stack_seq)) and parent[c] == stack_seq[c]:
            c += 1
        stack_w = stack_w[: c + 1]
        for d in range(c, len(parent)):
            base = stack_w[d] if d == 0 else V @ stack_w[d]
            stack_w.append(partition.apply(parent[d], base))
        stack_seq = parent
        M = stack_w[len(parent)] if not parent else V @ stack_w[len(parent)]
        W = np.concatenate([partition.apply(a, M) for a in groups[parent]], axis=0)
        S += W.conj().T @ W
    return S


def quantum_entropy(family: Sequence[np.ndarray], psi: np.ndarray, *, tol: float = 1e-8) -> float:
    """``-sum |tau psi|^2 log |tau psi|^2`` with weights renormalized to sum 1."""
    psi = np.asarray(psi, dtype=complex)
    if abs(np.linalg.norm(psi) - 1.0) > 1e-10:
        raise DomainError("psi must have unit norm")
    w = np.array([np.linalg.norm(T @ psi) ** 2 for T in family])
    return entropy_of_weights(w, tol=tol)


def entropy_of_weights(w: np.ndarray, *, tol: float = 1e-8) -> float:
    w = np.asarray(w, dtype=float)
    total = float(w.sum())
    if abs(total - 1.0) > tol:
        raise DomainError(f"weights sum to {total!r}: the family is not a partition of identity")
    return float(-np.sum(_xlogx(w / total)))


def _spectral_norms(M: np.ndarray, chunk: int = 256) -> np.ndarray:
    """Largest singular value of each matrix in a stack."""
    out = []
    for s in range(0, len(M), chunk):
        out.append(np.linalg.svd(M[s: s + chunk], compute_uv=False)[:, 0])
    return np.concatenate(out) if out else np.zeros(0)


def c_norm(taus: Sequence[np.ndarray], pis: Sequence[np.ndarray], U: np.ndarray,
           cutoffs: Sequence[np.ndarray] = None) -> float:
    """``max_{alpha,beta} |tau_alpha U pi_beta* O_beta|`` (operator 2-norm)."""
    left = np.stack([T @ U for T in taus])
    best = 0.0
    for b, P in enumerate(pis):
        R = P.conj().T if cutoffs is None else P.conj().T @ cutoffs[b]
        best = max(best, float(_spectral_norms(left @ R).max()))
    return best


@dataclass(frozen=True)
class EUPResult:
    lhs: float
    rhs: float
    holds: bool
    c: float
    precondition_failures: tuple = ()

    @property
    def slack(self) -> float:
        return self.lhs - self.rhs


def eup_check(taus, pis, U, cutoffs=None, delta_prime: float = 0.0, psi=None, *,
              atol: float = 1e-9) -> EUPResult:
    """Entropic uncertainty ``h_tau(U psi) + h_pi(psi) >= -2 log(c + N_card delta')``."""
    psi = np.asarray(psi, dtype=complex)
    failures = []
    if cutoffs is not None:
        for b, P in enumerate(pis):
            v = P @ psi
            r = float(np.linalg.norm(v - cutoffs[b] @ v))
            if r > delta_prime:
                failures.append((b, r))
        if failures:
            return EUPResult(float("nan"), float("nan"), False, float("nan"), tuple(failures))
    c = c_norm(taus, pis, U, cutoffs)
    card = max(len(taus), len(pis))
    lhs = quantum_entropy(taus, U @ psi) + quantum_entropy(pis, psi)
    rhs = -2.0 * math.log(c + card * delta_prime)
    return EUPResult(lhs, rhs, lhs >= rhs - atol, c)


# -- eigenvectors ---------------------------------------------------------------

@dataclass(frozen=True)
class Eigensystem:
    """Eigenphases in ``(-pi, pi]`` sorted ascending, with unit eigenvectors as columns."""

    phases: np.ndarray
    vectors: np.ndarray
    residuals: np.ndarray
    degeneracies: tuple

    def __iter__(self):
        for k in range(len(self.phases)):
            yield float(self.phases[k]), self.vectors[:, k]

    def __len__(self):
        return len(self.phases)


def eigensystem(U: np.ndarray, *, tol: float = 1e-8, cluster: float = 1e-8) -> Eigensystem:
    """Complex Schur form of a unitary matrix; its Schur vectors are eigenvectors."""
    res = _unitarity_residual(U)
    if res > 1e-8:
        raise DomainError(f"U is not unitary (residual {res:.2e})")
    T, Z = scipy.linalg.schur(U, output="complex")
    lam = np.diag(T)
    phases = np.angle(lam)
    phases = np.where(phases <= -np.pi + 1e-14, np.pi, phases)
    order = np.lexsort((np.arange(len(phases)), phases))
    phases, Z, lam = phases[order], Z[:, order], lam[order]
    resid = np.linalg.norm(U @ Z - Z * lam[None, :], axis=0)
    if np.any(resid > tol):
        raise NumericError(f"eigenvector residual {resid.max():.2e} exceeds {tol}")
    # Group phases into eigenspaces (circularly adjacent values within `cluster`).
    counts, run = [], 1
    for a, b in zip(phases, phases[1:]):
        if b - a < cluster:
            run += 1
        else:
            counts.append(run)
            run = 1
    counts.append(run)
    if len(counts) > 1 and phases[0] + 2 * np.pi - phases[-1] < cluster:
        counts[0] += counts.pop()
    return Eigensystem(phases, Z, resid, tuple(counts))


# -- cylinder measures from states ------------------------------------------------

class StateCylinderMeasure(CylinderMeasure):
    """Cylinder weights ``|tau_alpha psi|^2`` (forward) or ``|pi_beta psi|^2`` (backward).

    Several states can be carried at once (columns of ``states``); ``mix``
    gives the weights of their convex combination.  Masses of arbitrary
    word lists are computed along a prefix trie, so words much longer than
    any stored table are fine.
    """

    def __init__(self, states: np.ndarray, partition: QuantumPartition, U: np.ndarray,
                 eta_steps: int = 1, depth: int = 8, orientation: str = FORWARD, *,
                 mix: np.ndarray = None, _reversed: bool = False, table_limit: int = 1 << 22):
        states = np.asarray(states, dtype=complex)
        self.states = states[:, None] if states.ndim == 1 else states
        self.partition = partition
        self.V = _power(U, eta_steps)
        self.Vinv = self.V.conj().T
        self.K = partition.K
        self.depth = int(depth)
        self.orientation = orientation
        self.mix = np.full(self.states.shape[1], 1.0 / self.states.shape[1]) if mix is None else np.asarray(mix)
        self._rev = _reversed
        self.table_limit = table_limit
        self._tables = {}
        resid = np.linalg.norm(self.V @ self.states - self.states * np.sum(
            self.states.conj() * (self.V @ self.states), axis=0)[None, :], axis=0)
        self.eigen_residual = float(resid.max())
        if self.eigen_residual > 1e-8:
            warnings.warn("state is not an eigenvector: backward compatibility degrades", stacklevel=2)

    @property
    def is_eigenvector(self) -> bool:
        return self.eigen_residual <= 1e-8

    def reversed(self) -> "StateCylinderMeasure":
        other = object.__new__(StateCylinderMeasure)
        other.__dict__.update(self.__dict__)
        other._tables = {}
        other._rev = not self._rev
        other.orientation = FORWARD if self.orientation == BACKWARD else BACKWARD
        return other

    # Per-state masses, shape (n_words, n_states).
    def state_masses(self, words: np.ndarray, lengths: np.ndarray) -> np.ndarray:
        words = np.asarray(words)
        lengths = np.asarray(lengths)
        if lengths.size and (lengths.min() < 1 or lengths.max() > self.depth):
            raise RangeError(f"word length outside 1..{self.depth}")
        backward_kind = (self.orientation == BACKWARD) != self._rev
        if backward_kind:
            # Time order for the recursion is (b_0, b_-1, b_-2, ...).
            if self._rev:
                seqs = [tuple(int(s) for s in words[i, :L]) for i, L in enumerate(lengths)]
            else:
                seqs = [tuple(int(s) for s in words[i, :L][::-1]) for i, L in enumerate(lengths)]
            return self._trie(seqs, self._backward_propagate)
        if self._rev:
            seqs = [tuple(int(s) for s in words[i, :L][::-1]) for i, L in enumerate(lengths)]
        else:
            seqs = [tuple(int(s) for s in words[i, :L]) for i, L in enumerate(lengths)]
        return self._trie(seqs, self._forward_propagate)

    def masses(self, words: np.ndarray, lengths: np.ndarray) -> np.ndarray:
        return self.state_masses(words, lengths) @ self.mix

    # A step from depth d to d+1 is `propagate` (shared by all children of
    # one node) followed by the child's multiplier.
    def _forward_propagate(self, parent, seq, d):
        return self.states if d == 0 else self.V @ parent

    def _backward_propagate(self, parent, seq, d):
        if d == 0:
            return self.states  # placeholder: depth-1 masses come from the marginal
        if d == 1:
            return None  # depends on the child's own past symbol
        if d == 2:
            return self.Vinv @ (self.Vinv @ parent)
        return self.Vinv @ parent

    def _trie(self, seqs, propagate):
        n = len(seqs)
        out = np.empty((n, self.states.shape[1]))
        P = self.partition
        backward_kind = propagate == self._backward_propagate
        order = sorted(range(n), key=lambda i: seqs[i])
        stack_seq, stack_w, stack_pre = (), [None], []
        for i in order:
            s = seqs[i]
            if backward_kind and len(s) == 1:
                # Marginal over the past symbol keeps the tables compatible.
                tot = 0.0
                for b in range(self.K):
                    tot = tot + self._trie([(s[0], b)], propagate)[0]
                out[i] = tot
                continue
            c = 0
            while c < min(len(s), len(stack_seq)) and s[c] == stack_seq[c]:
                c += 1
            stack_w = stack_w[: c + 1]
            # The propagated parent at depth c is still valid for a new child there.
            stack_pre = stack_pre[: c + 1] if c < len(s) else stack_pre[:c]
            for d in range(c, len(s)):
                if len(stack_pre) <= d:
                    stack_pre.append(propagate(stack_w[d], s, d))
                if backward_kind and d == 1:
                    w = P.apply(s[0], self.V @ P.apply(s[1], self.Vinv @ self.states))
                elif backward_kind and d == 0:
                    w = self.states
                else:
                    w = P.apply(s[d], stack_pre[d])
                stack_w.append(w)
            stack_seq = s
            out[i] = np.sum(np.abs(stack_w[len(s)]) ** 2, axis=0)
        return out

    def table(self, d: int) -> np.ndarray:
        self._check_depth(d)
        if d not in self._tables:
            if self.K ** d > self.table_limit:
                raise RangeError(f"table at depth {d} exceeds {self.table_limit} entries")
            words = np.array([index_word(i, self.K, d) for i in range(self.K ** d)], dtype=np.int64)
            self._tables[d] = self.masses(words.reshape(-1, d), np.full(self.K ** d, d))
        return self._tables[d]


def cylinder_measure_from_state(psi, partition: QuantumPartition, U: np.ndarray, eta_steps: int = 1,
                                depth: int = 8, orientation: str = FORWARD) -> StateCylinderMeasure:
    """Cylinder measure induced by a unit state (or by the uniform mixture of columns)."""
    psi = np.asarray(psi, dtype=complex)
    norms = np.linalg.norm(psi if psi.ndim == 2 else psi[:, None], axis=0)
    if np.any(np.abs(norms - 1.0) > 1e-10):
        raise DomainError("states must have unit norm")
    return StateCylinderMeasure(psi, partition, U, eta_steps, depth, orientation)


# -- per-pair uncertainty bound -----------------------------------------------------

@dataclass(frozen=True)
class PairFamilies:
    """The families ``I(gamma)`` and ``K(gamma)`` split off ``I(t)`` and ``K(t)``."""

    threshold: float
    forward: dict   # gamma -> list of alpha' (time order alpha_2..alpha_n)
    backward: dict  # gamma -> list of beta' (written order b_-n..b_-2)

    @classmethod
    def build(cls, roof: RoofFunction, t: float, *, cap: int = 10 ** 6) -> "PairFamilies":
        fwd, bwd = {}, {}
        for w in index_family(roof, t, cap=cap):
            fwd.setdefault((w[0], w[1]), []).append(w[2:])
        for w in index_family(roof, t, cap=cap, orientation=BACKWARD):
            bwd.setdefault((w[-2], w[-1]), []).append(w[:-2])
        return cls(t, fwd, bwd)


def _forward_chain(partition, V, word):
    """``P_{a_n} V ... V P_{a_2}`` for ``word = (a_2, ..., a_n)``."""
    M = partition.ops[word[0]].copy()
    for a in word[1:]:
        M = partition.apply(a, V @ M)
    return M


def _backward_chain(partition, Vinv, word):
    """``P_{b_-n} V^-1 ... V^-1 P_{b_-2}`` for ``word = (b_-n, ..., b_-2)``."""
    M = partition.ops[word[-1]].copy()
    for b in reversed(word[:-1]):
        M = partition.apply(b, Vinv @ M)
    return M


@dataclass
class PairUncertainty:
    """Norms ``c^gamma`` and the chained operators for each pair ``gamma``."""

    families: PairFamilies
    c_gamma: dict
    A: dict
    B: dict

    @property
    def c(self) -> float:
        return max(self.c_gamma.values())


def pair_uncertainty(partition: QuantumPartition, U: np.ndarray, roof: RoofFunction, t: float,
                     eta_steps: int = 1) -> PairUncertainty:
    """``c^gamma = max |A_alpha' U^3 B_beta'*|`` over ``I(gamma) x K(gamma)``."""
    fam = PairFamilies.build(roof, t)
    V = _power(U, eta_steps)
    Vinv = V.conj().T
    V3 = V @ V @ V
    c, A, B = {}, {}, {}
    for gamma in sorted(set(fam.forward) & set(fam.backward)):
        A[gamma] = np.stack([_forward_chain(partition, V, w) for w in fam.forward[gamma]])
        B[gamma] = np.stack([_backward_chain(partition, Vinv, w) for w in fam.backward[gamma]])
        left = A[gamma] @ V3
        best = 0.0
        for Bm in B[gamma]:
            best = max(best, float(_spectral_norms(left @ Bm.conj().T).max()))
        c[gamma] = best
    return PairUncertainty(fam, c, A, B)


@dataclass
class StateUncertainty:
    """Per-pair and aggregated uncertainty bounds for one eigenvector."""

    per_pair: dict      # gamma -> (lhs, rhs, weight |P_gamma psi|^2)
    h_plus: float
    h_minus: float
    c: float
    max_c_gamma: float

    @property
    def pair_slack(self) -> float:
        vals = [l - r for l, r, _ in self.per_pair.values()]
        return min(vals) if vals else float("inf")

    @property
    def aggregate_lhs(self) -> float:
        return self.h_plus + self.h_minus

    @property
    def aggregate_rhs_printed(self) -> float:
        return -2 * math.log(self.c) - math.log(self.max_c_gamma)

    @property
    def aggregate_rhs(self) -> float:
        # Each of the two suspension entropies loses -log max c_gamma.
        return -2 * math.log(self.c) - 2 * math.log(self.max_c_gamma)


def state_uncertainty(pu: PairUncertainty, partition: QuantumPartition, U: np.ndarray,
                      roof: RoofFunction, psi: np.ndarray, eta_steps: int = 1,
                      *, skip_below: float = 1e-14) -> StateUncertainty:
    """Evaluate the per-pair bound and the weighted aggregate for one eigenvector."""
    V = _power(U, eta_steps)
    Vinv = V.conj().T
    psi = np.asarray(psi, dtype=complex)
    per = {}
    weights = {}
    for gamma in pu.c_gamma:
        g0, g1 = gamma
        v = partition.apply(g1, V @ partition.apply(g0, Vinv @ psi))
        m = float(np.vdot(v, v).real)
        weights[gamma] = m
        if m <= skip_below:
            continue
        tilde = v / math.sqrt(m)
        wa = np.sum(np.abs(pu.A[gamma] @ (V @ tilde)) ** 2, axis=1)
        wb = np.sum(np.abs(pu.B[gamma] @ (Vinv @ (Vinv @ tilde))) ** 2, axis=1)
        lhs = entropy_of_weights(wa) + entropy_of_weights(wb)
        per[gamma] = (lhs, -2.0 * math.log(pu.c_gamma[gamma]), m)
    # Aggregate over the suspension partitions at the same threshold.
    f = roof.array
    lam = 1.0 / sum(f[g] * m for g, m in weights.items())
    c_g = {g: lam * f[g] for g in weights}
    fam = pu.families
    mu_f = StateCylinderMeasure(psi, partition, U, eta_steps, depth=64)
    mu_b = StateCylinderMeasure(psi, partition, U, eta_steps, depth=64, orientation=BACKWARD)
    h_plus = _weighted_suspension_entropy(mu_f, fam.forward, c_g, forward=True)
    h_minus = _weighted_suspension_entropy(mu_b, fam.backward, c_g, forward=False)
    return StateUncertainty(per, h_plus, h_minus, pu.c, max(c_g.values()))


def _weighted_suspension_entropy(mu, groups, c_g, forward):
    words, weights = [], []
    for gamma, tails in groups.items():
        for tail in tails:
            words.append(gamma + tuple(tail) if forward else tuple(tail) + gamma)
            weights.append(c_g[gamma])
    L = max(len(w) for w in words)
    arr = np.zeros((len(words), L), dtype=np.int64)
    lengths = np.array([len(w) for w in words])
    for i, w in enumerate(words):
        arr[i, : len(w)] = w
    m = np.asarray(weights) * mu.masses(arr, lengths)
    return float(-np.sum(_xlogx(m)))


# -- Egorov and commutators -------------------------------------------------------

def egorov_defect(a: Mapping, g: TorusMap, U: np.ndarray, t: int, N: int,
                  symbol: Callable = None) -> float:
    """``|U^{-t} Op(a) U^t - Op(a o g^t)|``.

    Linear maps move Fourier modes exactly; perturbed maps need ``symbol``
    (a vectorized ``a(x, y)``) and are fitted on a grid.
    """
    if t == 0:
        return 0.0
    if g.is_linear:
        evolved = compose_linear(a, g.matrix, t)
    else:
        if symbol is None:
            raise DomainError("perturbed maps need a pointwise symbol")
        evolved = compose_sampled(symbol, g, t, N)
    lhs = evolve(U, quantize_observable(a, N), t)
    return float(np.linalg.norm(lhs - quantize_observable(evolved, N), 2))


def commutator_defect(partition: QuantumPartition, U: np.ndarray, gamma: Sequence[int],
                      roof: RoofFunction, n_E: float, eta_steps: int = 1) -> float:
    """``|[P_{g_k}(k), P_{g_0}] P_{g_{k-1}}(k-1) ... P_{g_1}(1)| / |P_{g_{k-1}}(k-1) ... P_{g_1}(1)|``."""
    gamma = tuple(gamma)
    k = len(gamma) - 1
    if k >= 1 and roof.pair_sum(gamma) > n_E:
        raise RangeError(f"roof sum {roof.pair_sum(gamma)!r} of {gamma} exceeds n_E = {n_E}")
    V = _power(U, eta_steps)
    N = partition.N
    loc = np.eye(N, dtype=complex)
    for j in range(1, k):
        loc = evolve(V, partition.ops[gamma[j]], j) @ loc
    top = evolve(V, partition.ops[gamma[k]], k)
    bottom = partition.ops[gamma[0]]
    C = (top @ bottom - bottom @ top) @ loc
    denom = float(np.linalg.norm(loc, 2))
    return 0.0 if denom == 0 else float(np.linalg.norm(C, 2)) / denom


# -- configuration ------------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentConfig:
    """Scales of one semiclassical experiment.

    ``nu`` and ``delta0`` have no torus counterpart; they are carried only
    so configurations can record them.
    """

    N: int
    K: int
    eta: float
    eps: float
    eps_prime: float
    a0: float
    b0: float
    delta_prime: float = 0.0
    L: float = 1.0
    K0: float = 1.0
    nu: float = None
    delta0: float = None

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not self.eps_prime > 4 * self.eps:
            raise ConfigurationError(
                f"constraint eps' > 4 eps violated: {self.eps_prime!r} <= {4 * self.eps!r}")
        check_eps(self.a0, self.b0, self.eta, self.eps)
        if self.N < 2 or self.K < 1:
            raise ConfigurationError("need N >= 2 and K >= 1")

    @classmethod
    def from_roof(cls, roof: RoofFunction, N: int, *, eps_prime_factor: float = 4.5,
                  **extra) -> "ExperimentConfig":
        eps = float(roof.eps)
        return cls(N, roof.K, float(roof.eta), eps, eps_prime_factor * eps,
                   float(roof.a0), float(roof.b0), **extra)

    @property
    def n_E(self) -> int:
        return int(math.floor((1 - self.eps_prime) * math.log(self.N)))

    @property
    def T_E(self) -> float:
        return (1 - self.eps) * self.n_E

    @property
    def family_threshold(self) -> float:
        """``T_E``, raised to the family floor ``2 b0 eta`` when smaller.

        With ``n_E <= 0`` there is no Ehrenfest window (and ``(1 - eps) n_E``
        can turn positive when ``eps > 1``), so the floor is used.
        """
        floor = 2 * self.b0 * self.eta
        return floor if self.n_E <= 0 else max(self.T_E, floor)
