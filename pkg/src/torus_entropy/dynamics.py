"""Hyperbolic torus maps, their tangent cocycle and unstable Jacobians.

The discrete map plays the role of the time-``eta`` flow: one application is
one ``eta`` step.  Perturbed maps compose a linear automorphism with a shear
``(x, y) -> (x, y + kappa*h(x))`` where ``h`` is a zero-mean trigonometric
polynomial, so area is preserved exactly and the inverse is explicit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, DomainError, HyperbolicityError

# Fraction of the spectral gap (lambda - 1) a perturbation may use.
HYPERBOLICITY_MARGIN = 0.05
# Relative widening applied to the sampled a0/b0 bounds.
SAFETY_WIDENING = 0.01
# Per-step log growth below this is treated as "not expanding".
_MIN_GROWTH = 1e-3
_GENERIC = np.array([0.6, 0.8])


@dataclass(frozen=True)
class TorusPoint:
    x: float
    y: float

    def __post_init__(self):
        object.__setattr__(self, "x", float(self.x) % 1.0)
        object.__setattr__(self, "y", float(self.y) % 1.0)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y])


@dataclass(frozen=True)
class Perturbation:
    """``h(x) = sum_m a_m cos(2 pi m x) + b_m sin(2 pi m x)`` for modes ``m >= 1``."""

    modes: tuple  # of (m, a_m, b_m)

    def __post_init__(self):
        modes = tuple((int(m), float(a), float(b)) for m, a, b in self.modes)
        if any(m < 1 for m, _, _ in modes):
            raise DomainError("perturbation modes must be >= 1 (h has zero mean)")
        object.__setattr__(self, "modes", modes)

    def h(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for m, a, b in self.modes:
            out += a * np.cos(2 * np.pi * m * x) + b * np.sin(2 * np.pi * m * x)
        return out

    def dh(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for m, a, b in self.modes:
            w = 2 * np.pi * m
            out += w * (-a * np.sin(w * x) + b * np.cos(w * x))
        return out

    def antiderivative(self, x):
        """Zero-mean primitive ``H`` with ``H' = h``."""
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for m, a, b in self.modes:
            w = 2 * np.pi * m
            out += (a * np.sin(w * x) - b * np.cos(w * x)) / w
        return out

    @property
    def lipschitz(self) -> float:
        """Upper bound ``sum 2 pi m (|a_m| + |b_m|)`` on ``|h'|``."""
        return sum(2 * np.pi * m * (abs(a) + abs(b)) for m, a, b in self.modes)


@dataclass(frozen=True)
class TorusMap:
    """``g = K o A`` with ``A`` in SL(2, Z) and an optional shear ``K``."""

    matrix: tuple
    perturbation: Perturbation = None
    amplitude: float = 0.0
    _A: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        A = np.asarray(self.matrix)
        if A.shape != (2, 2) or not np.all(A == np.round(A)):
            raise DomainError("matrix must be a 2x2 integer matrix")
        A = A.astype(np.int64)
        if round(np.linalg.det(A)) != 1:
            raise DomainError("matrix must have determinant +1")
        object.__setattr__(self, "matrix", tuple(map(tuple, A.tolist())))
        object.__setattr__(self, "_A", A.astype(float))
        if self.perturbation is not None and self.amplitude != 0.0:
            if not self.is_hyperbolic:
                raise ConfigurationError("a perturbation needs a hyperbolic base matrix")
            used = abs(self.amplitude) * self.perturbation.lipschitz
            allowed = HYPERBOLICITY_MARGIN * (self.eigenvalue - 1.0)
            if used > allowed:
                raise ConfigurationError(
                    f"perturbation strength {used:.4g} exceeds the hyperbolicity margin {allowed:.4g}")

    @classmethod
    def linear(cls, matrix) -> "TorusMap":
        return cls(matrix)

    @classmethod
    def perturbed(cls, matrix, modes: Sequence, amplitude: float) -> "TorusMap":
        return cls(matrix, Perturbation(tuple(modes)), float(amplitude))

    @property
    def is_linear(self) -> bool:
        return self.perturbation is None or self.amplitude == 0.0

    @property
    def trace(self) -> int:
        return self.matrix[0][0] + self.matrix[1][1]

    @property
    def is_hyperbolic(self) -> bool:
        return abs(self.trace) > 2

    @property
    def eigenvalue(self) -> float:
        """Leading eigenvalue modulus ``lambda > 1`` of the base matrix."""
        tr = abs(self.trace)
        if tr <= 2:
            raise HyperbolicityError(f"trace {self.trace} gives no expanding eigenvalue")
        return (tr + math.sqrt(tr * tr - 4)) / 2

    def base_unstable_direction(self) -> np.ndarray:
        lam = self.eigenvalue * np.sign(self.trace)
        a, b = self.matrix[0]
        c, d = self.matrix[1]
        v = np.array([b, lam - a]) if abs(b) + abs(lam - a) > abs(c) + abs(lam - d) \
            else np.array([lam - d, c])
        return _normalize_sign(v / np.linalg.norm(v))

    # -- vectorized core --------------------------------------------------

    def apply_array(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        out = (pts @ self._A.T) % 1.0
        if not self.is_linear:
            out[..., 1] = (out[..., 1] + self.amplitude * self.perturbation.h(out[..., 0])) % 1.0
        return out

    def inverse_array(self, pts: np.ndarray) -> np.ndarray:
        pts = np.array(pts, dtype=float)
        if not self.is_linear:
            pts[..., 1] = pts[..., 1] - self.amplitude * self.perturbation.h(pts[..., 0])
        Ainv = np.array([[self.matrix[1][1], -self.matrix[0][1]],
                         [-self.matrix[1][0], self.matrix[0][0]]], dtype=float)
        return (pts @ Ainv.T) % 1.0

    def tangent_array(self, pts: np.ndarray) -> np.ndarray:
        """``dg`` at each point, shape ``(..., 2, 2)``."""
        pts = np.asarray(pts, dtype=float)
        D = np.broadcast_to(self._A, pts.shape[:-1] + (2, 2)).copy()
        if not self.is_linear:
            xa = (pts @ self._A[0]) % 1.0
            s = self.amplitude * self.perturbation.dh(xa)
            D[..., 1, 0] += s * self._A[0, 0]
            D[..., 1, 1] += s * self._A[0, 1]
        return D


def _normalize_sign(v: np.ndarray) -> np.ndarray:
    """Flip so the first nonzero component is positive (works on ``(..., 2)``)."""
    v = np.asarray(v, dtype=float)
    lead = np.where(np.abs(v[..., 0]) > 1e-300, v[..., 0], v[..., 1])
    return v * np.where(lead < 0, -1.0, 1.0)[..., None]


def _point_array(p) -> np.ndarray:
    if isinstance(p, TorusPoint):
        return p.as_array()
    return np.asarray(p, dtype=float) % 1.0


def apply(g: TorusMap, p: TorusPoint) -> TorusPoint:
    x, y = g.apply_array(p.as_array())
    return TorusPoint(x, y)


def tangent(g: TorusMap, p: TorusPoint) -> np.ndarray:
    return g.tangent_array(p.as_array())


def unstable_directions(g: TorusMap, pts: np.ndarray, iterations: int = 64) -> np.ndarray:
    """Unit unstable vectors at many points, shape ``(M, 2)``.

    Pulls each point back ``iterations`` steps, then pushes a fixed generic
    vector forward through the cocycle along the stored backward orbit.
    """
    if iterations < 1:
        raise DomainError("iterations must be >= 1")
    if not g.is_hyperbolic:
        raise HyperbolicityError(f"matrix {g.matrix} is not hyperbolic (|trace| <= 2)")
    pts = np.atleast_2d(np.asarray(pts, dtype=float) % 1.0)
    orbit = [pts]
    for _ in range(iterations):
        orbit.append(g.inverse_array(orbit[-1]))
    v = np.broadcast_to(_GENERIC, pts.shape).copy()
    growth = np.zeros(len(pts))
    for q in reversed(orbit[1:]):
        v = np.einsum("mij,mj->mi", g.tangent_array(q), v)
        nrm = np.linalg.norm(v, axis=1)
        growth += np.log(nrm)
        v /= nrm[:, None]
    if np.any(growth / iterations < _MIN_GROWTH):
        raise HyperbolicityError("tangent cocycle shows no exponential growth")
    return _normalize_sign(v)


def unstable_direction(g: TorusMap, p: TorusPoint, iterations: int = 64) -> np.ndarray:
    """Approximate ``E^u(p)`` as a sign-normalized unit vector."""
    return unstable_directions(g, _point_array(p)[None, :], iterations)[0]


def unstable_jacobians(g: TorusMap, pts: np.ndarray, iterations: int = 64) -> np.ndarray:
    """``J^u`` at many points: ``1 / |dg(p) e_u(p)|``."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float) % 1.0)
    e = unstable_directions(g, pts, iterations)
    w = np.einsum("mij,mj->mi", g.tangent_array(pts), e)
    return 1.0 / np.linalg.norm(w, axis=1)


def unstable_jacobian(g: TorusMap, p: TorusPoint, iterations: int = 64) -> float:
    """``J^u(p)``: contraction of ``dg^{-1}`` on the unstable line at ``g(p)``."""
    if g.is_linear:
        if not g.is_hyperbolic:
            raise HyperbolicityError(f"matrix {g.matrix} is not hyperbolic (|trace| <= 2)")
        return 1.0 / g.eigenvalue
    return float(unstable_jacobians(g, _point_array(p)[None, :], iterations)[0])


def lyapunov_exponent(g: TorusMap, seeds: Sequence, steps: int) -> float:
    """Mean log growth rate of the tangent cocycle over the seeds' orbits."""
    if steps < 100:
        raise DomainError("steps must be >= 100")
    if not g.is_hyperbolic:
        raise HyperbolicityError(f"matrix {g.matrix} is not hyperbolic (|trace| <= 2)")
    q = np.atleast_2d(np.array([_point_array(s) for s in seeds]))
    v = np.broadcast_to(g.base_unstable_direction(), q.shape).copy()
    total = np.zeros(len(q))
    for _ in range(steps):
        v = np.einsum("mij,mj->mi", g.tangent_array(q), v)
        nrm = np.linalg.norm(v, axis=1)
        total += np.log(nrm)
        v /= nrm[:, None]
        q = g.apply_array(q)
    return float(np.mean(total) / steps)


@dataclass(frozen=True)
class Rect:
    """Axis-aligned torus rectangle ``[x0, x1) x [y0, y1)``; bounds may wrap."""

    x0: float
    x1: float
    y0: float
    y1: float

    @property
    def width(self) -> float:
        return self.x1 - self.x0

    @property
    def height(self) -> float:
        return self.y1 - self.y0

    @property
    def full_x(self) -> bool:
        return self.width >= 1.0

    @property
    def full_y(self) -> bool:
        return self.height >= 1.0

    def contains(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        ok = np.ones(pts.shape[:-1], dtype=bool)
        if not self.full_x:
            ok &= (pts[..., 0] - self.x0) % 1.0 < self.width
        if not self.full_y:
            ok &= (pts[..., 1] - self.y0) % 1.0 < self.height
        return ok

    def grid(self, density: int) -> np.ndarray:
        """``density x density`` points ``x0 + i*w/density``; nested under refinement."""
        xs = self.x0 + self.width * np.arange(density) / density
        ys = self.y0 + self.height * np.arange(density) / density
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        return np.stack([X.ravel() % 1.0, Y.ravel() % 1.0], axis=1)

    def strictly_contains(self, other: "Rect") -> bool:
        inside = (self.x0 <= other.x0 and other.x1 <= self.x1
                  and self.y0 <= other.y0 and other.y1 <= self.y1)
        return inside and (self.width > other.width or self.height > other.height)


@dataclass(frozen=True)
class Cover:
    """Cells ``O_i`` partitioning the torus and enlarged halos ``Omega_i``."""

    cells: tuple
    halos: tuple
    eta: float = 0.1

    def __post_init__(self):
        if len(self.cells) != len(self.halos) or not self.cells:
            raise DomainError("need one halo per cell")
        area = sum(c.width * c.height for c in self.cells)
        if abs(area - 1.0) > 1e-12:
            raise DomainError(f"cells cover area {area}, not 1")
        if len(self.cells) > 1:
            for c, h in zip(self.cells, self.halos):
                if not h.strictly_contains(c):
                    raise DomainError("every halo must strictly contain its cell")
        if self.eta <= 0:
            raise DomainError("eta must be positive")

    @property
    def K(self) -> int:
        return len(self.cells)

    @classmethod
    def strips(cls, K: int, halo: float = 0.05, eta: float = 0.1) -> "Cover":
        """``K`` vertical strips ``[i/K, (i+1)/K) x [0, 1)``."""
        cells = tuple(Rect(i / K, (i + 1) / K, 0.0, 1.0) for i in range(K))
        if K == 1:
            return cls(cells, cells, eta)
        halos = tuple(Rect(c.x0 - halo, c.x1 + halo, 0.0, 1.0) for c in cells)
        return cls(cells, halos, eta)

    @classmethod
    def grid(cls, kx: int, ky: int, halo: float = 0.05, eta: float = 0.1) -> "Cover":
        cells = tuple(Rect(i / kx, (i + 1) / kx, j / ky, (j + 1) / ky)
                      for i in range(kx) for j in range(ky))
        halos = tuple(Rect(c.x0 - halo, c.x1 + halo, c.y0 - halo, c.y1 + halo) for c in cells)
        return cls(cells, halos, eta)

    def cell_index(self, pts: np.ndarray) -> np.ndarray:
        """Index of the cell containing each point."""
        pts = np.atleast_2d(pts)
        out = np.full(len(pts), -1)
        for i, c in enumerate(self.cells):
            out[(out < 0) & c.contains(pts)] = i
        return out


@dataclass(frozen=True)
class JacobianTable:
    """Discrete Jacobian ``J_eta^u(gamma)`` with its bounds.

    ``oscillation`` is the largest sampled spread of ``-log J^u`` inside one
    nonempty pair cell: the empirical continuity modulus.
    """

    values: np.ndarray
    a0: float
    b0: float
    eta: float
    empty: np.ndarray
    oscillation: float = 0.0

    @property
    def K(self) -> int:
        return self.values.shape[0]

    def __post_init__(self):
        L = -np.log(np.asarray(self.values, dtype=float))
        if np.any(L < self.a0) or np.any(L > self.b0):
            raise DomainError("discrete Jacobian outside [e^-b0, e^-a0]")


def discrete_jacobian(g: TorusMap, cover: Cover, grid_density: int = 16,
                      iterations: int = 64) -> JacobianTable:
    """Sampled ``sup {J^u(p) : p in Omega_i, g(p) in Omega_j}`` for every pair."""
    if grid_density < 8:
        raise DomainError("grid_density must be >= 8 per cell side")
    K = cover.K
    sup = np.full((K, K), -np.inf)
    inf = np.full((K, K), np.inf)
    for i, halo in enumerate(cover.halos):
        pts = halo.grid(grid_density)
        J = unstable_jacobians(g, pts, iterations)
        img = g.apply_array(pts)
        for j, target in enumerate(cover.halos):
            hit = target.contains(img)
            if np.any(hit):
                sup[i, j] = J[hit].max()
                inf[i, j] = J[hit].min()
    empty = ~np.isfinite(sup)
    if np.all(empty):
        raise DomainError("every pair cell is empty")
    L = -np.log(sup[~empty])
    a0 = float(L.min()) / (1.0 + SAFETY_WIDENING)
    b0 = float(L.max()) * (1.0 + SAFETY_WIDENING)
    values = np.where(empty, math.exp(-b0), sup)
    spread = (np.log(sup[~empty]) - np.log(inf[~empty]))
    return JacobianTable(values, a0, b0, cover.eta, empty, float(spread.max()))
