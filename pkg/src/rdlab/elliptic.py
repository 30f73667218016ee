"""Divergence-form elliptic operator on a 1-D interval.

The operator ``A u = (a u')'`` is discretized in flux form on a uniform grid of
interior nodes and diagonalized once.  Semigroup and resolvent actions are then
exact spectral sums, so every ``apply_*`` below is a pure function of an
immutable :class:`SemigroupCache`.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .errors import EllipticityViolation, InvalidParameter

__all__ = [
    "BC",
    "SpatialGrid",
    "EllipticOperator",
    "SemigroupCache",
    "build_grid",
    "assemble_operator",
    "diffusion_coefficient",
    "apply_semigroup",
    "apply_resolvent",
    "spectral_radius",
]


class BC(str, enum.Enum):
    DIRICHLET = "dirichlet"
    NEUMANN = "neumann"

    @classmethod
    def parse(cls, value) -> "BC":
        if isinstance(value, BC):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise InvalidParameter(f"unknown boundary condition: {value!r}") from None


@dataclass(frozen=True)
class SpatialGrid:
    n: int
    length: float
    spacing: float
    bc: BC
    nodes: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)

    def inner(self, u, v):
        """Weighted pairing ``sum_i w_i u_i v_i`` over the last axis."""
        return np.sum(self.weights * np.asarray(u) * np.asarray(v), axis=-1)

    @property
    def flux_points(self) -> np.ndarray:
        return (np.arange(self.n + 1) + 0.5) * self.spacing


def build_grid(n: int, length: float, bc="dirichlet") -> SpatialGrid:
    """Uniform grid of ``n`` interior nodes ``x_i = i*h`` with ``h = L/(n+1)``.

    Both boundary conditions use equal weights ``h``: for Dirichlet this is the
    trapezoid rule with zero boundary values, and for Neumann (ghost reflection
    ``u_0 = u_1``) it is the weighting under which the matrix stays symmetric.
    """
    bc = BC.parse(bc)
    if int(n) != n or n < 2:
        raise InvalidParameter(f"grid needs n >= 2 interior nodes, got {n}")
    if not np.isfinite(length) or length <= 0:
        raise InvalidParameter(f"domain length must be positive, got {length}")
    n = int(n)
    h = float(length) / (n + 1)
    nodes = h * np.arange(1, n + 1)
    weights = np.full(n, h)
    for arr in (nodes, weights):
        arr.setflags(write=False)
    return SpatialGrid(n=n, length=float(length), spacing=h, bc=bc, nodes=nodes, weights=weights)


def diffusion_coefficient(name: str, params: Sequence[float] = (), length: float = 1.0) -> Callable:
    """Built-in diffusion coefficients ``a(x)`` on ``[0, length]``.

    ``constant``: (value,)
    ``affine``: (a0, a1) giving ``a0 + a1 * x / length``
    ``bump``: (base, amplitude, center, width), a Gaussian bump over a base level
    ``table``: (x_0, ..., x_m, a_0, ..., a_m), linearly interpolated
    """
    p = [float(v) for v in params]
    name = name.strip().lower()
    if name == "constant":
        value = p[0] if p else 1.0
        return lambda x: np.full(np.shape(x), value, dtype=float)
    if name == "affine":
        if len(p) != 2:
            raise InvalidParameter("affine coefficient takes (a0, a1)")
        a0, a1 = p
        return lambda x: a0 + a1 * np.asarray(x, dtype=float) / length
    if name == "bump":
        if len(p) != 4:
            raise InvalidParameter("bump coefficient takes (base, amplitude, center, width)")
        base, amp, center, width = p
        if width <= 0:
            raise InvalidParameter("bump width must be positive")
        return lambda x: base + amp * np.exp(-(((np.asarray(x, dtype=float) - center) / width) ** 2))
    if name == "table":
        if len(p) < 4 or len(p) % 2:
            raise InvalidParameter("table coefficient takes matching lists of abscissae and values")
        m = len(p) // 2
        xs, vals = np.array(p[:m]), np.array(p[m:])
        if np.any(np.diff(xs) <= 0):
            raise InvalidParameter("table abscissae must be strictly increasing")
        return lambda x: np.interp(x, xs, vals)
    raise InvalidParameter(f"unknown diffusion coefficient: {name!r}")


@dataclass(frozen=True)
class EllipticOperator:
    grid: SpatialGrid
    a_flux: np.ndarray = field(repr=False)
    diag: np.ndarray = field(repr=False)
    offdiag: np.ndarray = field(repr=False)

    @property
    def matrix(self) -> np.ndarray:
        return np.diag(self.diag) + np.diag(self.offdiag, 1) + np.diag(self.offdiag, -1)

    def apply(self, u):
        """Apply the tridiagonal operator along the last axis of ``u``."""
        u = np.asarray(u, dtype=float)
        out = self.diag * u
        out[..., :-1] += self.offdiag * u[..., 1:]
        out[..., 1:] += self.offdiag * u[..., :-1]
        return out


def assemble_operator(grid: SpatialGrid, a: Callable, eps_ell: float = 1e-10) -> EllipticOperator:
    """Flux-form discretization of ``(a u')'`` with the grid's boundary condition."""
    xf = grid.flux_points
    a_flux = np.asarray(a(xf), dtype=float) * np.ones_like(xf)
    if not np.all(np.isfinite(a_flux)) or a_flux.min() < eps_ell:
        raise EllipticityViolation(
            f"diffusion coefficient min {a_flux.min():.3g} below ellipticity bound {eps_ell:g}"
        )
    h2 = grid.spacing**2
    left, right = a_flux[:-1], a_flux[1:]
    diag = -(left + right) / h2
    if grid.bc is BC.NEUMANN:
        # reflected ghost node kills the boundary flux
        diag[0] += left[0] / h2
        diag[-1] += right[-1] / h2
    offdiag = a_flux[1:-1] / h2
    for arr in (a_flux, diag, offdiag):
        arr.setflags(write=False)
    return EllipticOperator(grid=grid, a_flux=a_flux, diag=diag, offdiag=offdiag)


@dataclass(frozen=True)
class SemigroupCache:
    """Eigenpairs of ``A``: ``eigvals`` descending, ``eigvecs[:, k]`` weight-orthonormal."""

    grid: SpatialGrid
    eigvals: np.ndarray = field(repr=False)
    eigvecs: np.ndarray = field(repr=False)
    operator: EllipticOperator | None = field(default=None, repr=False)

    @classmethod
    def from_operator(cls, op: EllipticOperator) -> "SemigroupCache":
        # uniform weights: the matrix is symmetric in the plain inner product too
        vals, vecs = eigh_tridiagonal(op.diag, op.offdiag)
        order = np.argsort(vals)[::-1]
        vals = np.minimum(vals[order], 0.0)
        vecs = vecs[:, order] / np.sqrt(op.grid.weights)[:, None]
        # sign convention: first non-negligible entry of each mode is positive
        first = np.argmax(np.abs(vecs) > 1e-8 * np.abs(vecs).max(axis=0), axis=0)
        vecs = vecs * np.sign(vecs[first, np.arange(vecs.shape[1])])
        vals.setflags(write=False)
        vecs.setflags(write=False)
        return cls(grid=op.grid, eigvals=vals, eigvecs=vecs, operator=op)

    @classmethod
    def zero(cls, grid: SpatialGrid) -> "SemigroupCache":
        """Cache of the zero operator (``S(t) = I``)."""
        vals = np.zeros(grid.n)
        vecs = np.eye(grid.n) / np.sqrt(grid.weights)[:, None]
        vals.setflags(write=False)
        vecs.setflags(write=False)
        return cls(grid=grid, eigvals=vals, eigvecs=vecs, operator=None)

    def coords(self, u):
        """Spectral coordinates ``<u, v_k>_w`` along the last axis."""
        return (np.asarray(u, dtype=float) * self.grid.weights) @ self.eigvecs

    def synth(self, c):
        return np.asarray(c) @ self.eigvecs.T

    def apply_operator(self, u):
        if self.operator is None:
            return self.synth(self.eigvals * self.coords(u))
        return self.operator.apply(u)

    def semigroup_matrix(self, t: float) -> np.ndarray:
        """Dense matrix of ``S(t)`` acting on column vectors."""
        if t < 0:
            raise InvalidParameter("semigroup time must be nonnegative")
        if t == 0:
            return np.eye(self.grid.n)
        return (self.eigvecs * np.exp(self.eigvals * t)) @ (self.eigvecs.T * self.grid.weights)


def apply_semigroup(cache: SemigroupCache, t: float, u):
    """``S(t) u = sum_k exp(lambda_k t) <u, v_k>_w v_k``; ``S(0)`` is the identity."""
    if not t >= 0:
        raise InvalidParameter(f"semigroup time must be nonnegative, got {t}")
    u = np.asarray(u, dtype=float)
    if t == 0:
        return u.copy()
    return cache.synth(np.exp(cache.eigvals * t) * cache.coords(u))


def apply_resolvent(cache: SemigroupCache, lam: float, u):
    """``R(lam, A) u`` for ``lam > 0`` (the spectrum of ``A`` is nonpositive)."""
    if not lam > 0:
        raise InvalidParameter(f"resolvent parameter must be positive, got {lam}")
    return cache.synth(cache.coords(u) / (lam - cache.eigvals))


def spectral_radius(cache: SemigroupCache) -> float:
    """Largest eigenvalue magnitude, ``|lambda_n|``."""
    return float(np.abs(cache.eigvals).max())
