"""Ready-made models used by the batteries, the CLI and the test-suite."""
from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .coefficients import PolynomialDrift, make_drift, make_noise
from .elliptic import SemigroupCache, assemble_operator, build_grid, diffusion_coefficient
from .simulate import Model


def build_cache(n: int, length: float = 1.0, bc="dirichlet", diffusion="constant",
                diffusion_params: Sequence[float] = (1.0,)) -> SemigroupCache:
    grid = build_grid(n, length, bc)
    a = diffusion if callable(diffusion) else diffusion_coefficient(diffusion, diffusion_params, length)
    return SemigroupCache.from_operator(assemble_operator(grid, a))


def ou_model(n: int = 8, length: float = 1.0, bc="dirichlet", diffusion: float = 0.01,
             q: Sequence[float] | None = None) -> Model:
    """Linear model ``du = A u dt + sum_k q_k v_k dw_k`` on the eigenbasis ``v_k`` of ``A``.

    Each spectral coordinate is then an independent scalar Ornstein-Uhlenbeck
    process with rate ``lambda_k`` and intensity ``q_k``.
    """
    cache = build_cache(n, length, bc, "constant", (diffusion,))
    if q is None:
        q = 1.0 / np.arange(1, n + 1)
    q = np.asarray(q, dtype=float)
    G = make_noise("additive", cache.grid, len(q), cache=cache, basis="eigen", amplitudes=q)
    return Model(cache, PolynomialDrift.zero(cache.grid), G)


def reaction_diffusion_model(n: int = 16, length: float = 1.0, bc="dirichlet", diffusion: float = 0.1,
                             drift: Sequence[float] = (0.0, 1.0, 0.0, -1.0), noise: str = "holder_sqrt",
                             K: int = 8, c: float = 1.0, decay: float = 0.5, cap: float = math.inf) -> Model:
    """``du = [(a u')' + f(u)] dt + sum_k c_k e_k sqrt(|u|) dw_k`` with ``f(r) = r - r^3`` by default."""
    cache = build_cache(n, length, bc, "constant", (diffusion,))
    F = make_drift(cache.grid, drift)
    G = make_noise(noise, cache.grid, K, c=c, decay=decay, cap=cap)
    return Model(cache, F, G)


def dissipative_model(n: int = 16, length: float = 1.0, diffusion: float = 0.1, K: int = 8,
                      c: float = 1.0, decay: float = 0.5) -> Model:
    """Cubic damping ``f(r) = -r^3`` with additive sine-mode noise."""
    cache = build_cache(n, length, "dirichlet", "constant", (diffusion,))
    F = make_drift(cache.grid, (0.0, 0.0, 0.0, -1.0))
    G = make_noise("additive", cache.grid, K, c=c, decay=decay)
    return Model(cache, F, G)


def sine_state(grid, amplitude: float = 1.0, mode: int = 1) -> np.ndarray:
    return amplitude * np.sin(mode * np.pi * grid.nodes / grid.length)


def initial_state(grid, kind: str = "sine", amplitude: float = 1.0) -> np.ndarray:
    kind = kind.strip().lower()
    if kind == "sine":
        return sine_state(grid, amplitude)
    if kind == "constant":
        return np.full(grid.n, amplitude)
    if kind == "zero":
        return np.zeros(grid.n)
    raise ValueError(f"unknown initial state: {kind!r}")
