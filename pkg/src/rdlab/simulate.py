"""Truncated cylindrical noise and the exponential-Euler mild scheme.

One step maps ``u`` to ``S(dt) (u + dt F(u) + sum_k dW_k g_k(., u))``.  Noise
for path ``p`` comes from a counter-based Philox stream keyed by
``(seed, p)`` (or ``(seed, p, stage, child)`` for restarted continuations), so
any subset of paths can be regenerated bit-exactly, in any order, by any
number of workers.
"""
from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import special

from . import kernels
from .coefficients import NoiseFamily, PolynomialDrift, eval_drift, eval_noise_columns
from .elliptic import SemigroupCache, apply_semigroup
from .errors import InvalidParameter

__all__ = [
    "Model",
    "WienerIncrements",
    "Trajectory",
    "Ensemble",
    "stream",
    "sample_increments",
    "coarsen",
    "step_mild",
    "simulate",
    "run_ensemble",
    "apply_factorization",
    "worker_count",
    "write_ensemble_csv",
    "write_observables_csv",
]

CHUNK = 256
INIT_STAGE = 2**31 - 1


@dataclass(frozen=True)
class Model:
    """The triple ``(A, F, G)`` with ``A`` given through its spectral cache."""

    cache: SemigroupCache
    F: PolynomialDrift
    G: NoiseFamily
    _mats: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.F.grid.n != self.cache.grid.n or self.G.grid.n != self.cache.grid.n:
            raise InvalidParameter("model components live on different grids")

    @property
    def grid(self):
        return self.cache.grid

    @property
    def n(self) -> int:
        return self.cache.grid.n

    @property
    def K(self) -> int:
        return self.G.K

    def semigroup_matrix(self, dt: float) -> np.ndarray:
        key = float(dt)
        if key not in self._mats:
            self._mats[key] = self.cache.semigroup_matrix(key)
        return self._mats[key]

    def replace(self, **changes) -> "Model":
        parts = {"cache": self.cache, "F": self.F, "G": self.G}
        parts.update(changes)
        return Model(**parts)


# ---------------------------------------------------------------------------
# noise


def stream(seed: int, key: Sequence[int]) -> np.random.Generator:
    """Philox generator for the stream ``key`` under master ``seed``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(key=ss.generate_state(2, np.uint64)))


@dataclass(frozen=True)
class WienerIncrements:
    dt: float
    steps: int
    K: int
    dW: np.ndarray = field(repr=False)
    seed: int = 0
    path_index: int = 0


def sample_increments(seed: int, path_index: int, steps: int, K: int, dt: float,
                      stage: Sequence[int] = ()) -> WienerIncrements:
    """``steps x K`` table of independent ``N(0, dt)`` draws for one path."""
    if not dt > 0:
        raise InvalidParameter(f"dt must be positive, got {dt}")
    if steps < 0 or K < 0:
        raise InvalidParameter("steps and K must be nonnegative")
    rng = stream(seed, (path_index, *stage))
    dW = math.sqrt(dt) * rng.standard_normal((steps, K))
    return WienerIncrements(dt=float(dt), steps=int(steps), K=int(K), dW=dW, seed=int(seed),
                            path_index=int(path_index))


def coarsen(dW: np.ndarray, factor: int) -> np.ndarray:
    """Sum consecutive blocks of ``factor`` increments along the step axis."""
    dW = np.asarray(dW)
    steps = dW.shape[-2]
    if steps % factor:
        raise InvalidParameter("step count is not divisible by the coarsening factor")
    shape = dW.shape[:-2] + (steps // factor, factor, dW.shape[-1])
    return dW.reshape(shape).sum(axis=-2)


# ---------------------------------------------------------------------------
# trajectories


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray = field(repr=False)
    seed: int
    path_index: int
    stop_level: float
    stop_index: int | None
    blown: bool = False
    dt: float = 0.0
    stride: int = 1

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


@dataclass
class Ensemble:
    """States of many paths on a common time grid.

    ``states[p, r]`` is path ``p`` at ``times[r] = r * stride * dt``.
    ``stop_index`` counts integrator steps (``-1`` when never stopped).
    """

    times: np.ndarray
    states: np.ndarray = field(repr=False)
    stop_index: np.ndarray = field(repr=False)
    blown: np.ndarray = field(repr=False)
    dt: float
    stride: int
    seed: int
    stop_level: float
    path_indices: np.ndarray = field(repr=False)

    @property
    def paths(self) -> int:
        return self.states.shape[0]

    def __len__(self):
        return self.paths

    def trajectory(self, p: int) -> Trajectory:
        si = int(self.stop_index[p])
        return Trajectory(times=self.times, states=self.states[p], seed=self.seed,
                          path_index=int(self.path_indices[p]), stop_level=self.stop_level,
                          stop_index=None if si < 0 else si, blown=bool(self.blown[p]),
                          dt=self.dt, stride=self.stride)

    def index_at(self, t: float) -> int:
        """Record index of time ``t`` (must lie on the recorded grid)."""
        r = t / (self.dt * self.stride)
        ri = int(round(r))
        if abs(r - ri) > 1e-6 or not 0 <= ri < len(self.times):
            raise InvalidParameter(f"time {t} is not on the recorded grid")
        return ri

    def at(self, t: float) -> np.ndarray:
        return self.states[:, self.index_at(t)]

    def stopped_before(self, t: float) -> np.ndarray:
        """Paths stopped strictly before time ``t``."""
        si = self.stop_index
        return (si >= 0) & (si * self.dt < t - 1e-12)


def step_mild(cache: SemigroupCache, F: PolynomialDrift, G: NoiseFamily, u, dt: float, dW) -> np.ndarray:
    """One exponential-Euler step; a non-finite result raises ``FloatingPointError``."""
    if not dt > 0:
        raise InvalidParameter(f"dt must be positive, got {dt}")
    u = np.asarray(u, dtype=float)
    with np.errstate(over="ignore", invalid="ignore"):
        v = u + dt * eval_drift(F, u)
        if G.K:
            v = v + eval_noise_columns(G, u) @ np.asarray(dW, dtype=float)
        out = apply_semigroup(cache, dt, v)
    if not np.all(np.isfinite(out)):
        raise FloatingPointError("non-finite state after a mild step")
    return out


def _step_count(T: float, dt: float) -> int:
    if not T > 0:
        raise InvalidParameter(f"horizon must be positive, got {T}")
    if not dt > 0:
        raise InvalidParameter(f"dt must be positive, got {dt}")
    steps = int(round(T / dt))
    if steps < 1 or abs(steps * dt - T) > 1e-9 * max(1.0, T):
        raise InvalidParameter(f"dt={dt} does not divide T={T}")
    return steps


def _run_batch(model: Model, U0, dW, dt, stop_level, stride, horizon=None):
    return kernels.mild_paths(model.semigroup_matrix(dt), model.F.coeffs, model.G.spatial_nodes,
                              model.G.shape, U0, dW, dt, stop_level, stride, horizon)


def simulate(model: Model, u0, T: float, dt: float, stop_level: float = math.inf, seed: int = 0,
             path_index: int = 0, increments: np.ndarray | None = None, stride: int = 1) -> Trajectory:
    """Single stopped trajectory; ``increments`` overrides the path's own noise."""
    steps = _step_count(T, dt)
    u0 = np.asarray(u0, dtype=float)
    if increments is None:
        increments = sample_increments(seed, path_index, steps, model.K, dt).dW
    increments = np.asarray(increments, dtype=float).reshape(steps, model.K)
    states, si, blown = _run_batch(model, u0[None], increments[None], dt, stop_level, stride)
    times = dt * stride * np.arange(states.shape[1])
    stop = None if si[0] < 0 else int(si[0])
    if blown[0] and stop == 0:
        times, st = times[:1], states[0, :1]
    else:
        st = states[0]
    return Trajectory(times=times, states=st, seed=seed, path_index=path_index, stop_level=stop_level,
                      stop_index=stop, blown=bool(blown[0]), dt=float(dt), stride=int(stride))


def worker_count(workers: int | None = None) -> int:
    if workers is None:
        workers = int(os.environ.get("RDLAB_WORKERS", "1"))
    return max(1, int(workers))


def _initial_states(u0, paths, path_indices, seed, n):
    if callable(u0):
        return np.stack([np.asarray(u0(stream(seed, (int(p), INIT_STAGE))), dtype=float) for p in path_indices])
    u0 = np.asarray(u0, dtype=float)
    if u0.ndim == 1:
        return np.broadcast_to(u0, (paths, n)).copy()
    if u0.shape != (paths, n):
        raise InvalidParameter(f"initial states must have shape ({paths}, {n})")
    return u0.copy()


def run_ensemble(model: Model, u0, T: float, dt: float, stop_level: float = math.inf, paths: int = 1,
                 seed: int = 0, *, stride: int = 1, workers: int | None = None, stage: Sequence[int] = (),
                 path_offset: int = 0, refine: int = 1, horizon=None) -> Ensemble:
    """Simulate ``paths`` independent trajectories with path indices ``offset..offset+paths-1``.

    ``u0`` is a state, a ``(paths, n)`` array, or a sampler ``rng -> state``.
    ``refine`` draws noise on a ``dt/refine`` grid and sums it, so runs at
    different resolutions share Brownian paths.  ``horizon`` caps the number
    of steps per path (states are held afterwards).  Work is cut into fixed
    chunks of path indices; the result does not depend on ``workers``.
    """
    if paths < 1:
        raise InvalidParameter("paths must be at least 1")
    steps = _step_count(T, dt)
    if steps % stride:
        raise InvalidParameter("stride must divide the number of steps")
    n, K = model.n, model.K
    pidx = np.arange(path_offset, path_offset + paths)
    U0 = _initial_states(u0, paths, pidx, seed, n)
    if horizon is not None:
        horizon = np.broadcast_to(np.asarray(horizon, dtype=np.int64), (paths,))
    nrec = steps // stride + 1
    states = np.empty((paths, nrec, n))
    stop_index = np.empty(paths, dtype=np.int64)
    blown = np.empty(paths, dtype=bool)
    model.semigroup_matrix(dt)  # warm the cache before threads share it

    def work(lo):
        hi = min(lo + CHUNK, paths)
        fine = dt / refine
        dW = np.empty((hi - lo, steps, K))
        for b, p in enumerate(pidx[lo:hi]):
            inc = sample_increments(seed, int(p), steps * refine, K, fine, stage=stage).dW
            dW[b] = coarsen(inc, refine) if refine > 1 else inc
        hz = None if horizon is None else horizon[lo:hi]
        s, si, bl = _run_batch(model, U0[lo:hi], dW, dt, stop_level, stride, hz)
        states[lo:hi], stop_index[lo:hi], blown[lo:hi] = s, si, bl

    starts = range(0, paths, CHUNK)
    nw = worker_count(workers)
    if nw == 1:
        for lo in starts:
            work(lo)
    else:
        with ThreadPoolExecutor(max_workers=nw) as ex:
            list(ex.map(work, starts))
    times = dt * stride * np.arange(nrec)
    return Ensemble(times=times, states=states, stop_index=stop_index, blown=blown, dt=float(dt),
                    stride=int(stride), seed=int(seed), stop_level=float(stop_level), path_indices=pidx)


# ---------------------------------------------------------------------------
# factorization operator


def _kernel_antiderivative(lam: np.ndarray, x: np.ndarray, gamma: float) -> np.ndarray:
    """``int_0^x tau^(gamma-1) exp(lam tau) dtau`` for ``lam <= 0``, ``x >= 0``."""
    lam = np.minimum(lam, 0.0)
    X, L = np.meshgrid(x, lam, indexing="ij")
    y = -L * X
    small = y < 1e-8
    out = np.empty_like(X)
    with np.errstate(divide="ignore", invalid="ignore"):
        if gamma == 1.0:
            big = np.where(small, 1.0, -np.expm1(-y) / np.where(small, 1.0, -L))
        else:
            big = special.gammainc(gamma, y) * special.gamma(gamma) * np.where(small, 1.0, -L) ** (-gamma)
    series = X**gamma * (1.0 / gamma + L * X / (gamma + 1.0))
    out[:] = np.where(small, series, big)
    return out


def apply_factorization(cache: SemigroupCache, gamma: float, f_path, dt: float) -> np.ndarray:
    """``[R_gamma f](t_i) = int_0^t_i (t_i - s)^(gamma-1) S(t_i - s) f(s) ds``.

    ``f`` is taken piecewise constant (left values) on the time grid and the
    kernel is integrated exactly over each cell, which keeps the
    ``(t-s)^(gamma-1)`` singularity out of the quadrature.
    """
    if not 0 < gamma <= 1:
        raise InvalidParameter(f"gamma must lie in (0, 1], got {gamma}")
    if not dt > 0:
        raise InvalidParameter("dt must be positive")
    f_path = np.asarray(f_path, dtype=float)
    N1 = f_path.shape[0]
    G = _kernel_antiderivative(cache.eigvals, dt * np.arange(N1), float(gamma))
    W = np.zeros_like(G)
    W[1:] = np.diff(G, axis=0)
    C = cache.coords(f_path)
    return cache.synth(kernels.causal_conv(W, C))


# ---------------------------------------------------------------------------
# export


def write_ensemble_csv(ens: Ensemble, path) -> None:
    """CSV ``path,step,time,node_0..node_{n-1},stopped``; one row per recorded state."""
    n = ens.states.shape[2]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["path", "step", "time"] + [f"node_{i}" for i in range(n)] + ["stopped"])
        for p in range(ens.paths):
            si = ens.stop_index[p]
            for r, t in enumerate(ens.times):
                step = r * ens.stride
                stopped = int(si >= 0 and step >= si)
                w.writerow([int(ens.path_indices[p]), step, repr(float(t))]
                           + [repr(float(x)) for x in ens.states[p, r]] + [stopped])


def write_observables_csv(rows, path) -> None:
    """CSV ``path,time,observable,value`` from an iterable of 4-tuples."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["path", "time", "observable", "value"])
        for p, t, name, val in rows:
            w.writerow([int(p), repr(float(t)), name, repr(float(val))])
