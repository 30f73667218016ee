"""Generator of the equation on cylindrical test functions and Monte Carlo
martingale-problem tests.

For ``f(u) = phi(<u, x_1>, ..., <u, x_m>)`` the generator is

    Lf(u) = sum_k d_k phi * (<u, A x_k> + <F(u), x_k>)
            + 1/2 sum_{k,l} [G(u)* x_k, G(u)* x_l] d_kl phi

and ``M^f(t) = f(u(t)) - int_0^t Lf(u(s)) ds`` should be a martingale.  The
conditional-mean-zero property is tested through unconditional means of
increments weighted by bounded functions of the past.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from .coefficients import eval_drift
from .elliptic import SpatialGrid
from .errors import InsufficientSample, InvalidParameter
from .simulate import Ensemble, Model, Trajectory

__all__ = [
    "CylTestFunction",
    "WeightFunction",
    "MartingaleStatistic",
    "generator_apply",
    "mf_path",
    "generator_values",
    "martingale_test",
    "quadratic_variation_test",
    "bonferroni_threshold",
    "write_battery_csv",
]

_CHUNK = 512


@dataclass(frozen=True)
class CylTestFunction:
    """``phi(<u, x_1>_w, ..., <u, x_m>_w)`` with explicit derivatives.

    ``phi``, ``grad`` and ``hess`` act on arrays whose last axis has length
    ``m`` and return shapes ``(...)``, ``(..., m)`` and ``(..., m, m)``.
    """

    grid: SpatialGrid
    functionals: np.ndarray = field(repr=False)
    phi: Callable = field(repr=False)
    grad: Callable = field(repr=False)
    hess: Callable = field(repr=False)
    kind: str = "general"
    label: str = ""

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.functionals, dtype=float))
        if X.shape[1] != self.grid.n:
            raise InvalidParameter("functionals must be grid vectors")
        object.__setattr__(self, "functionals", X)

    @property
    def m(self) -> int:
        return self.functionals.shape[0]

    @classmethod
    def linear(cls, grid, xstar, label="linear"):
        return cls(grid, xstar, phi=lambda y: y[..., 0], grad=lambda y: np.ones_like(y),
                   hess=lambda y: np.zeros(y.shape + (1,)), kind="linear", label=label)

    @classmethod
    def square(cls, grid, xstar, label="square"):
        return cls(grid, xstar, phi=lambda y: y[..., 0] ** 2, grad=lambda y: 2.0 * y,
                   hess=lambda y: np.full(y.shape + (1,), 2.0), kind="square", label=label)

    @classmethod
    def trigonometric(cls, grid, functionals, rng: np.random.Generator, terms: int = 3, label="general"):
        """Random bounded ``phi(y) = sum_j c_j sin(omega_j . y + theta_j)``."""
        X = np.atleast_2d(functionals)
        m = X.shape[0]
        c = rng.uniform(0.5, 1.0, terms)
        om = rng.normal(0.0, 1.0, (terms, m))
        th = rng.uniform(0.0, 2 * np.pi, terms)

        def arg(y):
            return y @ om.T + th

        def phi(y):
            return np.sin(arg(y)) @ c

        def grad(y):
            return (np.cos(arg(y)) * c) @ om

        def hess(y):
            s = -np.sin(arg(y)) * c
            return np.einsum("...j,jk,jl->...kl", s, om, om)

        return cls(grid, X, phi=phi, grad=grad, hess=hess, kind="general", label=label)

    def project(self, u):
        return (np.asarray(u, dtype=float) * self.grid.weights) @ self.functionals.T

    def __call__(self, u):
        return self.phi(self.project(u))

    def derivative_mismatch(self, points, eps: float = 1e-5) -> float:
        """Largest relative gap between supplied and central-difference derivatives."""
        y = np.atleast_2d(np.asarray(points, dtype=float))
        m = self.m
        worst = 0.0
        g = self.grad(y)
        H = self.hess(y)
        for k in range(m):
            e = np.zeros(m)
            e[k] = eps
            fd = (self.phi(y + e) - self.phi(y - e)) / (2 * eps)
            worst = max(worst, _rel(fd, g[..., k]))
            fdg = (self.grad(y + e) - self.grad(y - e)) / (2 * eps)
            worst = max(worst, _rel(fdg, H[..., :, k]))
        return worst


def _rel(a, b):
    return float(np.max(np.abs(a - b) / np.maximum(1.0, np.abs(b))))


@dataclass(frozen=True)
class WeightFunction:
    """Bounded continuous weight ``h(u)`` from a fixed library."""

    kind: str
    ystar: np.ndarray | None = None
    grid: SpatialGrid | None = None

    def __post_init__(self):
        if self.kind not in ("one", "tanh", "clip"):
            raise InvalidParameter(f"unknown weight function: {self.kind!r}")
        if self.kind != "one" and (self.ystar is None or self.grid is None):
            raise InvalidParameter("tanh/clip weights need a functional and a grid")

    @property
    def bound(self) -> float:
        return 1.0

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        if self.kind == "one":
            return np.ones(u.shape[:-1])
        y = (u * self.grid.weights) @ np.asarray(self.ystar, dtype=float)
        return np.tanh(y) if self.kind == "tanh" else np.clip(y, -1.0, 1.0)


@dataclass
class MartingaleStatistic:
    estimate: float
    std_error: float
    paths: int
    window: tuple[float, float]
    weight_spec: list = field(repr=False)
    quad_bias: float = 0.0
    threshold: float = 3.0
    label: str = ""
    kind: str = ""

    @property
    def z_score(self) -> float:
        if self.std_error > 0:
            return abs(self.estimate) / self.std_error
        return 0.0 if self.estimate == 0 else math.inf

    @property
    def passed(self) -> bool:
        return abs(self.estimate) <= self.threshold * self.std_error + 2.0 * abs(self.quad_bias) + 1e-13


# ---------------------------------------------------------------------------
# generator


def _gstar(model: Model, f: CylTestFunction, u):
    """``G(u)* x_k`` for every functional: shape ``u.shape[:-1] + (m, K)``."""
    G = model.G
    rho = G.shape(u) * model.grid.weights
    return (rho[..., None, :] * f.functionals) @ G.spatial_nodes


def generator_apply(model: Model, f: CylTestFunction, u):
    """``Lf`` at one state or a batch of states (last axis = nodes)."""
    u = np.asarray(u, dtype=float)
    w = model.grid.weights
    X = f.functionals
    AX = model.cache.apply_operator(X)
    y = f.project(u)
    drift = (u * w) @ AX.T
    if not model.F.is_zero:
        drift = drift + (eval_drift(model.F, u) * w) @ X.T
    out = np.sum(f.grad(y) * drift, axis=-1)
    if f.kind != "linear" and model.K and not model.G.is_zero:
        B = _gstar(model, f, u)
        Q = B @ np.swapaxes(B, -1, -2)
        out = out + 0.5 * np.sum(Q * f.hess(y), axis=(-2, -1))
    return out


# ---------------------------------------------------------------------------
# M^f along paths


def _as_ensemble(traj) -> Ensemble:
    if isinstance(traj, Ensemble):
        return traj
    if isinstance(traj, Trajectory):
        si = -1 if traj.stop_index is None else traj.stop_index
        return Ensemble(times=traj.times, states=traj.states[None], stop_index=np.array([si]),
                        blown=np.array([traj.blown]), dt=traj.dt, stride=traj.stride, seed=traj.seed,
                        stop_level=traj.stop_level, path_indices=np.array([traj.path_index]))
    raise TypeError("expected a Trajectory or an Ensemble")


def _live_intervals(ens: Ensemble) -> np.ndarray:
    """Mask ``(paths, nrec-1)``: interval ``r`` starts before the stopping step."""
    start = np.arange(len(ens.times) - 1) * ens.stride
    si = ens.stop_index[:, None]
    return (si < 0) | (start[None, :] < si)


def _lf_values(model, f, states):
    out = np.empty(states.shape[:2])
    for lo in range(0, states.shape[0], _CHUNK):
        out[lo:lo + _CHUNK] = generator_apply(model, f, states[lo:lo + _CHUNK])
    return out


def mf_path(model: Model, f: CylTestFunction, traj):
    """``M^f`` on the recorded grid, trapezoid in time and frozen after stopping.

    Returns an array of shape ``(nrec,)`` for a trajectory and
    ``(paths, nrec)`` for an ensemble.
    """
    single = isinstance(traj, Trajectory)
    ens = _as_ensemble(traj)
    h = ens.dt * ens.stride
    lf = _lf_values(model, f, ens.states)
    panels = 0.5 * h * (lf[:, 1:] + lf[:, :-1]) * _live_intervals(ens)
    integral = np.concatenate([np.zeros((ens.paths, 1)), np.cumsum(panels, axis=1)], axis=1)
    M = f(ens.states) - integral
    return M[0] if single else M


def _weights(ens: Ensemble, weight_spec) -> np.ndarray:
    H = np.ones(ens.paths)
    for sj, hj in weight_spec:
        H = H * hj(ens.at(sj))
    return H


def bonferroni_threshold(tests: int, base_z: float = 3.0) -> float:
    """Two-sided z threshold keeping the family-wise level of one ``base_z`` test."""
    alpha = 2.0 * stats.norm.sf(base_z)
    return float(stats.norm.isf(alpha / (2.0 * max(1, tests))))


def generator_values(model: Model, f: CylTestFunction, ens: Ensemble) -> np.ndarray:
    """``Lf`` at every recorded state, shape ``(paths, nrec)``; reusable across windows."""
    return _lf_values(model, f, ens.states)


def martingale_test(model: Model, f: CylTestFunction, ens: Ensemble, s: float, t: float,
                    weight_spec: Sequence = (), threshold: float = 3.0, min_paths: int = 30,
                    lf: np.ndarray | None = None) -> MartingaleStatistic:
    """Weighted mean of ``M^f(t ^ tau) - M^f(s ^ tau)`` with weights ``prod h_j(u(s_j))``.

    ``lf`` may carry :func:`generator_values` for the same model, test
    function and ensemble, to avoid recomputing it for every window.
    """
    if not s < t:
        raise InvalidParameter("need s < t")
    for sj, _ in weight_spec:
        if sj > s + 1e-12:
            raise InvalidParameter("weight times must not exceed s")
    live = int(np.sum(~ens.stopped_before(s)))
    if live < min_paths:
        raise InsufficientSample(f"only {live} paths unstopped at s={s}; need {min_paths}")
    i_s, i_t = ens.index_at(s), ens.index_at(t)
    h = ens.dt * ens.stride
    states = ens.states[:, i_s:i_t + 1]
    lf = _lf_values(model, f, states) if lf is None else lf[:, i_s:i_t + 1]
    mask = _live_intervals(ens)[:, i_s:i_t]
    panels = 0.5 * h * (lf[:, 1:] + lf[:, :-1]) * mask
    integral = panels.sum(axis=1)
    incr = f(states[:, -1]) - f(states[:, 0]) - integral
    H = _weights(ens, weight_spec)
    vals = incr * H
    npanel = i_t - i_s
    bias = 0.0
    if npanel >= 2 and npanel % 2 == 0:
        coarse = (h * (lf[:, 0:-2:2] + lf[:, 2::2]) * (mask[:, 0::2] & mask[:, 1::2])).sum(axis=1)
        bias = float(np.mean((coarse - integral) / 3.0 * H))
    P = ens.paths
    se = float(np.std(vals, ddof=1) / math.sqrt(P)) if P > 1 else 0.0
    return MartingaleStatistic(estimate=float(np.mean(vals)), std_error=se, paths=P, window=(s, t),
                               weight_spec=list(weight_spec), quad_bias=abs(bias), threshold=threshold,
                               label=f.label, kind=f.kind)


@dataclass
class QVReport:
    realized: float
    predicted: float
    rel_err: float


def quadratic_variation_test(model: Model, xstar, ens: Ensemble, t: float) -> QVReport:
    """Realized squared martingale increments of ``<u, x*>`` against ``int |G(u)* x*|^2``."""
    if ens.stride != 1:
        raise InvalidParameter("quadratic variation needs every integrator step recorded")
    f = CylTestFunction.linear(model.grid, xstar)
    i_t = ens.index_at(t)
    states = ens.states[:, : i_t + 1]
    h = ens.dt
    mask = _live_intervals(ens)[:, :i_t]
    realized = np.zeros(ens.paths)
    predicted = np.zeros(ens.paths)
    for lo in range(0, ens.paths, _CHUNK):
        st = states[lo:lo + _CHUNK]
        y = f.project(st)[..., 0]
        drift = generator_apply(model, f, st[:, :-1])
        mart = (np.diff(y, axis=1) - h * drift) * mask[lo:lo + _CHUNK]
        realized[lo:lo + _CHUNK] = np.sum(mart**2, axis=1)
        if model.K and not model.G.is_zero:
            q = np.sum(_gstar(model, f, st)[..., 0, :] ** 2, axis=-1)
        else:
            q = np.zeros(st.shape[:2])
        predicted[lo:lo + _CHUNK] = np.sum(0.5 * h * (q[:, 1:] + q[:, :-1]) * mask[lo:lo + _CHUNK], axis=1)
    r, p = float(realized.mean()), float(predicted.mean())
    rel = abs(r - p) / p if p > 0 else abs(r)
    return QVReport(realized=r, predicted=p, rel_err=rel)


def write_battery_csv(stats_list: Sequence[MartingaleStatistic], path) -> None:
    """CSV ``test_id,f_kind,s,t,estimate,std_error,z_score,pass``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["test_id", "f_kind", "s", "t", "estimate", "std_error", "z_score", "pass"])
        for i, st in enumerate(stats_list):
            w.writerow([st.label or i, st.kind, repr(st.window[0]), repr(st.window[1]), repr(st.estimate),
                        repr(st.std_error), repr(st.z_score), int(st.passed)])
