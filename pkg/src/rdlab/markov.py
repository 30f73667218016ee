"""Monte Carlo estimates of the transition semigroup and tests of its structure.

``T(t) f(x)`` is estimated as the mean of ``f(u(t))`` over paths started at
``x``.  The tests compare estimators that should agree if the solution is a
(strong) Markov process with a Feller semigroup: direct vs two-stage
(Chapman-Kolmogorov), uninterrupted vs restarted paths (Markov property at
``s`` or at a hitting time), and nearby initial states under common random
numbers (continuity in the initial state).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from .errors import InvalidParameter
from .simulate import Ensemble, Model, _step_count, run_ensemble

__all__ = [
    "TransitionEstimate",
    "estimate_transition",
    "chapman_kolmogorov_test",
    "restart_markov_test",
    "feller_test",
    "compact_containment",
    "BatteryRow",
    "write_markov_csv",
]

STAGE_ONE = (1, 0)
STAGE_TWO = (2, 0)


@dataclass
class TransitionEstimate:
    x: np.ndarray = field(repr=False)
    t: float
    value: float
    std_error: float
    paths: int
    f_abs_max: float = 0.0
    f_min: float = 0.0


def _endpoints(model, x, T, dt, paths, seed, stop_level=math.inf, stage=(), workers=None, horizon=None):
    steps = _step_count(T, dt)
    ens = run_ensemble(model, x, T, dt, stop_level, paths, seed, stride=steps, stage=stage,
                       workers=workers, horizon=horizon)
    return ens.states[:, -1], ens


def _mean_se(vals):
    vals = np.asarray(vals, dtype=float)
    se = float(np.std(vals, ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else 0.0
    return float(vals.mean()), se


def estimate_transition(model: Model, x, f: Callable, t: float, paths: int, seed: int, dt: float = 1e-3,
                        stop_level: float = math.inf, workers=None) -> TransitionEstimate:
    """Mean and standard error of ``f(u(t))`` over ``paths`` paths from ``x``."""
    x = np.asarray(x, dtype=float)
    if t < 0:
        raise InvalidParameter("t must be nonnegative")
    if t == 0:
        v = float(np.ravel(f(x))[0])
        return TransitionEstimate(x=x, t=0.0, value=v, std_error=0.0, paths=paths, f_abs_max=abs(v), f_min=v)
    end, _ = _endpoints(model, x, t, dt, paths, seed, stop_level, workers=workers)
    vals = f(end)
    mean, se = _mean_se(vals)
    return TransitionEstimate(x=x, t=float(t), value=mean, std_error=se, paths=paths,
                              f_abs_max=float(np.abs(vals).max()), f_min=float(vals.min()))


@dataclass
class CKReport:
    direct: float
    direct_se: float
    composed: float
    composed_se: float
    z: float

    def passed(self, threshold: float = 3.0) -> bool:
        return self.z <= threshold


def chapman_kolmogorov_test(model: Model, x, f: Callable, s: float, t: float, paths: int, seed: int,
                            dt: float = 1e-3, workers=None) -> CKReport:
    """Compare ``T(s+t) f(x)`` with the two-stage estimate of ``T(s) T(t) f(x)``.

    The composed estimator restarts every stage-one endpoint with a fresh
    continuation stream ``(path, 2, 0)``; both estimators use disjoint streams
    and are independent.
    """
    if s < 0 or t <= 0:
        raise InvalidParameter("need s >= 0 and t > 0")
    x = np.asarray(x, dtype=float)
    end, _ = _endpoints(model, x, s + t, dt, paths, seed, workers=workers)
    d_mean, d_se = _mean_se(f(end))
    if s > 0:
        mid, _ = _endpoints(model, x, s, dt, paths, seed, stage=STAGE_ONE, workers=workers)
    else:
        mid = np.broadcast_to(x, (paths, x.size)).copy()
    end2, _ = _endpoints(model, mid, t, dt, paths, seed, stage=STAGE_TWO, workers=workers)
    c_mean, c_se = _mean_se(f(end2))
    pooled = math.hypot(d_se, c_se)
    diff = abs(d_mean - c_mean)
    z = diff / pooled if pooled > 0 else (0.0 if diff <= 1e-12 * (1 + abs(d_mean)) else math.inf)
    return CKReport(direct=d_mean, direct_se=d_se, composed=c_mean, composed_se=c_se, z=z)


@dataclass
class RestartReport:
    two_sample_stat: float
    p_value: float
    alpha: float
    restarted_early: int = 0

    @property
    def passed(self) -> bool:
        return self.p_value >= self.alpha


def _ks(a, b):
    scale = 1.0 + max(np.abs(a).max(), np.abs(b).max())
    if np.ptp(a) <= 1e-12 * scale and np.ptp(b) <= 1e-12 * scale and abs(a.mean() - b.mean()) <= 1e-12 * scale:
        return 0.0, 1.0  # both samples are the same point mass
    res = stats.ks_2samp(a, b)
    return float(res.statistic), float(res.pvalue)


def restart_markov_test(model: Model, x, f: Callable, s: float, t: float, paths: int, seed: int,
                        dt: float = 1e-3, restart_level: float | None = None, perturb: float = 0.0,
                        alpha: float = 0.01, tests: int = 1, workers=None) -> RestartReport:
    """Two-sample KS test of ``f(u(s+t))`` against restarted paths.

    Sample A follows uninterrupted paths.  Sample B takes each path's state
    at ``sigma = s``, or at ``sigma = tau ^ s`` with ``tau`` the hitting time
    of the sup-norm ball of radius ``restart_level``, and runs it for the
    remaining ``s + t - sigma`` with fresh noise.  ``perturb`` shifts the
    restart state (a control that must fail).  The pass level is ``alpha``
    divided by ``tests`` (Bonferroni).
    """
    if s <= 0 or t <= 0:
        raise InvalidParameter("need s, t > 0")
    x = np.asarray(x, dtype=float)
    total = _step_count(s + t, dt)
    end_a, _ = _endpoints(model, x, s + t, dt, paths, seed, workers=workers)
    level = math.inf if restart_level is None else float(restart_level)
    mid, ens_mid = _endpoints(model, x, s, dt, paths, seed, stop_level=level, workers=workers)
    sigma = np.where(ens_mid.stop_index >= 0, ens_mid.stop_index, _step_count(s, dt))
    remaining = total - sigma
    end_b, _ = _endpoints(model, mid + perturb, s + t, dt, paths, seed, stage=STAGE_TWO, workers=workers,
                          horizon=remaining)
    a, b = f(end_a), f(end_b)
    stat, p = _ks(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
    return RestartReport(two_sample_stat=stat, p_value=p, alpha=alpha / max(1, tests),
                         restarted_early=int(np.sum(ens_mid.stop_index >= 0)))


@dataclass
class FellerReport:
    deltas: list[float]
    gaps: list[float]
    paired_se: list[float]
    base_se: float
    nonincreasing: bool
    final_within_noise: bool

    @property
    def passed(self) -> bool:
        return self.nonincreasing and self.final_within_noise


def feller_test(model: Model, x, deltas: Sequence[float], f: Callable, t: float, paths: int, seed: int,
                dt: float = 1e-3, direction=None, workers=None) -> FellerReport:
    """Common-random-number gaps ``|T(t)f(x + delta e) - T(t)f(x)|``.

    The gap sequence counts as nonincreasing when each gap exceeds its
    predecessor by at most three paired standard errors.  The last gap must
    lie within three standard errors of the base estimate ``T(t)f(x)``, i.e.
    below the Monte Carlo resolution of the semigroup itself.
    """
    x = np.asarray(x, dtype=float)
    e = np.ones_like(x) if direction is None else np.asarray(direction, dtype=float)
    deltas = [float(d) for d in deltas]
    if any(d < 0 for d in deltas) or any(b > a for a, b in zip(deltas, deltas[1:])):
        raise InvalidParameter("perturbations must be nonnegative and nonincreasing")
    end0, _ = _endpoints(model, x, t, dt, paths, seed, workers=workers)
    f0 = np.asarray(f(end0), dtype=float)
    _, base_se = _mean_se(f0)
    gaps, pse = [], []
    for d in deltas:
        if d == 0:
            gaps.append(0.0)
            pse.append(0.0)
            continue
        end, _ = _endpoints(model, x + d * e, t, dt, paths, seed, workers=workers)
        diff = np.asarray(f(end), dtype=float) - f0
        m, se = _mean_se(diff)
        gaps.append(abs(m))
        pse.append(se)
    mono = all(g1 <= g0 + 3.0 * max(s0, s1) for g0, g1, s0, s1 in zip(gaps, gaps[1:], pse, pse[1:]))
    final = gaps[-1] <= 3.0 * base_se if gaps else True
    return FellerReport(deltas=deltas, gaps=gaps, paired_se=pse, base_se=base_se, nonincreasing=mono,
                        final_within_noise=final)


@dataclass
class ContainmentReport:
    R: float
    quantile: float
    T: float


def compact_containment(ens: Ensemble, T: float, quantile: float = 0.99) -> ContainmentReport:
    """Quantile over paths of ``sup_{t <= T} |u(t)|_inf`` on the recorded grid."""
    if ens.times[-1] < T - 1e-12:
        raise InvalidParameter("ensemble horizon is shorter than T")
    i = ens.index_at(T)
    sup = np.abs(ens.states[:, : i + 1]).max(axis=(1, 2))
    return ContainmentReport(R=float(np.quantile(sup, quantile)), quantile=quantile, T=float(T))


@dataclass
class BatteryRow:
    test: str
    model_id: str
    s: float
    t: float
    stat: float
    threshold: float
    passed: bool


def write_markov_csv(rows: Sequence[BatteryRow], path) -> None:
    """CSV ``test,model_id,s,t,stat,threshold,pass``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["test", "model_id", "s", "t", "stat", "threshold", "pass"])
        for r in rows:
            w.writerow([r.test, r.model_id, repr(float(r.s)), repr(float(r.t)), repr(float(r.stat)),
                        repr(float(r.threshold)), int(r.passed)])
