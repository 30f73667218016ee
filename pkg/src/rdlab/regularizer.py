"""Smooth approximations of ``|r|`` built from an Osgood modulus, and coupled-path experiments.

For a modulus ``h`` with ``int_0+ h^-2 = inf`` the levels ``1 = a_0 > a_1 > ...``
satisfy ``int_{a_n}^{a_{n-1}} h^-2 = n``.  On each band a density ``psi_n``
with ``0 <= psi_n <= 2 / (n h^2)`` and unit mass is placed, and
``phi_n(r) = int_0^|r| int_0^s psi_n`` is a C2 even function with
``|r| - a_{n-1} <= phi_n(r) <= |r|`` vanishing on ``(-a_n, a_n)``.

Inside a band we use the normalized coordinate
``m(r) = (1/n) int_{a_n}^r h^-2``, which runs from 0 to 1, and set
``psi_n(r) = C * bump(m(r)) * 2 / (n h(r)^2)``.  ``bump`` is a C2 smoothstep
ramp with width ``EPS`` at each end, so ``int psi_n = 2 C (1 - EPS) = 1`` in
closed form and ``C = 2/3 <= 1`` keeps ``psi_n`` below the cap.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, optimize

from .coefficients import validate_osgood
from .errors import InvalidParameter, LevelConstructionFailure, OsgoodFailure
from .simulate import Model, _step_count, run_ensemble

__all__ = [
    "adaptive_simpson",
    "RegularizerFamily",
    "build_levels",
    "eval_phi",
    "level_table",
    "UniquenessReport",
    "coupled_uniqueness_experiment",
    "write_levels_csv",
    "write_uniqueness_csv",
]

EPS = 0.25
NORMALIZER = 1.0 / (2.0 * (1.0 - EPS))
PANELS = 64
_GL_X, _GL_W = np.polynomial.legendre.leggauss(12)


def adaptive_simpson(f: Callable[[float], float], a: float, b: float, tol: float = 1e-9,
                     max_depth: int = 40) -> float:
    """Adaptive Simpson quadrature of a scalar function on ``[a, b]``."""

    def simpson(fa, fm, fb, a, b):
        return (b - a) / 6.0 * (fa + 4.0 * fm + fb)

    def recurse(a, b, fa, fm, fb, whole, tol, depth):
        m = 0.5 * (a + b)
        lm, rm = 0.5 * (a + m), 0.5 * (m + b)
        flm, frm = f(lm), f(rm)
        left = simpson(fa, flm, fm, a, m)
        right = simpson(fm, frm, fb, m, b)
        if depth <= 0 or abs(left + right - whole) <= 15.0 * tol:
            return left + right + (left + right - whole) / 15.0
        return (recurse(a, m, fa, flm, fm, left, tol / 2, depth - 1)
                + recurse(m, b, fm, frm, fb, right, tol / 2, depth - 1))

    if a == b:
        return 0.0
    fa, fb, fm = f(a), f(b), f(0.5 * (a + b))
    return recurse(a, b, fa, fm, fb, simpson(fa, fm, fb, a, b), tol, max_depth)


# ---------------------------------------------------------------------------
# smoothstep bump and its antiderivative


def _step(x):
    x = np.clip(x, 0.0, 1.0)
    return x**3 * (10.0 - 15.0 * x + 6.0 * x * x)


def _step_int(x):
    # int_0^x of the smoothstep, for x in [0, 1]
    x = np.clip(x, 0.0, 1.0)
    return x**4 * (2.5 - 3.0 * x + x * x)


def bump(m):
    """C2 plateau on ``[0, 1]``: rises on ``[0, EPS]``, falls on ``[1 - EPS, 1]``."""
    m = np.asarray(m, dtype=float)
    out = np.minimum(_step(m / EPS), _step((1.0 - m) / EPS))
    return np.where((m <= 0) | (m >= 1), 0.0, out)


def bump_integral(m):
    """``int_0^m bump``; equals ``1 - EPS`` at ``m = 1``."""
    m = np.clip(np.asarray(m, dtype=float), 0.0, 1.0)
    rise = EPS * _step_int(m / EPS)
    mid = EPS / 2.0 + (m - EPS)
    fall = (1.0 - EPS) - EPS * _step_int((1.0 - m) / EPS)
    return np.where(m <= EPS, rise, np.where(m <= 1.0 - EPS, mid, fall))


# ---------------------------------------------------------------------------
# family


def _vectorized(h_fn):
    def h(r):
        r = np.asarray(r, dtype=float)
        try:
            out = np.asarray(h_fn(r), dtype=float)
            if out.shape != r.shape:
                raise ValueError
        except (TypeError, ValueError):
            out = np.vectorize(lambda s: float(h_fn(s)), otypes=[float])(r)
        return out

    return h


@dataclass(frozen=True)
class _Level:
    n: int
    lo: float
    hi: float
    nodes: np.ndarray = field(repr=False)  # panel edges, geometric
    m_nodes: np.ndarray = field(repr=False)  # m at edges
    phi_nodes: np.ndarray = field(repr=False)  # phi at edges


@dataclass(frozen=True)
class RegularizerFamily:
    """Immutable level table; evaluate with :func:`eval_phi`."""

    h_raw: Callable = field(repr=False)
    a_seq: np.ndarray
    levels: tuple = field(repr=False)
    normalizer: float = NORMALIZER

    @property
    def n_max(self) -> int:
        return len(self.levels)

    def h_fn(self, r):
        """Modulus with the floor ``h(r) >= sqrt(r)`` enforced."""
        r = np.abs(np.asarray(r, dtype=float))
        return np.maximum(_vectorized(self.h_raw)(r), np.sqrt(r))

    def _level(self, n) -> _Level:
        if not (1 <= n <= self.n_max) or int(n) != n:
            raise InvalidParameter(f"level must be in 1..{self.n_max}, got {n}")
        return self.levels[int(n) - 1]

    def _inv_sq(self, r, n):
        return 1.0 / (n * self.h_fn(r) ** 2)

    def _m(self, lev: _Level, r):
        """``m(r)`` for ``r`` inside the band, from the panel table plus Gauss-Legendre."""
        r = np.asarray(r, dtype=float)
        k = np.clip(np.searchsorted(lev.nodes, r, side="right") - 1, 0, len(lev.nodes) - 2)
        left = lev.nodes[k]
        half = 0.5 * (r - left)
        pts = left[..., None] + half[..., None] * (_GL_X + 1.0)
        inner = half * np.sum(_GL_W * self._inv_sq(pts, lev.n), axis=-1)
        return lev.m_nodes[k] + inner, k

    def psi(self, n, r):
        lev = self._level(n)
        r = np.abs(np.asarray(r, dtype=float))
        inside = (r > lev.lo) & (r < lev.hi)
        rr = np.where(inside, r, 0.5 * (lev.lo + lev.hi))
        m, _ = self._m(lev, rr)
        val = self.normalizer * bump(m) * 2.0 * self._inv_sq(rr, n)
        return np.where(inside, val, 0.0)

    def Psi(self, n, r):
        """``int_0^|r| psi_n``."""
        lev = self._level(n)
        r = np.abs(np.asarray(r, dtype=float))
        rr = np.clip(r, lev.lo, lev.hi)
        m, _ = self._m(lev, rr)
        val = 2.0 * self.normalizer * bump_integral(m)
        return np.where(r <= lev.lo, 0.0, np.where(r >= lev.hi, 1.0, val))

    def phi(self, n, r):
        lev = self._level(n)
        r = np.abs(np.asarray(r, dtype=float))
        rr = np.clip(r, lev.lo, lev.hi)
        k = np.clip(np.searchsorted(lev.nodes, rr, side="right") - 1, 0, len(lev.nodes) - 2)
        left = lev.nodes[k]
        half = 0.5 * (rr - left)
        pts = left[..., None] + half[..., None] * (_GL_X + 1.0)
        inner = half * np.sum(_GL_W * self.Psi(n, pts), axis=-1)
        val = lev.phi_nodes[k] + inner
        tail = lev.phi_nodes[-1] + (r - lev.hi)
        return np.where(r <= lev.lo, 0.0, np.where(r >= lev.hi, tail, val))


def _band_integral(h, lo, hi):
    # int_lo^hi h^-2 in the variable log r, split per decade
    def integrand(s):
        r = math.exp(s)
        return r / float(h(r)) ** 2

    edges = np.linspace(math.log(lo), math.log(hi), max(2, int(math.ceil(math.log10(hi / lo))) + 1))
    return sum(integrate.quad(integrand, a, b, epsabs=0.0, epsrel=1e-13, limit=200)[0]
               for a, b in zip(edges[:-1], edges[1:]))


def build_levels(h_fn: Callable, n_max: int, r_floor: float = 1e-300, check_osgood: bool = True,
                 tol: float = 1e-9) -> RegularizerFamily:
    """Construct ``a_1..a_{n_max}`` and cached ``phi_n`` tables for the modulus ``h_fn``.

    Raises ``OsgoodFailure`` if ``h_fn`` is not classified Diverges and
    ``LevelConstructionFailure`` if some level cannot be bracketed above
    ``r_floor``.
    """
    if n_max < 1:
        raise InvalidParameter("n_max must be at least 1")
    if check_osgood:
        rep = validate_osgood(h_fn)
        if rep.classification != "Diverges":
            raise OsgoodFailure(f"modulus classified {rep.classification}")
    h_vec = _vectorized(h_fn)

    def h(r):
        return max(float(h_vec(np.asarray(r))), math.sqrt(r))

    a = [1.0]
    for n in range(1, n_max + 1):
        hi = a[-1]
        total = _band_integral(h, r_floor, hi)
        if not total > n:
            raise LevelConstructionFailure(f"level {n}: int_{r_floor:g}^{hi:g} h^-2 = {total:g} < {n}")

        def gap(s, hi=hi, n=n):
            return _band_integral(h, math.exp(s), hi) - n

        s = optimize.brentq(gap, math.log(r_floor), math.log(hi), xtol=1e-14, maxiter=500)
        lo = math.exp(s)
        if not (0.0 < lo < hi):
            raise LevelConstructionFailure(f"level {n}: root {lo!r} outside (0, {hi!r})")
        a.append(lo)

    fam = RegularizerFamily(h_raw=h_fn, a_seq=np.array(a), levels=())
    levels = []
    for n in range(1, n_max + 1):
        lo, hi = a[n], a[n - 1]
        nodes = np.geomspace(lo, hi, PANELS + 1)
        nodes[0], nodes[-1] = lo, hi
        m_nodes = np.zeros_like(nodes)
        for k in range(PANELS):
            m_nodes[k + 1] = m_nodes[k] + _band_integral(h, nodes[k], nodes[k + 1]) / n
        m_nodes /= m_nodes[-1]  # removes the residual of the root-finder
        lev = _Level(n=n, lo=lo, hi=hi, nodes=nodes, m_nodes=m_nodes, phi_nodes=np.zeros_like(nodes))
        tmp = RegularizerFamily(h_raw=h_fn, a_seq=fam.a_seq, levels=tuple(levels) + (lev,))
        phi_nodes = np.zeros_like(nodes)
        for k in range(PANELS):
            phi_nodes[k + 1] = phi_nodes[k] + adaptive_simpson(
                lambda r: float(tmp.Psi(n, r)), nodes[k], nodes[k + 1], tol=tol * (nodes[k + 1] - nodes[k]))
        levels.append(_Level(n=n, lo=lo, hi=hi, nodes=nodes, m_nodes=m_nodes, phi_nodes=phi_nodes))
    return RegularizerFamily(h_raw=h_fn, a_seq=np.array(a), levels=tuple(levels))


def eval_phi(fam: RegularizerFamily, n: int, r):
    """``(phi_n(r), phi_n'(r), phi_n''(r))``; arrays in, arrays out."""
    r = np.asarray(r, dtype=float)
    value = fam.phi(n, r)
    d1 = np.sign(r) * fam.Psi(n, r)
    d2 = fam.psi(n, r)
    if r.ndim == 0:
        return float(value), float(d1), float(d2)
    return value, d1, d2


def level_table(fam: RegularizerFamily):
    """Rows ``(n, a_n, int_check, phi_sup_gap)``.

    ``int_check`` is ``int_{a_n}^{a_{n-1}} h^-2 - n`` by independent quadrature;
    ``phi_sup_gap`` is ``sup (|r| - phi_n(r))``, attained for ``|r| >= a_{n-1}``.
    """
    rows = []
    for lev in fam.levels:
        check = _band_integral(lambda r: float(fam.h_fn(r)), lev.lo, lev.hi) - lev.n
        gap = lev.hi - float(fam.phi(lev.n, lev.hi))
        rows.append((lev.n, lev.lo, check, gap))
    return rows


def write_levels_csv(fam: RegularizerFamily, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", "a_n", "int_check", "phi_sup_gap"])
        for n, a, c, g in level_table(fam):
            w.writerow([n, repr(float(a)), repr(float(c)), repr(float(g))])


# ---------------------------------------------------------------------------
# coupled paths


@dataclass
class UniquenessRow:
    kind: str  # "delta" or "mesh"
    delta: float
    dt: float
    paths: int
    mean_sup_diff: float
    std_error: float


@dataclass
class UniquenessReport:
    rows: list[UniquenessRow]

    def series(self, kind):
        return [r for r in self.rows if r.kind == kind]

    @staticmethod
    def _nonincreasing(rows):
        v = [r.mean_sup_diff for r in rows]
        return all(b <= a for a, b in zip(v, v[1:]))

    @property
    def delta_nonincreasing(self) -> bool:
        return self._nonincreasing([r for r in self.series("delta") if r.delta > 0])

    @property
    def mesh_nonincreasing(self) -> bool:
        return self._nonincreasing(self.series("mesh"))


def _sup_diff(a, b, stride_a=1, stride_b=1):
    return np.abs(a[:, ::stride_a] - b[:, ::stride_b]).max(axis=(1, 2))


def coupled_uniqueness_experiment(model: Model, u0, deltas: Sequence[float], T: float, dt: float, paths: int,
                                  seed: int, *, halvings: int = 3, perturbation=None,
                                  stop_level: float = math.inf, workers=None, block: int = 256,
                                  check_osgood: bool = True) -> UniquenessReport:
    """Sup-norm gaps between coupled solutions driven by identical Wiener increments.

    For each ``delta`` the paths from ``u0`` and ``u0 + delta * perturbation``
    share every increment; the row reports the mean over paths of
    ``sup_{t <= T} |u1 - u2|_inf`` on the step grid.  The mesh rows compare
    steps ``dt 2^-l`` and ``dt 2^-(l+1)`` for ``l < halvings``, all driven by
    the same Brownian path sampled at the finest step, on the common grid of
    multiples of ``dt``.
    """
    if check_osgood and not model.G.is_zero:
        rep = validate_osgood(lambda r: float(model.G.h(r)))
        if rep.classification != "Diverges":
            raise OsgoodFailure(f"noise modulus classified {rep.classification}")
    u0 = np.asarray(u0, dtype=float)
    e = np.ones_like(u0) if perturbation is None else np.asarray(perturbation, dtype=float)
    _step_count(T, dt)
    rows = []
    blocks = [(lo, min(paths, lo + block)) for lo in range(0, paths, block)]

    def run(x, h, refine, stride, lo, hi):
        ens = run_ensemble(model, x, T, h, stop_level, hi - lo, seed, stride=stride, path_offset=lo,
                           refine=refine, workers=workers)
        return ens.states

    deltas = [float(d) for d in deltas]
    sup = {d: np.empty(paths) for d in deltas}
    for lo, hi in blocks:
        base = run(u0, dt, 1, 1, lo, hi)
        for d in deltas:
            other = base if d == 0 else run(u0 + d * e, dt, 1, 1, lo, hi)
            sup[d][lo:hi] = _sup_diff(base, other)
    for d in deltas:
        rows.append(UniquenessRow("delta", d, dt, paths, float(sup[d].mean()), _se(sup[d])))

    if halvings > 0:
        fine = 2**halvings
        gaps = np.empty((halvings, paths))
        for lo, hi in blocks:
            prev = run(u0, dt, fine, 1, lo, hi)
            for lvl in range(1, halvings + 1):
                f = 2**lvl
                cur = run(u0, dt / f, fine // f, f, lo, hi)
                gaps[lvl - 1, lo:hi] = _sup_diff(prev, cur)
                prev = cur
        for lvl in range(halvings):
            rows.append(UniquenessRow("mesh", math.nan, dt / 2**lvl, paths, float(gaps[lvl].mean()), _se(gaps[lvl])))
    return UniquenessReport(rows)


def _se(v):
    return float(np.std(v, ddof=1) / math.sqrt(v.size)) if v.size > 1 else 0.0


def write_uniqueness_csv(report: UniquenessReport, path) -> None:
    """CSV ``delta,dt,paths,mean_sup_diff,std_error``; mesh rows carry ``delta = nan``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["delta", "dt", "paths", "mean_sup_diff", "std_error"])
        for r in report.rows:
            w.writerow([repr(r.delta), repr(r.dt), r.paths, repr(r.mean_sup_diff), repr(r.std_error)])
