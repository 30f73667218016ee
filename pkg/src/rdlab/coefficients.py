"""Reaction and noise coefficients of the stochastic reaction-diffusion model.

The drift is a pointwise polynomial ``f(x, r) = sum_j b_j(x) r^j`` and the noise
is a family of separable coefficients ``g_k(x, r) = e_k(x) * rho(r)`` driven by
independent scalar Brownian motions.  Each family ships the constants it claims
(growth ``alpha_k, beta_k``, moduli ``sigma_k``) and :func:`validate_noise_family`
checks those claims on a sampling lattice.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

from .elliptic import BC, SemigroupCache, SpatialGrid
from .errors import InvalidModulus, InvalidParameter

__all__ = [
    "PolynomialDrift",
    "Shape",
    "NoiseFamily",
    "eval_drift",
    "coercivity_radius",
    "dissipativity_constants",
    "check_dissipativity",
    "eval_noise_columns",
    "noise_hs_norm",
    "noise_growth_bound",
    "validate_osgood",
    "OsgoodReport",
    "validate_noise_family",
    "Certificate",
    "make_noise",
    "make_drift",
]


# ---------------------------------------------------------------------------
# drift


@dataclass(frozen=True)
class PolynomialDrift:
    """``f(x, r) = sum_j b_j(x) r^j`` sampled at the grid nodes.

    ``coeffs[j]`` holds ``b_j`` on the nodes.  With ``strict=True`` (the
    default) the leading coefficient must have odd degree and stay below
    ``-eps_lead``; linear test models (zero drift, constant forcing) are built
    with ``strict=False``.
    """

    grid: SpatialGrid
    coeffs: np.ndarray = field(repr=False)
    eps_lead: float = 0.0
    strict: bool = True

    def __post_init__(self):
        c = np.atleast_2d(np.asarray(self.coeffs, dtype=float))
        if c.shape[1] != self.grid.n:
            raise InvalidParameter("drift coefficients must be sampled on every grid node")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)
        if self.strict:
            if self.degree % 2 == 0:
                raise InvalidParameter(f"drift degree must be odd, got {self.degree}")
            if self.eps_lead <= 0 or c[-1].max() > -self.eps_lead:
                raise InvalidParameter("leading drift coefficient must be bounded above by -eps_lead < 0")

    @property
    def degree(self) -> int:
        return self.coeffs.shape[0] - 1

    @classmethod
    def from_constants(cls, grid: SpatialGrid, b: Sequence[float], strict: bool = True) -> "PolynomialDrift":
        b = np.asarray(b, dtype=float)
        coeffs = np.repeat(b[:, None], grid.n, axis=1)
        eps = -float(b[-1]) if b[-1] < 0 else 0.0
        return cls(grid=grid, coeffs=coeffs, eps_lead=eps, strict=strict)

    @classmethod
    def from_functions(cls, grid: SpatialGrid, fns: Sequence[Callable], strict: bool = True) -> "PolynomialDrift":
        coeffs = np.stack([np.broadcast_to(np.asarray(fn(grid.nodes), dtype=float), grid.nodes.shape) for fn in fns])
        eps = -float(coeffs[-1].max()) if coeffs[-1].max() < 0 else 0.0
        return cls(grid=grid, coeffs=coeffs, eps_lead=eps, strict=strict)

    @classmethod
    def zero(cls, grid: SpatialGrid) -> "PolynomialDrift":
        return cls(grid=grid, coeffs=np.zeros((1, grid.n)), strict=False)

    def shifted(self, c: float) -> "PolynomialDrift":
        """The drift ``f + c`` (used for corrupted-generator controls)."""
        coeffs = np.array(self.coeffs)
        coeffs[0] += c
        return PolynomialDrift(grid=self.grid, coeffs=coeffs, eps_lead=self.eps_lead, strict=False)

    def scalar(self, r, node: int):
        """``f(x_node, r)`` for an array of scalar arguments."""
        r = np.asarray(r, dtype=float)
        out = np.zeros_like(r)
        for b in self.coeffs[::-1, node]:
            out = out * r + b
        return out

    @property
    def is_zero(self) -> bool:
        return not np.any(self.coeffs)


def eval_drift(F: PolynomialDrift, u):
    """Pointwise Horner evaluation of ``f(x_i, u_i)`` along the last axis."""
    u = np.asarray(u, dtype=float)
    out = np.broadcast_to(F.coeffs[-1], u.shape).copy()
    for b in F.coeffs[-2::-1]:
        out *= u
        out += b
    return out


def coercivity_radius(F: PolynomialDrift) -> float:
    """Radius beyond which ``sign f(x, r) = -sign r`` at every node."""
    if F.eps_lead <= 0:
        raise InvalidParameter("coercivity needs a negative leading coefficient")
    lower = np.abs(F.coeffs[:-1]).max(axis=1).sum()
    return max(1.0, float(lower / F.eps_lead))


def _scalar_pairing(F: PolynomialDrift, s, t):
    """``sign(s) (f(x, s + t) - f(x, t))`` maximized over the grid nodes."""
    worst = None
    for node in range(F.grid.n):
        if node and np.array_equal(F.coeffs[:, node], F.coeffs[:, node - 1]):
            continue
        val = np.sign(s) * (F.scalar(s + t, node) - F.scalar(t, node))
        worst = val if worst is None else np.maximum(worst, val)
    return worst


def dissipativity_constants(F: PolynomialDrift, b: float, radius: float = 20.0, points: int = 801,
                            margin: float = 1.05) -> float:
    """Smallest ``a`` (times ``margin``) making the scalar inequality hold on a grid.

    Grid search over pairs ``(s, t)`` in ``[-radius, radius]^2`` of
    ``sign(s)(f(s+t) - f(t)) <= a (1+|t|)^d - b |s|^d``; the sup-norm pairing
    evaluates ``f`` at a single node, so the scalar inequality dominates it.
    """
    if b <= 0:
        raise InvalidParameter("b must be positive")
    d = F.degree
    s = np.linspace(-radius, radius, points)
    S, T = np.meshgrid(s, s, indexing="ij")
    lhs = _scalar_pairing(F, S, T)
    need = (lhs + b * np.abs(S) ** d) / (1.0 + np.abs(T)) ** d
    return float(margin * max(need.max(), 0.0) + 1e-12)


@dataclass
class DissipativityReport:
    samples: int
    violations: int
    worst_margin: float


def check_dissipativity(F: PolynomialDrift, a_const: float, b_const: float, samples: int = 10_000,
                        rng_seed: int = 0) -> DissipativityReport:
    """Count random state pairs violating ``<F(u+v) - F(v), u*> <= a(1+|v|)^d - b|u|^d``.

    ``u*`` is the point evaluation at the lowest-index maximizer of ``|u|``,
    signed by ``u`` there; margins are ``rhs - lhs`` (negative means violation).
    """
    if a_const <= 0 or b_const <= 0:
        raise InvalidParameter("dissipativity constants must be positive")
    rng = np.random.default_rng(rng_seed)
    n, d = F.grid.n, F.degree
    scale_u = 10.0 ** rng.uniform(-2, 1.5, size=(samples, 1))
    scale_v = 10.0 ** rng.uniform(-2, 1.5, size=(samples, 1))
    u = scale_u * rng.standard_normal((samples, n))
    v = scale_v * rng.standard_normal((samples, n))
    x0 = np.argmax(np.abs(u), axis=1)  # argmax returns the first maximizer
    rows = np.arange(samples)
    diff = eval_drift(F, u + v) - eval_drift(F, v)
    lhs = np.sign(u[rows, x0]) * diff[rows, x0]
    unorm = np.abs(u).max(axis=1)
    vnorm = np.abs(v).max(axis=1)
    rhs = a_const * (1.0 + vnorm) ** d - b_const * unorm**d
    margin = rhs - lhs
    # relative slack for round-off in large cubes
    tol = 1e-12 * (np.abs(lhs) + np.abs(rhs) + 1.0)
    return DissipativityReport(samples=samples, violations=int(np.sum(margin < -tol)),
                               worst_margin=float(margin.min()))


# ---------------------------------------------------------------------------
# noise

SHAPE_CODES = {"const": 0, "linear": 1, "sqrt": 2, "table": 3}


@dataclass(frozen=True)
class Shape:
    """Scalar nonlinearity ``rho`` of a separable noise coefficient.

    ``cap`` clips the argument to ``[-cap, cap]`` first, giving the bounded
    approximants of a growing coefficient.  ``custom`` shapes carry a Python
    callable and a modulus and are evaluated on the numpy path only.
    """

    kind: str
    cap: float = math.inf
    table_r: np.ndarray | None = None
    table_g: np.ndarray | None = None
    fn: Callable | None = None
    modulus_fn: Callable | None = None
    growth_consts: tuple | None = None

    def __post_init__(self):
        if self.kind not in SHAPE_CODES and self.kind != "custom":
            raise InvalidParameter(f"unknown noise shape: {self.kind!r}")
        if self.kind == "table":
            r = np.asarray(self.table_r, dtype=float)
            g = np.asarray(self.table_g, dtype=float)
            if r.ndim != 1 or r.shape != g.shape or r.size < 2 or np.any(np.diff(r) <= 0):
                raise InvalidParameter("table shape needs increasing abscissae with matching values")
            object.__setattr__(self, "table_r", r)
            object.__setattr__(self, "table_g", g)
        if self.kind == "custom" and (self.fn is None or self.modulus_fn is None):
            raise InvalidParameter("custom shape needs fn and modulus_fn")
        if not self.cap > 0:
            raise InvalidParameter("cap must be positive")

    @property
    def code(self) -> int:
        return SHAPE_CODES.get(self.kind, -1)

    @property
    def jittable(self) -> bool:
        return self.kind != "custom"

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        if math.isfinite(self.cap):
            r = np.clip(r, -self.cap, self.cap)
        if self.kind == "const":
            return np.ones_like(r)
        if self.kind == "linear":
            return r.copy()
        if self.kind == "sqrt":
            return np.sqrt(np.abs(r))
        if self.kind == "table":
            return np.interp(r, self.table_r, self.table_g)
        return np.asarray(self.fn(r), dtype=float) * np.ones_like(r)

    def modulus(self, t):
        """A continuity modulus ``omega`` with ``|rho(a) - rho(b)| <= omega(|a - b|)``."""
        t = np.asarray(t, dtype=float)
        if self.kind == "const":
            return np.zeros_like(t)
        if self.kind == "linear":
            return t.copy()
        if self.kind == "sqrt":
            return np.sqrt(t)
        if self.kind == "table":
            slope = np.abs(np.diff(self.table_g) / np.diff(self.table_r)).max()
            return slope * t
        return np.asarray(self.modulus_fn(t), dtype=float) * np.ones_like(t)

    def growth(self) -> tuple[float, float]:
        """Constants ``(c0, c1)`` with ``|rho(r)| <= c0 + c1 |r|``."""
        if self.kind == "const":
            return 1.0, 0.0
        if self.kind == "linear":
            return 0.0, 1.0
        if self.kind == "sqrt":
            return 0.5, 0.5
        if self.kind == "table":
            return float(np.abs(self.table_g).max()), 0.0
        if self.growth_consts is not None:
            return tuple(float(c) for c in self.growth_consts)
        raise InvalidParameter("custom shapes must declare growth constants explicitly")


@dataclass(frozen=True)
class NoiseFamily:
    """Truncated family ``g_k(x, r) = spatial_k(x) * shape(r)``, ``k = 1..K``.

    ``alpha``, ``beta`` and ``sigma_scale`` are the family's claimed growth and
    continuity constants (``sigma_k(t) = sigma_scale_k * shape.modulus(t)``);
    they are checked, never trusted, by :func:`validate_noise_family`.
    ``tail_bound`` bounds ``sum_{k>K} (alpha_k^2 + beta_k^2)`` of the discarded
    modes.
    """

    grid: SpatialGrid
    K: int
    spatial: Callable = field(repr=False)
    shape: Shape = field(default_factory=lambda: Shape("const"))
    alpha: np.ndarray = field(default=None, repr=False)
    beta: np.ndarray = field(default=None, repr=False)
    sigma_scale: np.ndarray = field(default=None, repr=False)
    tail_bound: float = 0.0
    p: float = 2.0
    name: str = "custom"
    spatial_nodes: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.K < 0:
            raise InvalidParameter("K must be nonnegative")
        nodes = self.spatial_at(self.grid.nodes)
        nodes.setflags(write=False)
        object.__setattr__(self, "spatial_nodes", nodes)
        if self.alpha is None or self.beta is None or self.sigma_scale is None:
            sup = self.spatial_sup()
            if self.alpha is None or self.beta is None:
                c0, c1 = self.shape.growth()
                if self.alpha is None:
                    object.__setattr__(self, "alpha", c0 * sup)
                if self.beta is None:
                    object.__setattr__(self, "beta", c1 * sup)
            if self.sigma_scale is None:
                object.__setattr__(self, "sigma_scale", sup)
        for name in ("alpha", "beta", "sigma_scale"):
            arr = np.asarray(getattr(self, name), dtype=float).reshape(self.K)
            object.__setattr__(self, name, arr)

    def spatial_at(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if self.K == 0:
            return np.zeros((x.size, 0))
        return np.asarray(self.spatial(x), dtype=float).reshape(x.size, self.K)

    def spatial_sup(self, points: int = 2049) -> np.ndarray:
        xs = np.linspace(0.0, self.grid.length, points)
        xs = np.union1d(xs, self.grid.nodes)
        return np.abs(self.spatial_at(xs)).max(axis=0) if self.K else np.zeros(0)

    def g(self, x, r) -> np.ndarray:
        """``g_k(x, r)`` for broadcastable ``x``, ``r``; trailing axis is ``k``."""
        x, r = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(r, dtype=float))
        sp = self.spatial_at(x.ravel()).reshape(x.shape + (self.K,))
        return sp * self.shape(r)[..., None]

    def sigma(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return self.sigma_scale * self.shape.modulus(t)[..., None]

    def h(self, t):
        """Summed modulus ``h(t) = sum_k sigma_k(t)``."""
        return np.sum(self.sigma(t), axis=-1)

    def with_shape(self, shape: Shape) -> "NoiseFamily":
        return NoiseFamily(grid=self.grid, K=self.K, spatial=self.spatial, shape=shape,
                           tail_bound=self.tail_bound, p=self.p, name=self.name)

    @property
    def is_zero(self) -> bool:
        return self.K == 0 or not np.any(self.spatial_nodes)


def eval_noise_columns(G: NoiseFamily, u) -> np.ndarray:
    """Matrix with entries ``g_k(x_i, u_i)``; shape ``u.shape + (K,)``."""
    u = np.asarray(u, dtype=float)
    return G.spatial_nodes * G.shape(u)[..., None]


def noise_hs_norm(G: NoiseFamily, u) -> float:
    """Square-function norm ``(sum_i w_i (sum_k g_k(x_i, u_i)^2)^(p/2))^(1/p)``."""
    cols = eval_noise_columns(G, u)
    sq = np.sqrt(np.sum(cols**2, axis=-1))
    return np.sum(G.grid.weights * sq**G.p, axis=-1) ** (1.0 / G.p)


def noise_growth_bound(G: NoiseFamily, u) -> float:
    """Linear-growth bound ``|O|^(1/p) (|alpha|_2 + |beta|_2 |u|_inf)`` for the norm above."""
    u = np.asarray(u, dtype=float)
    vol = G.grid.weights.sum()
    return vol ** (1.0 / G.p) * (np.linalg.norm(G.alpha) + np.linalg.norm(G.beta) * np.abs(u).max(axis=-1))


# ---------------------------------------------------------------------------
# certificates


@dataclass
class OsgoodReport:
    classification: str
    table: list[tuple[float, float]]

    @property
    def diverges(self) -> bool:
        return self.classification == "Diverges"


def _inverse_square_integral(h_fn: Callable, lo: float, hi: float) -> float:
    """``int_lo^hi h^-2(r) dr`` computed in the variable ``log r``."""

    def integrand(s):
        r = math.exp(s)
        return r / float(h_fn(r)) ** 2

    total = 0.0
    edges = np.linspace(math.log(lo), math.log(hi), max(2, int(math.ceil(math.log10(hi / lo))) + 1))
    for a, b in zip(edges[:-1], edges[1:]):
        val, _ = integrate.quad(integrand, a, b, epsabs=0.0, epsrel=1e-11, limit=200)
        total += val
    return total


def validate_osgood(h_fn: Callable, r_min: float = 1e-12, tol: float = 1e-3) -> OsgoodReport:
    """Classify ``int_0+ h^-2`` from partial integrals ``I(rho) = int_rho^1 h^-2``.

    ``rho`` runs over ``1e-2, 1e-4, ...`` down to ``r_min``.  Increments of
    ``I`` are measured relative to ``I(1e-2)`` so that rescaling ``h`` does not
    change the verdict.  The last four decades decide: every increment at least
    ``tol`` means Diverges, every increment below ``tol`` means Converges.
    """
    probe = np.logspace(math.log10(r_min), 0.0, 121)
    vals = np.array([float(h_fn(r)) for r in probe])
    if not np.all(np.isfinite(vals)) or np.any(vals <= 0):
        raise InvalidModulus("modulus must be positive and finite on (0, 1]")
    rhos = 10.0 ** -np.arange(2, int(round(-math.log10(r_min))) + 1, 2)
    table = []
    prev_rho, acc = 1.0, 0.0
    for rho in rhos:
        acc += _inverse_square_integral(h_fn, rho, prev_rho)
        table.append((float(rho), acc))
        prev_rho = rho
    ref = table[0][1]
    incs = np.diff([v for _, v in table]) / ref
    tail = incs[-2:]
    if np.all(tail >= tol):
        verdict = "Diverges"
    elif np.all(tail < tol):
        verdict = "Converges"
    else:
        verdict = "Inconclusive"
    return OsgoodReport(classification=verdict, table=table)


@dataclass
class CheckResult:
    name: str
    passed: bool
    worst_margin: float = 0.0
    worst_sample: dict | None = None
    detail: str = ""


@dataclass
class Certificate:
    checks: list[CheckResult]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name) -> CheckResult:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def failures(self) -> list[str]:
        return [c.name for c in self.checks if not c.passed]


def validate_noise_family(G: NoiseFamily, nx: int = 33, nr: int = 81, R: float = 5.0,
                          check_osgood: bool = True) -> Certificate:
    """Check every claimed constant of ``G`` on the lattice ``[0, L] x [-R, R]``.

    Failures are report entries: the worst violating sample is attached to
    each failed check.
    """
    checks = []
    xs = np.linspace(0.0, G.grid.length, nx)
    rs = np.linspace(-R, R, nr)
    if not np.any(rs == 0):
        rs = np.sort(np.append(rs, 0.0))
    tiny = 1e-12

    gv = G.g(xs[:, None], rs[None, :])  # (nx, nr, K)
    bound = G.alpha + G.beta * np.abs(rs)[None, :, None]
    margin = bound + tiny - np.abs(gv)
    checks.append(_worst("growth", margin, lambda i: {"x": xs[i[0]], "r": rs[i[1]], "k": i[2] + 1,
                                                      "g": gv[i], "bound": bound[0, i[1], i[2]]}))

    dr = np.abs(rs[:, None] - rs[None, :])
    sig = G.sigma(dr)  # (nr, nr, K)
    worst = CheckResult("continuity", True, math.inf)
    for ix, x in enumerate(xs):
        diff = np.abs(gv[ix][:, None, :] - gv[ix][None, :, :])
        m = sig + tiny - diff
        j = np.unravel_index(np.argmin(m), m.shape)
        if m[j] < worst.worst_margin:
            worst = CheckResult("continuity", bool(m[j] >= 0), float(m[j]),
                                {"x": x, "r1": rs[j[0]], "r2": rs[j[1]], "k": j[2] + 1,
                                 "diff": diff[j], "sigma": sig[j]})
    checks.append(worst)

    sig0 = G.sigma(0.0)
    checks.append(CheckResult("sigma_zero", bool(np.all(np.abs(sig0) <= tiny)), float(-np.abs(sig0).max(initial=0.0)),
                              detail="sigma_k(0) = 0 is required for h(0+) = 0"))

    ts = np.concatenate([[0.0], np.logspace(-12, math.log10(2 * R), 200)])
    hv = G.h(ts)
    dh = np.diff(hv)
    checks.append(CheckResult("h_monotone", bool(np.all(dh >= -tiny)), float(dh.min(initial=0.0))))

    a2, b2 = float(np.linalg.norm(G.alpha)), float(np.linalg.norm(G.beta))
    ok = all(math.isfinite(v) for v in (a2, b2, G.tail_bound)) and G.tail_bound >= 0
    checks.append(CheckResult("l2_summable", ok, detail=f"|alpha|_2={a2:.6g} |beta|_2={b2:.6g} tail={G.tail_bound:.3g}"))

    if G.grid.bc is BC.DIRICHLET:
        edge = np.abs(G.g(np.array([0.0, G.grid.length]), 0.0))
        checks.append(CheckResult("dirichlet_zero", bool(edge.max(initial=0.0) <= tiny), float(-edge.max(initial=0.0))))

    if check_osgood:
        if G.is_zero or np.all(G.sigma(1.0) == 0):
            checks.append(CheckResult("osgood", True, detail="zero modulus: noise is additive"))
        else:
            try:
                rep = validate_osgood(lambda t: float(G.h(t)))
                checks.append(CheckResult("osgood", rep.diverges, detail=rep.classification))
            except InvalidModulus as exc:
                checks.append(CheckResult("osgood", False, detail=str(exc)))
    return Certificate(checks)


def _worst(name, margin, describe) -> CheckResult:
    if margin.size == 0:
        return CheckResult(name, True)
    idx = np.unravel_index(np.argmin(margin), margin.shape)
    m = float(margin[idx])
    return CheckResult(name, m >= 0, m, describe(idx) if m < 0 else None)


# ---------------------------------------------------------------------------
# built-ins


def _basis(kind: str, grid: SpatialGrid, K: int, cache: SemigroupCache | None):
    L = grid.length
    k = np.arange(1, K + 1)
    if kind == "sine":
        return lambda x: np.sin(np.pi * np.asarray(x)[:, None] * k / L)
    if kind == "cosine":
        return lambda x: np.cos(np.pi * np.asarray(x)[:, None] * (k - 1) / L)
    if kind == "constant":
        return lambda x: np.ones((np.size(x), K))
    if kind == "eigen":
        if cache is None:
            raise InvalidParameter("eigen basis needs the semigroup cache")
        if K > grid.n:
            raise InvalidParameter("eigen basis has at most n modes")
        vecs = cache.eigvecs[:, :K]
        if grid.bc is BC.DIRICHLET:
            xp = np.concatenate([[0.0], grid.nodes, [L]])
            fp = np.vstack([np.zeros(K), vecs, np.zeros(K)])
        else:
            xp = np.concatenate([[0.0], grid.nodes, [L]])
            fp = np.vstack([vecs[:1], vecs, vecs[-1:]])
        return lambda x: np.stack([np.interp(x, xp, fp[:, j]) for j in range(K)], axis=-1)
    raise InvalidParameter(f"unknown spatial basis: {kind!r}")


def make_noise(name: str, grid: SpatialGrid, K: int, *, cache: SemigroupCache | None = None,
               c: float = 1.0, decay: float = 0.5, cap: float = math.inf, basis: str | None = None,
               amplitudes: Sequence[float] | None = None, table_r=None, table_g=None,
               alpha=None, beta=None, p: float = 2.0, exponent: float = 0.5) -> NoiseFamily:
    """Built-in noise families.

    ``holder_sqrt``: ``c_k sqrt(|r|)`` with ``c_k = c * decay**(k-1)``
    ``lipschitz``: ``c_k r``
    ``truncated``: ``c_k sqrt(|r| ^ cap)``, the bounded approximants
    ``additive``: ``c_k`` times the basis, independent of ``r``
    ``custom_table``: linear interpolation of ``(table_r, table_g)``
    ``power``: ``c_k |r|^exponent``; for ``exponent > 1`` there is no linear
    growth bound, so ``alpha`` and ``beta`` must be claimed explicitly

    The basis defaults to sines (Dirichlet) or cosines (Neumann), normalized to
    sup-norm one so that ``c_k`` is the Hölder constant of ``g_k``.
    ``amplitudes`` overrides the geometric ``c_k``.
    """
    name = name.strip().lower()
    if basis is None:
        basis = "sine" if grid.bc is BC.DIRICHLET else "cosine"
    if amplitudes is not None:
        ck = np.asarray(amplitudes, dtype=float)
        if ck.size != K:
            raise InvalidParameter(f"expected {K} amplitudes, got {ck.size}")
        tail = 0.0
    else:
        if not 0 <= decay < 1 and K > 0:
            raise InvalidParameter("decay must lie in [0, 1)")
        ck = c * decay ** np.arange(K)
        tail = c**2 * decay ** (2 * K) / (1 - decay**2) if K else 0.0
    if name == "holder_sqrt":
        shape = Shape("sqrt", cap=cap)
    elif name == "lipschitz":
        shape = Shape("linear", cap=cap)
    elif name == "truncated":
        if not math.isfinite(cap):
            raise InvalidParameter("truncated noise needs a finite cap")
        shape = Shape("sqrt", cap=cap)
    elif name == "additive":
        shape = Shape("const")
    elif name == "custom_table":
        shape = Shape("table", table_r=table_r, table_g=table_g)
    elif name == "power":
        e = float(exponent)
        if not e > 0:
            raise InvalidParameter("exponent must be positive")
        young = (1.0 - e, e) if e <= 1 else None  # |r|^e <= (1 - e) + e |r|
        shape = Shape("custom", cap=cap, fn=lambda r: np.abs(r) ** e, modulus_fn=lambda t: np.abs(t) ** min(e, 1.0),
                      growth_consts=young)
    else:
        raise InvalidParameter(f"unknown noise family: {name!r}")
    raw = _basis(basis, grid, K, cache)
    spatial = lambda x: raw(x) * ck  # noqa: E731
    claimed = alpha is not None and beta is not None
    if shape.kind == "custom" and shape.growth_consts is None and not claimed:
        raise InvalidParameter("power noise with exponent > 1 needs explicit alpha and beta")
    c0, c1 = shape.growth() if not claimed else (0.0, 0.0)
    sup = np.abs(raw(np.linspace(0.0, grid.length, 513))).max(initial=0.0)
    return NoiseFamily(grid=grid, K=K, spatial=spatial, shape=shape,
                       alpha=None if alpha is None else _pad(alpha, K),
                       beta=None if beta is None else _pad(beta, K),
                       tail_bound=(c0**2 + c1**2) * sup**2 * tail, p=p, name=name)


def _pad(values, K):
    v = np.zeros(K)
    values = np.atleast_1d(np.asarray(values, dtype=float))[:K]
    v[: values.size] = values
    return v


def make_drift(grid: SpatialGrid, coeffs: Sequence[float], strict: bool | None = None) -> PolynomialDrift:
    """Drift with spatially constant coefficients ``b_0, ..., b_d``.

    ``strict`` defaults to checking the dissipative form only when the degree
    is odd and at least 3.
    """
    coeffs = [float(b) for b in coeffs]
    if strict is None:
        strict = len(coeffs) >= 4 and len(coeffs) % 2 == 0
    return PolynomialDrift.from_constants(grid, coeffs, strict=strict)
