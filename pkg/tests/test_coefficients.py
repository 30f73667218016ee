import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from rdlab.coefficients import (PolynomialDrift, Shape, check_dissipativity, coercivity_radius,
                                dissipativity_constants, eval_drift, eval_noise_columns, make_drift, make_noise,
                                noise_growth_bound, noise_hs_norm, validate_noise_family, validate_osgood)
from rdlab.elliptic import build_grid
from rdlab.errors import InvalidModulus, InvalidParameter
from rdlab.models import build_cache

GRID = build_grid(16, 1.0)


def test_drift_examples():
    cube = make_drift(GRID, (0, 0, 0, -1))
    np.testing.assert_array_equal(eval_drift(cube, np.full(16, 2.0)), -8.0)
    ac = make_drift(GRID, (0, 1, 0, -1))
    np.testing.assert_array_equal(eval_drift(ac, np.zeros(16)), 0.0)
    b0 = np.linspace(-1, 1, 16)
    F = PolynomialDrift.from_functions(GRID, [lambda x: np.interp(x, GRID.nodes, b0)], strict=False)
    np.testing.assert_allclose(eval_drift(F, np.random.default_rng(0).normal(size=16)), b0)


def test_drift_rejects_bad_leading_term():
    with pytest.raises(InvalidParameter):
        PolynomialDrift.from_constants(GRID, (0, 1, 0, 1))
    with pytest.raises(InvalidParameter):
        PolynomialDrift.from_constants(GRID, (0, 0, -1))


@given(i=st.integers(0, 15), bump=st.floats(-5, 5), seed=st.integers(0, 1000))
def test_drift_is_local(i, bump, seed):
    F = make_drift(GRID, (0.3, 1, -0.5, -2))
    u = np.random.default_rng(seed).normal(size=16)
    v = u.copy()
    v[i] += bump
    d = eval_drift(F, v) - eval_drift(F, u)
    mask = np.arange(16) != i
    assert np.all(d[mask] == 0)


@given(seed=st.integers(0, 10_000))
def test_drift_sign_beyond_coercivity_radius(seed):
    F = make_drift(GRID, (0.5, 2, -1, -1))
    R0 = coercivity_radius(F)
    r = np.random.default_rng(seed)
    u = r.uniform(-1, 1, 16)
    x0 = int(np.argmax(np.abs(u)))
    u *= (R0 * (1 + r.uniform(0, 3))) / abs(u[x0])
    assert np.sign(eval_drift(F, u)[x0]) == -np.sign(u[x0])


def test_dissipativity_direct_example():
    F = make_drift(GRID, (0, 0, 0, -1))
    u, v = np.full(16, 2.0), np.zeros(16)
    lhs = (eval_drift(F, u + v) - eval_drift(F, v))[0] * np.sign(u[0])
    rhs = 1.0 * (1 + 0.0) ** 3 - 1.0 * 2.0**3
    assert lhs == -8 and rhs == -7 and lhs <= rhs


def _grid_search_a(f, b, radius=20.0, points=1201):
    s = np.linspace(-radius, radius, points)
    S, T = np.meshgrid(s, s, indexing="ij")
    need = (np.sign(S) * (f(S + T) - f(T)) + b * np.abs(S) ** 3) / (1 + np.abs(T)) ** 3
    return need.max()


def test_dissipativity_allen_cahn_no_violations():
    F = make_drift(GRID, (0, 1, 0, -1))
    b = 0.25 * F.eps_lead
    a = dissipativity_constants(F, b)
    oracle = _grid_search_a(lambda r: r - r**3, b)
    assert a >= oracle
    rep = check_dissipativity(F, a, b, samples=100_000, rng_seed=3)
    assert rep.violations == 0 and rep.worst_margin >= 0


def test_dissipativity_detects_small_a():
    F = make_drift(GRID, (0, 1, 0, -1))
    rep = check_dissipativity(F, 1e-6, 0.9, samples=20_000, rng_seed=1)
    assert rep.violations > 0 and rep.worst_margin < 0
    with pytest.raises(InvalidParameter):
        check_dissipativity(F, 0.0, 1.0)


def test_noise_columns_examples():
    G = make_noise("holder_sqrt", GRID, 4)
    assert np.all(eval_noise_columns(G, np.zeros(16)) == 0)
    ones = build_grid(8, 1.0, "neumann")
    G1 = make_noise("holder_sqrt", ones, 1, basis="constant")
    np.testing.assert_allclose(eval_noise_columns(G1, np.full(8, 4.0))[:, 0], 2.0)
    K = 5
    Gl = make_noise("lipschitz", ones, K, basis="constant", amplitudes=2.0 ** -np.arange(1, K + 1))
    cols = eval_noise_columns(Gl, np.ones(8))
    np.testing.assert_allclose(cols, np.broadcast_to(2.0 ** -np.arange(1, K + 1), (8, K)))


def test_hs_norm_geometric_series():
    n, K = 9, 40
    g = build_grid(n, (n + 1) / n, "neumann")  # weights sum to one
    assert g.weights.sum() == pytest.approx(1.0)
    G = make_noise("additive", g, K, basis="constant", amplitudes=2.0 ** -np.arange(1, K + 1))
    direct = math.sqrt(sum(4.0**-k for k in range(1, K + 1)))
    assert noise_hs_norm(G, np.zeros(n)) == pytest.approx(direct, rel=1e-14)
    assert noise_hs_norm(G, np.zeros(n)) == pytest.approx(1 / math.sqrt(3), abs=1e-12)
    Gz = make_noise("holder_sqrt", g, 3)
    assert noise_hs_norm(Gz, np.zeros(n)) == 0.0


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10_000), scale=st.floats(0.0, 50.0),
       family=st.sampled_from(["holder_sqrt", "lipschitz", "additive", "truncated"]))
def test_hs_norm_linear_growth(seed, scale, family):
    G = make_noise(family, GRID, 6, cap=2.0)
    u = scale * np.random.default_rng(seed).uniform(-1, 1, 16)
    assert noise_hs_norm(G, u) <= noise_growth_bound(G, u) + 1e-9
    assert noise_hs_norm(G, u) <= GRID.length * (np.linalg.norm(G.alpha) + np.linalg.norm(G.beta) * np.abs(u).max()) + 1e-9


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10_000), eps=st.floats(1e-8, 1.0))
def test_noise_continuity_controlled_by_moduli(seed, eps):
    G = make_noise("holder_sqrt", GRID, 6)
    r = np.random.default_rng(seed)
    u = r.uniform(-3, 3, 16)
    v = u + eps * r.uniform(-1, 1, 16)
    diff = np.linalg.norm(eval_noise_columns(G, u) - eval_noise_columns(G, v))
    bound = math.sqrt(np.sum(G.sigma(np.abs(u - v)) ** 2))
    assert diff <= bound + 1e-12


def test_osgood_classification():
    assert validate_osgood(np.sqrt).classification == "Diverges"
    assert validate_osgood(lambda r: 3.0 * math.sqrt(r)).classification == "Diverges"
    assert validate_osgood(lambda r: r).classification == "Diverges"
    rep = validate_osgood(lambda r: r**0.25)
    assert rep.classification == "Converges"
    for rho, val in rep.table:
        assert val == pytest.approx(2 * (1 - math.sqrt(rho)), rel=1e-9)


def test_osgood_table_against_quad():
    h = lambda r: r**0.7 + 0.1 * r  # noqa: E731
    rep = validate_osgood(h)
    for rho, val in rep.table[:3]:
        ref = integrate.quad(lambda r: h(r) ** -2, rho, 1.0, limit=500, points=[10 * rho, 100 * rho])[0]
        assert val == pytest.approx(ref, rel=1e-6)


def test_osgood_rejects_nonpositive():
    with pytest.raises(InvalidModulus):
        validate_osgood(lambda r: r - 0.5)


def test_holder_family_certificate():
    G = make_noise("holder_sqrt", GRID, 8, c=1.0, decay=0.5)
    cert = validate_noise_family(G)
    assert cert.passed, cert.failures()


def test_reference_example_family():
    c = np.array([1.0, 0.3, 0.25, 0.1, 0.05])
    G = make_noise("holder_sqrt", GRID, c.size, amplitudes=c)
    t = np.linspace(0, 4, 41)
    np.testing.assert_allclose(G.h(t), np.abs(c).sum() * np.sqrt(t), rtol=1e-6)
    assert validate_noise_family(G).passed


def test_square_counterexample():
    G = make_noise("power", GRID, 3, exponent=2.0, alpha=[1, 0, 0], beta=[1, 0, 0])
    cert = validate_noise_family(G, R=3.0, nr=7)
    assert not cert["growth"].passed
    w = cert["growth"].worst_sample
    assert abs(w["r"]) == 3.0 and w["g"] == pytest.approx(9.0, rel=1e-2) and w["bound"] == 4.0
    with pytest.raises(InvalidParameter):
        make_noise("power", GRID, 3, exponent=2.0)


def test_sigma_zero_is_required():
    shape = Shape("custom", fn=lambda r: np.sqrt(np.abs(r)), modulus_fn=lambda t: 0.1 + np.sqrt(t),
                  growth_consts=(0.5, 0.5))
    G = make_noise("holder_sqrt", GRID, 2).with_shape(shape)
    cert = validate_noise_family(G, check_osgood=False)
    assert not cert["sigma_zero"].passed
    assert cert["growth"].passed


def test_dirichlet_boundary_zero():
    # cosine modes do not vanish at the boundary, but r g(r) does at r = 0
    lip = make_noise("lipschitz", GRID, 2, basis="cosine")
    assert validate_noise_family(lip)["dirichlet_zero"].passed
    additive = make_noise("additive", GRID, 2, basis="cosine")
    assert not validate_noise_family(additive)["dirichlet_zero"].passed


def test_table_and_truncated_shapes():
    G = make_noise("custom_table", GRID, 2, table_r=[-1, 0, 1], table_g=[1, 0, 1])
    assert validate_noise_family(G).passed
    Gt = make_noise("truncated", GRID, 3, cap=4.0)
    col = eval_noise_columns(Gt, np.full(16, 100.0))
    np.testing.assert_allclose(col, eval_noise_columns(Gt, np.full(16, 4.0)))
    assert validate_noise_family(Gt).passed
    with pytest.raises(InvalidParameter):
        make_noise("truncated", GRID, 3)


def test_tail_bound_geometric():
    G = make_noise("holder_sqrt", GRID, 4, c=1.0, decay=0.5)
    c0, c1 = 0.5, 0.5
    expect = (c0**2 + c1**2) * sum(0.25**k for k in range(4, 400))
    assert G.tail_bound == pytest.approx(expect, rel=1e-9)


def test_eigen_basis_needs_cache():
    with pytest.raises(InvalidParameter):
        make_noise("additive", GRID, 3, basis="eigen")
    c = build_cache(6)
    G = make_noise("additive", c.grid, 3, cache=c, basis="eigen", amplitudes=[1, 1, 1])
    np.testing.assert_allclose(G.spatial_nodes, c.eigvecs[:, :3], atol=1e-14)
