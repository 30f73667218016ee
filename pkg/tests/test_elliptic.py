import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import eigh

from rdlab.elliptic import (BC, SemigroupCache, apply_resolvent, apply_semigroup, assemble_operator, build_grid,
                            diffusion_coefficient, spectral_radius)
from rdlab.errors import EllipticityViolation, InvalidParameter
from rdlab.models import build_cache

LAMBDA1 = -64.0 * math.sin(math.pi / 8) ** 2


def test_grid_arithmetic():
    g = build_grid(3, 1.0, "dirichlet")
    assert g.spacing == 0.25
    np.testing.assert_allclose(g.nodes, [0.25, 0.5, 0.75])
    assert build_grid(2, 2.0, "neumann").spacing == pytest.approx(2 / 3)


@pytest.mark.parametrize("n,length", [(1, 1.0), (0, 1.0), (4, 0.0), (4, -1.0)])
def test_grid_rejects_bad_input(n, length):
    with pytest.raises(InvalidParameter):
        build_grid(n, length)


def test_unknown_bc():
    with pytest.raises(InvalidParameter, match="unknown boundary condition"):
        BC.parse("Robin")


@given(n=st.integers(2, 200), length=st.floats(0.1, 10.0), bc=st.sampled_from(["dirichlet", "neumann"]))
def test_grid_weights_trapezoid_consistent(n, length, bc):
    g = build_grid(n, length, bc)
    total = g.weights.sum()
    assert np.all(g.weights > 0)
    assert length * (1 - 2 * g.spacing / length) - 1e-12 <= total <= length + 1e-12


def test_dirichlet_eigenpair_closed_form(dirichlet3):
    g = dirichlet3.grid
    u = np.sin(np.pi * g.nodes)
    Au = dirichlet3.operator.apply(u)
    np.testing.assert_allclose(Au, LAMBDA1 * u, atol=1e-10)
    assert dirichlet3.eigvals[0] == pytest.approx(LAMBDA1, abs=1e-10)
    dense = np.linalg.eigvalsh(dirichlet3.operator.matrix)
    assert dense.max() == pytest.approx(LAMBDA1, abs=1e-10)


def test_toeplitz_spectrum_all_modes():
    n = 31
    c = build_cache(n, 1.0, "dirichlet")
    h = 1.0 / (n + 1)
    k = np.arange(1, n + 1)
    exact = -(4 / h**2) * np.sin(k * np.pi * h / 2) ** 2
    np.testing.assert_allclose(c.eigvals, exact, rtol=1e-12)


def test_neumann_constants_in_kernel():
    c = build_cache(10, 1.0, "neumann", "affine", (1.0, 2.0))
    np.testing.assert_allclose(c.operator.apply(np.full(10, 3.0)), 0.0, atol=1e-10)
    assert abs(c.eigvals[0]) < 1e-9
    assert c.eigvals[1] < -1e-6


def test_ellipticity_violation():
    g = build_grid(5, 1.0)
    with pytest.raises(EllipticityViolation):
        assemble_operator(g, diffusion_coefficient("constant", (-1.0,)))


def test_diffusion_coefficient_parsing():
    a = diffusion_coefficient("affine", (1.0, 2.0), 2.0)
    assert a(np.array([1.0]))[0] == pytest.approx(2.0)
    t = diffusion_coefficient("table", (0.0, 1.0, 1.0, 3.0))
    assert t(0.5) == pytest.approx(2.0)
    with pytest.raises(InvalidParameter):
        diffusion_coefficient("wiggly", ())
    with pytest.raises(InvalidParameter):
        diffusion_coefficient("table", (1.0, 0.0, 1.0, 3.0))


def test_cache_invariants(caches):
    for c in caches:
        A = c.operator.matrix
        w = c.grid.weights
        assert np.all(c.eigvals <= 0)
        assert np.all(np.diff(c.eigvals) <= 0)
        for k in range(c.grid.n):
            v = c.eigvecs[:, k]
            resid = np.abs(A @ v - c.eigvals[k] * v).max()
            assert resid <= 1e-10 * max(1.0, abs(c.eigvals[k]))
        gram = (c.eigvecs.T * w) @ c.eigvecs
        np.testing.assert_allclose(gram, np.eye(c.grid.n), atol=1e-10)
        recon = (c.eigvecs * c.eigvals) @ (c.eigvecs.T * w)
        assert np.abs(recon - A).max() <= 1e-10 * max(1.0, spectral_radius(c))


def test_dirichlet_spectrum_strictly_negative(caches):
    for c in caches:
        if c.grid.bc is BC.DIRICHLET:
            assert c.eigvals[0] < 0


def test_spectrum_matches_generalized_eigensolve(caches):
    for c in caches:
        W = np.diag(c.grid.weights)
        vals = eigh(W @ c.operator.matrix, W, eigvals_only=True)
        np.testing.assert_allclose(np.sort(vals)[::-1], c.eigvals, atol=1e-8 * spectral_radius(c))


def test_semigroup_identity_and_errors(dirichlet3, rng):
    u = rng.standard_normal(3)
    out = apply_semigroup(dirichlet3, 0.0, u)
    assert np.array_equal(out, u)
    with pytest.raises(InvalidParameter):
        apply_semigroup(dirichlet3, -1.0, u)


def test_semigroup_on_eigenvector(dirichlet3):
    v1 = dirichlet3.eigvecs[:, 0]
    for t in (0.01, 0.1, 1.0):
        np.testing.assert_allclose(apply_semigroup(dirichlet3, t, v1), math.exp(LAMBDA1 * t) * v1, atol=1e-12)


def test_neumann_semigroup_preserves_constants():
    c = build_cache(15, 1.0, "neumann", "bump", (0.3, 1.0, 0.5, 0.2))
    u = np.full(15, 2.5)
    for t in (0.1, 1.0, 10.0):
        np.testing.assert_allclose(apply_semigroup(c, t, u), u, atol=1e-12)


def test_semigroup_matrix_agrees_with_expm(caches):
    from scipy.linalg import expm

    for c in caches:
        t = 0.01
        np.testing.assert_allclose(c.semigroup_matrix(t), expm(t * c.operator.matrix), atol=1e-10)


def test_zero_cache_is_identity():
    g = build_grid(6, 1.0)
    c = SemigroupCache.zero(g)
    u = np.arange(6.0)
    np.testing.assert_allclose(apply_semigroup(c, 3.0, u), u, atol=1e-13)
    np.testing.assert_allclose(c.apply_operator(u), 0.0, atol=1e-13)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), t=st.floats(0.0, 1.0), s=st.floats(0.0, 1.0), which=st.integers(0, 3))
def test_semigroup_law(caches, seed, t, s, which):
    c = caches[which]
    u = np.random.default_rng(seed).uniform(-1, 1, c.grid.n)
    lhs = apply_semigroup(c, t, apply_semigroup(c, s, u))
    assert np.abs(lhs - apply_semigroup(c, t + s, u)).max() <= 1e-10


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), t=st.floats(0.0, 1.0), which=st.integers(0, 3))
def test_sub_markov_positivity(caches, seed, t, which):
    c = caches[which]
    u = np.random.default_rng(seed).uniform(0, 1, c.grid.n)
    out = apply_semigroup(c, t, u)
    assert out.min() >= -1e-10 and out.max() <= 1 + 1e-10


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), lam=st.floats(0.01, 100.0), mu=st.floats(0.01, 100.0),
       which=st.integers(0, 3))
def test_resolvent_identity(caches, seed, lam, mu, which):
    c = caches[which]
    u = np.random.default_rng(seed).uniform(-1, 1, c.grid.n)
    lhs = apply_resolvent(c, lam, u) - apply_resolvent(c, mu, u)
    rhs = (mu - lam) * apply_resolvent(c, lam, apply_resolvent(c, mu, u))
    assert np.abs(lhs - rhs).max() <= 1e-10


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), which=st.integers(0, 3))
def test_self_adjoint(caches, seed, which):
    c = caches[which]
    r = np.random.default_rng(seed)
    u, v = r.uniform(-1, 1, (2, c.grid.n))
    A = c.operator
    lhs, rhs = c.grid.inner(A.apply(u), v), c.grid.inner(u, A.apply(v))
    assert abs(lhs - rhs) <= 1e-12 * max(1.0, spectral_radius(c))


def test_resolvent_eigenvector_and_errors(dirichlet3):
    v = dirichlet3.eigvecs[:, 1]
    lam = 2.0
    np.testing.assert_allclose(apply_resolvent(dirichlet3, lam, v), v / (lam - dirichlet3.eigvals[1]), atol=1e-13)
    for bad in (0.0, -1.0):
        with pytest.raises(InvalidParameter):
            apply_resolvent(dirichlet3, bad, v)


def test_resolvent_approximates_identity(caches, rng):
    lam = 1e6
    for c in caches:
        u = rng.uniform(-1, 1, c.grid.n)
        u /= np.abs(u).max()
        gap = np.abs(lam * apply_resolvent(c, lam, u) - u).max()
        # lam R u - u = R A u and lam R is a sup-norm contraction
        row_norm = np.abs(c.operator.matrix).sum(axis=1).max()
        assert gap <= row_norm / lam
        if c.grid.bc is BC.DIRICHLET and np.ptp(c.operator.a_flux) == 0:
            assert gap <= spectral_radius(c) / lam
