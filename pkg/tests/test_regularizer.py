import math

import numpy as np
import pytest
from scipy import integrate

from rdlab.coefficients import PolynomialDrift, make_drift, make_noise
from rdlab.errors import InvalidParameter, LevelConstructionFailure, OsgoodFailure
from rdlab.models import build_cache, reaction_diffusion_model, sine_state
from rdlab.regularizer import (EPS, adaptive_simpson, build_levels, bump, bump_integral, coupled_uniqueness_experiment,
                               eval_phi, level_table, write_levels_csv, write_uniqueness_csv)
from rdlab.simulate import Model


@pytest.fixture(scope="module")
def sqrt_family():
    return build_levels(np.sqrt, 6)


def test_levels_closed_form(sqrt_family):
    n = np.arange(7)
    exact = np.exp(-n * (n + 1) / 2)
    np.testing.assert_allclose(sqrt_family.a_seq, exact, rtol=1e-8, atol=0)
    assert sqrt_family.a_seq[1] == pytest.approx(0.3678794, abs=1e-7)
    assert sqrt_family.a_seq[2] == pytest.approx(0.0497871, abs=1e-7)
    assert np.all(np.diff(sqrt_family.a_seq) < 0)


def test_level_integrals_by_quadrature(sqrt_family):
    a = sqrt_family.a_seq
    for n in range(1, 7):
        # independent oracle: integrate 1/r directly, no log substitution
        val = integrate.quad(lambda r: 1.0 / r, a[n], a[n - 1], epsabs=0, epsrel=1e-13, limit=400)[0]
        assert abs(val - n) <= 1e-8
    for n, _, check, gap in level_table(sqrt_family):
        assert abs(check) <= 1e-8
        assert 0 <= gap <= a[n - 1] + 1e-12


def test_scaled_and_floored_moduli():
    fam = build_levels(lambda r: 2 * np.sqrt(r), 3)
    n = np.arange(4)
    np.testing.assert_allclose(fam.a_seq, np.exp(-2 * n * (n + 1)), rtol=1e-8)
    # h(r) = r lies below sqrt(r) on (0, 1), so the floor takes over
    lin = build_levels(lambda r: r, 3)
    np.testing.assert_allclose(lin.a_seq, np.exp(-n * (n + 1) / 2), rtol=1e-8)


def test_psi_bounds_support_and_mass(sqrt_family):
    for n in range(1, 7):
        lo, hi = sqrt_family.a_seq[n], sqrt_family.a_seq[n - 1]
        r = np.concatenate([np.geomspace(lo * 1e-2, hi * 10, 10_000), -np.geomspace(lo, hi, 50)])
        psi = sqrt_family.psi(n, r)
        assert psi.min() >= 0
        assert np.all(psi <= 2 / (n * sqrt_family.h_fn(r) ** 2) + 1e-12)
        outside = (np.abs(r) <= lo) | (np.abs(r) >= hi)
        assert np.all(psi[outside] == 0)
        mass = integrate.quad(lambda s: float(sqrt_family.psi(n, s)), lo, hi, epsabs=0, epsrel=1e-11, limit=1000,
                              points=np.geomspace(lo, hi, 30)[1:-1])[0]
        assert abs(mass - 1) <= 1e-8


def test_phi_bounds_at_many_points(sqrt_family):
    r = np.random.default_rng(1).uniform(-1.5, 1.5, 10_000)
    for n in range(1, 7):
        a_prev, a_n = sqrt_family.a_seq[n - 1], sqrt_family.a_seq[n]
        rr = np.concatenate([r, np.geomspace(a_n / 10, 2 * a_prev, 2000)])
        v, d1, d2 = eval_phi(sqrt_family, n, rr)
        ar = np.abs(rr)
        assert np.all(v <= ar + 1e-8)
        assert np.all(v >= ar - a_prev - 1e-8)
        assert np.all(v[ar <= a_n] == 0)
        assert np.all(np.abs(d1) <= 1 + 1e-12)
        assert np.all(d1[ar >= a_prev] == np.sign(rr[ar >= a_prev]))


def test_phi_matches_nested_quadrature(sqrt_family):
    n = 2
    lo = sqrt_family.a_seq[n]
    pts = np.geomspace(lo, sqrt_family.a_seq[n - 1], 16)[1:-1]
    for r in (0.06, 0.1, 0.2, 0.3, 0.5):
        ref = integrate.quad(lambda s: float(sqrt_family.Psi(n, s)), lo, r, epsabs=0, epsrel=1e-12, limit=500,
                             points=pts[pts < r])[0]
        assert float(sqrt_family.phi(n, r)) == pytest.approx(ref, abs=1e-9)


def test_phi_derivatives_by_finite_differences(sqrt_family):
    n = 1
    r = np.linspace(0.38, 0.98, 25)
    eps = 1e-5
    v, d1, d2 = eval_phi(sqrt_family, n, r)
    fd1 = (sqrt_family.phi(n, r + eps) - sqrt_family.phi(n, r - eps)) / (2 * eps)
    fd2 = (sqrt_family.Psi(n, r + eps) - sqrt_family.Psi(n, r - eps)) / (2 * eps)
    np.testing.assert_allclose(fd1, d1, atol=1e-8)
    np.testing.assert_allclose(fd2, d2, atol=1e-5 * max(1, d2.max()))
    v_neg, d1_neg, d2_neg = eval_phi(sqrt_family, n, -r)
    np.testing.assert_array_equal(v_neg, v)
    np.testing.assert_array_equal(d1_neg, -d1)
    np.testing.assert_array_equal(d2_neg, d2)


def test_eval_phi_scalar_cases(sqrt_family):
    assert eval_phi(sqrt_family, 3, 0.0) == (0.0, 0.0, 0.0)
    v, d1, d2 = eval_phi(sqrt_family, 1, -2.0)
    assert d1 == -1.0 and d2 == 0.0 and isinstance(v, float)
    for bad in (0, 7, 1.5):
        with pytest.raises(InvalidParameter):
            eval_phi(sqrt_family, bad, 0.1)


def test_uniform_convergence_to_abs(sqrt_family):
    r = np.linspace(-2, 2, 4001)
    gaps = [np.max(np.abs(r) - sqrt_family.phi(n, r)) for n in range(1, 7)]
    assert all(g <= sqrt_family.a_seq[n - 1] + 1e-12 for n, g in enumerate(gaps, start=1))
    assert all(b < a for a, b in zip(gaps, gaps[1:]))


def test_bump_closed_forms():
    m = np.linspace(0, 1, 200_001)
    assert bump(m).max() == pytest.approx(1.0)
    trapz = np.sum(0.5 * (bump(m[1:]) + bump(m[:-1])) * np.diff(m))
    assert trapz == pytest.approx(1 - EPS, abs=1e-9)
    assert float(bump_integral(1.0)) == pytest.approx(1 - EPS, abs=1e-15)
    mid = np.linspace(0.01, 0.99, 50)
    ref = [integrate.quad(bump, 0, x, limit=200, points=[EPS, 1 - EPS])[0] for x in mid]
    np.testing.assert_allclose(bump_integral(mid), ref, atol=1e-12)


def test_adaptive_simpson():
    assert adaptive_simpson(math.sin, 0, math.pi) == pytest.approx(2.0, abs=1e-9)
    assert adaptive_simpson(lambda x: x**3, 1, 1) == 0.0
    assert adaptive_simpson(math.exp, 0, 1, tol=1e-12) == pytest.approx(math.e - 1, abs=1e-11)


def test_construction_failures():
    with pytest.raises(OsgoodFailure):
        build_levels(lambda r: r**0.25, 3)
    with pytest.raises(LevelConstructionFailure):
        build_levels(np.sqrt, 3, r_floor=0.1)
    with pytest.raises(InvalidParameter):
        build_levels(np.sqrt, 0)


def test_levels_csv(sqrt_family, tmp_path):
    p = tmp_path / "levels.csv"
    write_levels_csv(sqrt_family, p)
    lines = open(p).read().splitlines()
    assert lines[0] == "n,a_n,int_check,phi_sup_gap" and len(lines) == 7


def test_uniqueness_zero_delta_is_exact():
    m = reaction_diffusion_model(n=8)
    rep = coupled_uniqueness_experiment(m, sine_state(m.grid), [0.0, 0.1], 0.1, 1e-3, 40, 3, halvings=1)
    zero = [r for r in rep.series("delta") if r.delta == 0][0]
    assert zero.mean_sup_diff == 0.0 and zero.std_error == 0.0
    assert len(rep.series("mesh")) == 1


def test_uniqueness_gronwall_oracle():
    cache = build_cache(8, diffusion_params=(0.1,))
    lam = 1.0
    m = Model(cache, make_drift(cache.grid, (0.0, lam)), make_noise("holder_sqrt", cache.grid, 0))
    T, deltas = 0.5, [0.1, 0.01, 0.001]
    rep = coupled_uniqueness_experiment(m, sine_state(m.grid), deltas, T, 1e-3, 2, 0, halvings=0)
    for row in rep.series("delta"):
        assert 0 < row.mean_sup_diff <= math.exp(lam * T) * row.delta
    assert rep.delta_nonincreasing


def test_uniqueness_rejects_non_osgood_noise():
    m = reaction_diffusion_model(n=8)
    shape = m.G.shape.__class__("custom", fn=lambda r: np.abs(r) ** 0.25, modulus_fn=lambda t: np.abs(t) ** 0.25,
                                growth_consts=(0.75, 0.25))
    bad = m.replace(G=m.G.with_shape(shape))
    with pytest.raises(OsgoodFailure):
        coupled_uniqueness_experiment(bad, sine_state(m.grid), [0.1], 0.1, 1e-3, 4, 0)


def test_uniqueness_csv(tmp_path):
    m = reaction_diffusion_model(n=6)
    rep = coupled_uniqueness_experiment(m, sine_state(m.grid), [0.0, 0.1], 0.05, 1e-3, 8, 1, halvings=2)
    p = tmp_path / "u.csv"
    write_uniqueness_csv(rep, p)
    lines = open(p).read().splitlines()
    assert lines[0] == "delta,dt,paths,mean_sup_diff,std_error"
    assert len(lines) == 1 + 2 + 2
    assert lines[-1].startswith("nan,0.0005,8,")
