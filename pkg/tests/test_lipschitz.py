import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from liplab import fields as fam
from liplab.lipschitz import (
    FiniteSampleFunction,
    ScalarField,
    asymptotic_slope,
    lip_on_set,
    mcshane_extend,
    pairwise_quotients,
    plateau_extend,
)
from liplab.normed_space import NormedSpace

R1 = NormedSpace.lp(1, 2.0)


def line_field(func, grad=None, lip=None):
    return ScalarField(R1, lambda x: func(x[:, 0]), None if grad is None else (lambda x: grad(x[:, 0])[:, None]), lip)


def test_lip_on_set_examples():
    assert lip_on_set(line_field(lambda t: 2 * t), [[0.0], [1.0], [2.0]]) == 2.0
    assert lip_on_set(line_field(lambda t: 0 * t + 5), np.random.default_rng(0).normal(size=(30, 1))) == 0.0
    linf = NormedSpace.lp(2, np.inf)
    f = ScalarField(linf, lambda x: x.sum(axis=1))
    # brute force over the three pairs: (0,0)-(1,1) gives |2|/1
    assert lip_on_set(f, [[0, 0], [1, 0], [1, 1]]) == 2.0


def test_duplicate_points_rejected():
    with pytest.raises(ValueError, match="duplicate"):
        pairwise_quotients(R1, np.array([[1.0], [1.0]]), np.array([0.0, 1.0]))
    with pytest.raises(ValueError):
        FiniteSampleFunction(R1, [[0.0], [0.0]], [1.0, 2.0]).min_separation


def test_sample_csv_round_trip():
    sp = NormedSpace.lp(2, 1.0)
    s = FiniteSampleFunction(sp, np.random.default_rng(1).normal(size=(7, 2)), np.arange(7) / 3)
    back = FiniteSampleFunction.from_csv(s.to_csv(), sp)
    assert np.array_equal(back.points, s.points) and np.array_equal(back.values, s.values)


def test_declared_gradient_matches_finite_differences():
    rng = np.random.default_rng(2)
    sp = NormedSpace.lp(2, 2.0)
    for f in (fam.smooth_wave(sp, [1.0, -2.0]), fam.affine(sp, [0.3, 0.7], radius=10)):
        x = rng.uniform(-1, 1, (50, 2))
        h = 1e-6
        fd = np.stack([(f(x + h * e) - f(x - h * e)) / (2 * h) for e in np.eye(2)], axis=1)
        assert np.allclose(fd, f.gradient(x), rtol=1e-4, atol=1e-7)


def test_declared_lipschitz_bound_holds_on_samples():
    rng = np.random.default_rng(3)
    for sp in (NormedSpace.lp(2, 1.0), NormedSpace.lp(2, np.inf), NormedSpace.lp(2, 2.0)):
        for f in (fam.norm_cone(sp), fam.kink(sp, [0.1, 0.2]), fam.smooth_wave(sp, [2.0, 1.0])):
            x = rng.uniform(-1.5, 1.5, (200, 2))
            assert lip_on_set(f, x) <= f.lip + 1e-9


def test_slope_of_affine_is_dual_norm():
    rng = np.random.default_rng(4)
    for sp in (NormedSpace.lp(2, 1.0), NormedSpace.lp(3, 2.0), NormedSpace.polyhedral([[1, 0], [1, 1]])):
        omega = rng.normal(size=sp.dim)
        f = fam.affine(sp, omega, 0.3, radius=100)
        target = sp.dual_norm(omega)
        for radii in ([1.0, 0.1], [0.5, 0.25, 0.125, 0.01]):
            x = rng.normal(size=sp.dim)
            est = asymptotic_slope(f, x, radii, seed=5)
            assert np.allclose(est.trace, target, atol=1e-9, rtol=1e-9)


def test_slope_of_abs_at_kink():
    f = line_field(np.abs, np.sign, 1.0)
    assert asymptotic_slope(f, [0.0], [1.0, 0.1, 0.01]).value == pytest.approx(1.0, abs=1e-12)


def test_slope_of_square_approaches_six():
    # mean value bound: |quotient - 6| <= r on B_r(3) (pairs straddle within radius r)
    f = line_field(lambda t: t * t, lambda t: 2 * t)
    radii = [1.0, 0.1, 0.01]
    est = asymptotic_slope(f, [3.0], radii, samples_per_radius=64)
    for r, v in zip(radii, est.trace):
        assert abs(v - 6.0) <= 2 * r


def test_slope_schedule_validation():
    f = line_field(np.abs)
    with pytest.raises(ValueError):
        asymptotic_slope(f, [0.0], [])
    with pytest.raises(ValueError):
        asymptotic_slope(f, [0.0], [0.1, 0.2])
    with pytest.raises(ValueError):
        asymptotic_slope(f, [0.0], [0.1], samples_per_radius=1)


def test_slope_of_finite_sample_is_zero():
    s = FiniteSampleFunction(R1, [[0.0], [1.0]], [0.0, 5.0])
    assert asymptotic_slope(s, [1.0], [0.5, 0.1]).value == 0.0


@given(st.integers(0, 2**31 - 1))
@settings(max_examples=25, deadline=None)
def test_slope_below_declared_lipschitz(seed):
    rng = np.random.default_rng(seed)
    sp = NormedSpace.lp(2, float(rng.choice([1.0, 2.0, np.inf])))
    f = fam.kink(sp, rng.uniform(-1, 1, 2))
    est = asymptotic_slope(f, rng.uniform(-1, 1, 2), [0.5, 0.05], samples_per_radius=32, seed=seed)
    assert est.value <= f.lip + 1e-9


def test_mcshane_single_point_is_constant():
    g = mcshane_extend(FiniteSampleFunction(R1, [[0.3]], [2.5]))
    assert np.all(g(np.linspace(-3, 3, 11)[:, None]) == 2.5)


def test_mcshane_two_point_example():
    g = mcshane_extend(FiniteSampleFunction(R1, [[0.0], [1.0]], [0.0, 1.0]), L=1.0)
    y = np.linspace(-2, 3, 101)
    assert np.allclose(g(y[:, None]), np.minimum(np.abs(y), 1 + np.abs(y - 1)))
    assert g([0.5]) == 0.5


def test_mcshane_rejects_small_L():
    with pytest.raises(ValueError):
        mcshane_extend(FiniteSampleFunction(R1, [[0.0], [1.0]], [0.0, 1.0]), L=0.5)


def test_mcshane_reproduces_base_exactly():
    rng = np.random.default_rng(6)
    for _ in range(100):
        sp = NormedSpace.lp(int(rng.integers(1, 4)), float(rng.choice([1.0, 2.0, np.inf])))
        pts = rng.uniform(-1, 1, (int(rng.integers(1, 20)), sp.dim))
        base = FiniteSampleFunction(sp, pts, rng.normal(size=len(pts)))
        g = mcshane_extend(base)
        assert np.array_equal(g(pts), base.values)
        y = rng.uniform(-2, 2, (60, sp.dim))
        assert lip_on_set(g, y) <= g.lip * (1 + 1e-12) + 1e-12


def test_plateau_single_point():
    ext = plateau_extend(FiniteSampleFunction(R1, [[0.0]], [4.0]), 0.5)
    assert np.all(ext(np.linspace(-5, 5, 9)[:, None]) == 4.0)


def test_plateau_two_point_example():
    ext = plateau_extend(FiniteSampleFunction(R1, [[0.0], [1.0]], [0.0, 1.0]), 1.0)
    assert ext.slope == 2.0 and ext.radius == 0.25
    assert np.all(ext(np.linspace(-0.25, 0.25, 21)[:, None]) == 0.0)
    assert ext([0.5]) == 0.5
    assert ext([0.9]) == 1.0
    t = np.linspace(0.25, 0.75, 11)
    assert np.allclose(ext(t[:, None]), 2 * (t - 0.25))
    assert np.all(ext(np.linspace(0.75, 3, 10)[:, None]) == 1.0)


def test_plateau_rejects_bad_eps():
    with pytest.raises(ValueError):
        plateau_extend(FiniteSampleFunction(R1, [[0.0]], [0.0]), 0.0)


@given(st.integers(0, 2**31 - 1))
@settings(max_examples=30, deadline=None)
def test_plateau_contract(seed):
    rng = np.random.default_rng(seed)
    sp = NormedSpace.lp(int(rng.integers(1, 4)), float(rng.choice([1.0, 2.0, np.inf])))
    pts = np.unique(rng.uniform(-1, 1, (int(rng.integers(2, 15)), sp.dim)), axis=0)
    vals = rng.normal(size=len(pts))
    base = FiniteSampleFunction(sp, pts, vals)
    eps = float(rng.uniform(0.05, 1))
    ext = plateau_extend(base, eps)
    L = lip_on_set(base)
    assert ext.slope == pytest.approx(L + eps)
    assert np.max(np.abs(ext(pts) - vals)) <= 1e-12
    y = rng.uniform(-1.5, 1.5, (100, sp.dim))
    assert lip_on_set(ext.as_field(), y) <= L + eps + 1e-9
    v = ext(y)
    assert np.all((v >= vals.min()) & (v <= vals.max()))
    # lower envelope dominates the upper one, so the clamp keeps the data
    assert np.all(ext.lower_envelope(y) >= ext.upper_envelope(y) - 1e-12)
    near = pts[:, None, :] + ext.radius * sp.sample_ball(np.zeros(sp.dim), 1.0, 6, rng)[None]
    assert np.max(np.abs(ext(near.reshape(-1, sp.dim)) - np.repeat(vals, 6))) <= 1e-12
    assert np.all(ext.gradient(near.reshape(-1, sp.dim)) == 0)
