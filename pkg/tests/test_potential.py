"""Newtonian potentials against independent oracles.

The ball is the exhaustive closed-form case: with unit density the interior
potential is R^2/(2(N-2)) - |x|^2/(2N) and the exterior potential is
R^N |x|^(2-N) / (N(N-2)), glued C^1 across the boundary.  Everything else is
checked by structure (Laplacian values, scaling, symmetry), by Monte-Carlo
volume integrals, or by finite differences of the reported derivatives.
"""

import math

import numpy as np
import pytest

from obstaclelab.geometry import Ellipsoid, Paraboloid
from obstaclelab.potential import (
    DegenerateSamplerError,
    BoxSampler,
    PotentialEvaluator,
    UnsupportedDimensionError,
    alpha_coefficient,
    ellipsoid_interior_coefficients,
    ellipsoid_potential,
    ellipsoid_potential_gradient,
    ellipsoid_potential_hessian,
    homoeoid_gap,
    montecarlo_potential,
    paraboloid_slab_sampler,
    paraboloid_tail_bound,
    round_paraboloid_exterior_potential,
)


def ball_potential(N, R, x):
    r = np.linalg.norm(x)
    if r <= R:
        return R ** 2 / (2.0 * (N - 2)) - r ** 2 / (2.0 * N)
    return R ** N * r ** (2 - N) / (N * (N - 2))


def test_alpha_coefficient_newtonian_normalization():
    # N = 3 recovers the classical 1/(4 pi) kernel weight
    assert abs(alpha_coefficient(3) - 1.0 / (4.0 * math.pi)) < 1e-15


def test_ball_interior_closed_form():
    for N in range(3, 9):
        E = Ellipsoid((1.0,) * N)
        iq = ellipsoid_interior_coefficients(E)
        assert abs(iq.constant - 1.0 / (2.0 * (N - 2))) < 1e-12
        assert np.max(np.abs(iq.coefficients - 1.0 / (2.0 * N))) < 1e-12
        assert abs(iq.trace - 0.5) < 1e-13


def test_ball_exterior_closed_form():
    rng = np.random.default_rng(5)
    for N in (3, 5, 6, 8):
        E = Ellipsoid((1.0,) * N)
        x = rng.standard_normal(N)
        x *= 2.3 / np.linalg.norm(x)
        v = ellipsoid_potential(E, x)
        assert abs(v - ball_potential(N, 1.0, x)) < 1e-12
        g = ellipsoid_potential_gradient(E, x)
        r = np.linalg.norm(x)
        g_exact = -(1.0 / N) * r ** (-N) * x
        assert np.max(np.abs(g - g_exact)) < 1e-12


def test_interior_trace_sweep():
    rng = np.random.default_rng(17)
    for N in range(3, 9):
        for _ in range(5):
            a = np.exp(rng.uniform(-1.2, 1.2, size=N))
            iq = ellipsoid_interior_coefficients(Ellipsoid(a))
            assert abs(iq.trace - 0.5) < 1e-12
            assert np.all(iq.coefficients > 0)


def test_scaling_invariance():
    rng = np.random.default_rng(29)
    a = np.exp(rng.uniform(-0.5, 0.5, size=6))
    E = Ellipsoid(a)
    for s in (0.5, 2.0, 3.7):
        Es = Ellipsoid(s * a)
        pts = rng.uniform(-2.0, 2.0, size=(20, 6))
        v1 = ellipsoid_potential(Es, s * pts)
        v0 = ellipsoid_potential(E, pts)
        assert np.max(np.abs(v1 - s ** 2 * v0)) < 1e-11 * s ** 2


def test_axis_permutation_symmetry():
    a = np.array([0.7, 1.3, 1.0, 0.9, 1.6, 1.1])
    perm = np.array([3, 0, 5, 1, 4, 2])
    E = Ellipsoid(a)
    Ep = Ellipsoid(a[perm])
    rng = np.random.default_rng(41)
    pts = rng.uniform(-2.0, 2.0, size=(15, 6))
    v = ellipsoid_potential(E, pts)
    vp = ellipsoid_potential(Ep, pts[:, perm])
    assert np.max(np.abs(v - vp)) < 1e-12


def test_laplacian_values():
    rng = np.random.default_rng(53)
    for N in (3, 6):
        a = np.exp(rng.uniform(-0.4, 0.4, size=N))
        E = Ellipsoid(a)
        inner = rng.uniform(-0.3, 0.3, size=(10, N)) * a
        outer = rng.standard_normal((10, N))
        outer *= (rng.uniform(2.0, 4.0, 10) / np.linalg.norm(outer, axis=1))[:, None]
        Hi = ellipsoid_potential_hessian(E, inner)
        Ho = ellipsoid_potential_hessian(E, outer)
        tri = np.trace(Hi, axis1=-2, axis2=-1)
        tro = np.trace(Ho, axis1=-2, axis2=-1)
        assert np.max(np.abs(tri + 1.0)) < 1e-10
        assert np.max(np.abs(tro)) < 1e-10


def test_gradient_matches_finite_differences():
    E = Ellipsoid((0.8, 1.2, 1.0, 0.9, 1.4, 1.1))
    rng = np.random.default_rng(67)
    pts = np.vstack([
        rng.uniform(-0.3, 0.3, size=(5, 6)) * E.semiaxes,   # interior
        rng.standard_normal((5, 6)) * 2.5,                  # mostly exterior
    ])
    g = ellipsoid_potential_gradient(E, pts)
    eps = 1e-5
    for j in range(6):
        dp = pts.copy(); dp[:, j] += eps
        dm = pts.copy(); dm[:, j] -= eps
        fd = (ellipsoid_potential(E, dp) - ellipsoid_potential(E, dm)) / (2 * eps)
        assert np.max(np.abs(g[:, j] - fd)) < 2e-9


def test_hessian_matches_finite_differences():
    E = Ellipsoid((0.9, 1.1, 1.0, 1.3, 0.8, 1.2))
    rng = np.random.default_rng(71)
    x = rng.standard_normal(6)
    x *= 2.8 / np.linalg.norm(x)
    H = ellipsoid_potential_hessian(E, x)
    eps = 1e-4
    for j in range(6):
        dp = x.copy(); dp[j] += eps
        dm = x.copy(); dm[j] -= eps
        fd = (ellipsoid_potential_gradient(E, dp)
              - ellipsoid_potential_gradient(E, dm)) / (2 * eps)
        assert np.max(np.abs(H[j] - fd)) < 1e-6


def test_value_and_gradient_continuity_across_boundary():
    E = Ellipsoid((0.8, 1.3, 1.0, 0.9, 1.1, 1.2))
    rng = np.random.default_rng(83)
    d = rng.standard_normal((20, 6))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    bp = E.boundary_points(d)
    vin = ellipsoid_potential(E, bp * (1.0 - 1e-9))
    vout = ellipsoid_potential(E, bp * (1.0 + 1e-9))
    assert np.max(np.abs(vin - vout)) < 1e-8
    gin = ellipsoid_potential_gradient(E, bp * (1.0 - 1e-9))
    gout = ellipsoid_potential_gradient(E, bp * (1.0 + 1e-9))
    assert np.max(np.abs(gin - gout)) < 1e-7


def test_homoeoid_constant_value():
    # V_(tE) - V_E inside E equals (t^2 - 1) times the interior constant of E
    rng = np.random.default_rng(97)
    for _ in range(5):
        N = int(rng.integers(3, 9))
        a = np.exp(rng.uniform(-0.6, 0.6, size=N))
        E = Ellipsoid(a)
        t = float(rng.uniform(1.2, 2.5))
        pts = rng.uniform(-0.4, 0.4, size=(30, N)) * a
        g = homoeoid_gap(E, t, pts)
        c = ellipsoid_interior_coefficients(E).constant
        assert np.max(np.abs(g - (t * t - 1.0) * c)) < 1e-11


def test_montecarlo_crosschecks_confocal_route():
    rng = np.random.default_rng(20260815)
    a = np.exp(rng.uniform(-0.4, 0.4, size=6))
    E = Ellipsoid(a)
    box = BoxSampler(-a, a)
    for x in (np.zeros(6), rng.uniform(-0.3, 0.3, 6) * a,
              rng.standard_normal(6) * 1.5):
        est, se = montecarlo_potential(E.contains, box, x,
                                       n_samples=300000, seed=4)
        v = float(ellipsoid_potential(E, x))
        assert abs(est - v) < 4.0 * se + 1e-12
        assert se < 0.05


def test_montecarlo_rejects_bad_input():
    box = BoxSampler(np.zeros(3), np.ones(3))
    with pytest.raises(ValueError):
        montecarlo_potential(lambda y: np.ones(len(y), bool), box,
                             np.zeros(3), n_samples=10)
    with pytest.raises(DegenerateSamplerError):
        BoxSampler(np.zeros(3), np.zeros(2))


def test_paraboloid_direct_vs_montecarlo():
    P = Paraboloid((1.2,) * 5, vertex_depth=-0.5)
    x = np.array([0.0, 0.0, 0.0, 0.0, 0.0, 0.0])    # below the vertex
    v = round_paraboloid_exterior_potential(P, x, rel_tol=1e-8)
    # truncated Monte-Carlo plus the analytic tail bound brackets the value
    top = 60.0
    sampler = paraboloid_slab_sampler(P, top, n_strata=24)
    est, se = montecarlo_potential(P.contains, sampler, x,
                                   n_samples=400000, seed=9)
    tail = paraboloid_tail_bound(P, x, top)
    assert est - 4.0 * se <= v <= est + 4.0 * se + tail


def test_paraboloid_direct_potential_tolerance():
    P = Paraboloid((1.0,) * 5, vertex_depth=0.0)
    x = np.zeros(6); x[-1] = -0.3
    v6 = round_paraboloid_exterior_potential(P, x, rel_tol=1e-6)
    v9 = round_paraboloid_exterior_potential(P, x, rel_tol=1e-9)
    assert abs(v6 - v9) < 2e-6 * abs(v9)


def test_paraboloid_potential_guards():
    with pytest.raises(UnsupportedDimensionError):
        round_paraboloid_exterior_potential(
            Paraboloid((1.0,) * 4), np.zeros(5))
    P = Paraboloid((1.0,) * 5, vertex_depth=-1.0)
    inside = np.zeros(6); inside[-1] = 2.0
    with pytest.raises(ValueError):
        round_paraboloid_exterior_potential(P, inside)
    with pytest.raises(ValueError):
        round_paraboloid_exterior_potential(
            Paraboloid((1.0, 1.1, 1.0, 1.0, 1.0)), np.zeros(6))


def test_tail_bound_is_a_bound():
    P = Paraboloid((1.0,) * 5, vertex_depth=0.0)
    x = np.zeros(6); x[-1] = -0.5
    # the marginal contribution of [H, 2H] is below the bound at H
    lo = paraboloid_tail_bound(P, x, 40.0)
    assert np.isfinite(lo) and lo > 0
    assert paraboloid_tail_bound(P, x, 80.0) < lo
    assert paraboloid_tail_bound(P, x, 0.2) == math.inf


def test_potential_evaluator_facade():
    E = Ellipsoid((1.0, 1.1, 0.9, 1.2, 1.0, 1.05))
    ev = PotentialEvaluator.for_ellipsoid(E)
    rng = np.random.default_rng(3)
    pts = rng.uniform(-0.5, 0.5, size=(8, 6))
    assert np.allclose(ev(pts), ellipsoid_potential(E, pts))
    assert np.allclose(ev.gradient(pts), ellipsoid_potential_gradient(E, pts))
    assert ev.info()["method"] == "closed-form"
