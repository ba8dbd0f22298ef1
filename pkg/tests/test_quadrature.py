"""Quadrature building blocks against closed forms.

Gauss rules are checked for polynomial exactness, the adaptive driver for
meeting its requested tolerance on every component of a vector integrand,
and the sphere rules against first moments of the uniform measure, for
which int x_i^2 = 1/n, int x_i^4 = 3/(n(n+2)) and int x_i^2 x_j^2 =
1/(n(n+2)) with respect to the normalized surface measure on S^(n-1).
"""

import math

import numpy as np
import pytest

from obstaclelab.quadrature import (
    PanelizedPrimitive,
    QuadratureError,
    adaptive_gauss,
    ball_volume,
    equatorial_design,
    gauss_legendre,
    polar_rule,
    sphere_area,
    sphere_rule,
)


def test_gauss_legendre_polynomial_exactness():
    x, w = gauss_legendre(8)
    for k in range(16):
        exact = 0.0 if k % 2 else 2.0 / (k + 1)
        assert abs(np.sum(w * x ** k) - exact) < 1e-13


def test_adaptive_gauss_smooth_oracle():
    val, err = adaptive_gauss(lambda t: np.sin(t), 0.0, math.pi, rel_tol=1e-13)
    assert abs(val - 2.0) < 5e-13
    assert err < 1e-12


def test_adaptive_gauss_per_component_control():
    # one large and one tiny component; both must meet their own relative
    # tolerance, not just the max-row one
    def f(t):
        return np.stack([np.exp(t), 1e-8 * np.cos(3.0 * t)], axis=0)

    val, err = adaptive_gauss(f, 0.0, 1.0, rel_tol=1e-12)
    big = math.e - 1.0
    small = 1e-8 * math.sin(3.0) / 3.0
    assert abs(val[0] - big) < 1e-10
    assert abs(val[1] - small) < 1e-12 * max(abs(big), 1.0)
    assert np.all(err <= 1e-11 * max(abs(big), 1.0) + 1e-300)


def test_adaptive_gauss_budget_error():
    # a needle the panel budget cannot resolve should raise, not lie
    def f(t):
        return 1.0 / (1e-12 + (t - 0.5) ** 2)

    with pytest.raises(QuadratureError):
        adaptive_gauss(f, 0.0, 1.0, rel_tol=1e-13, max_panels=4)


def test_panelized_primitive_matches_antiderivative():
    # primitive of exp on [0, 2]: P(T) = exp(T) - 1
    prim = PanelizedPrimitive(lambda t: np.exp(t)[None, :], 2.0,
                              rel_tol=1e-12)
    T = np.linspace(0.0, 2.0, 17)
    vals = prim.eval(T)[0]
    assert np.max(np.abs(vals - (np.exp(T) - 1.0))) < 1e-11
    assert abs(prim.total[0] - (math.e ** 2 - 1.0)) < 1e-11


def test_ball_and_sphere_closed_forms():
    assert abs(ball_volume(3) - 4.0 * math.pi / 3.0) < 1e-14
    assert abs(sphere_area(3) - 4.0 * math.pi) < 1e-14
    assert abs(ball_volume(6) - math.pi ** 3 / 6.0) < 1e-14
    assert abs(sphere_area(6) - math.pi ** 3) < 1e-13
    for N in range(3, 9):
        # d/dR vol(R ball) at R=1 is the sphere area
        assert abs(N * ball_volume(N) - sphere_area(N)) < 1e-12


def test_polar_rule_total_mass():
    for N in range(3, 9):
        theta, w = polar_rule(N, 24)
        exact = math.sqrt(math.pi) * math.gamma((N - 1) / 2.0) \
            / math.gamma(N / 2.0)
        assert abs(np.sum(w) - exact) < 1e-12


def test_equatorial_design_moments():
    for n in range(2, 7):
        pts, w = equatorial_design(n)
        assert abs(np.sum(w) - 1.0) < 1e-14
        m2 = np.sum(w[:, None] * pts ** 2, axis=0)
        assert np.max(np.abs(m2 - 1.0 / n)) < 1e-14
        m4 = np.sum(w[:, None] * pts ** 4, axis=0)
        assert np.max(np.abs(m4 - 3.0 / (n * (n + 2)))) < 1e-14
        m22 = np.sum(w * pts[:, 0] ** 2 * pts[:, 1] ** 2)
        assert abs(m22 - 1.0 / (n * (n + 2))) < 1e-14
        # odd moments vanish by symmetry
        assert np.max(np.abs(np.sum(w[:, None] * pts ** 3, axis=0))) < 1e-14


def test_sphere_rule_area_and_degree():
    rng = np.random.default_rng(61)
    for N in (3, 5, 6):
        pts, w = sphere_rule(N, 20)
        assert abs(np.sum(w) - sphere_area(N)) < 1e-10 * sphere_area(N)
        # quadratic moments of the uniform measure: area / N on each axis
        m2 = np.sum(w[:, None] * pts ** 2, axis=0)
        assert np.max(np.abs(m2 - sphere_area(N) / N)) < 1e-10
        # a random centered quadratic form integrates to area * tr(A) / N
        A = rng.standard_normal((N, N))
        A = 0.5 * (A + A.T)
        q = np.einsum("pi,ij,pj->p", pts, A, pts)
        assert abs(np.sum(w * q) - sphere_area(N) * np.trace(A) / N) < 1e-9
