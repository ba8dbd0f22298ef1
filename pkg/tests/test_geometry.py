"""Geometry primitives: membership, sections, and the confocal coordinate.

The confocal coordinate lambda(x) of a point outside an ellipsoid solves
sum_j x_j^2 / (a_j^2 + lambda) = 1; the tests verify that defining equation
directly instead of trusting the solver, and check the elementary geometry
of paraboloids (sections, translations, height excess) against hand values.
"""

import json

import numpy as np
import pytest

from obstaclelab.geometry import (
    BlowdownData,
    Ellipsoid,
    EnvelopeSet,
    GeometryError,
    Paraboloid,
    ellipsoidal_coordinate,
    from_json,
    to_json,
)


def test_ellipsoid_membership_and_boundary():
    E = Ellipsoid((1.0, 2.0, 0.5))
    assert E.contains([0.0, 0.0, 0.0])
    assert not E.contains([1.0, 0.0, 0.0])
    assert E.contains([1.0, 0.0, 0.0], closed=True)
    d = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, -1.0]])
    bp = E.boundary_points(d)
    assert np.allclose(E.level(bp), 1.0, atol=1e-14)
    assert np.allclose(bp[2], [0.0, 0.0, -0.5])


def test_ellipsoid_translation():
    E = Ellipsoid((1.0, 1.0, 1.0)).translated([0.0, 0.0, 2.0])
    assert E.contains([0.0, 0.0, 2.5])
    assert not E.contains([0.0, 0.0, 0.5])


def test_confocal_coordinate_defining_equation():
    rng = np.random.default_rng(101)
    for N in (3, 4, 6, 8):
        a = np.exp(rng.uniform(-0.7, 0.7, size=N))
        E = Ellipsoid(a)
        pts = rng.uniform(1.0, 4.0, size=(40, N)) * np.sign(
            rng.standard_normal((40, N)))
        lam = ellipsoidal_coordinate(E, pts)
        res = np.sum(pts ** 2 / (a ** 2 + lam[:, None]), axis=1) - 1.0
        assert np.max(np.abs(res)) < 1e-11
        assert np.all(lam > 0)


def test_confocal_coordinate_zero_on_boundary():
    E = Ellipsoid((0.8, 1.3, 1.0, 0.9, 1.1, 1.2))
    rng = np.random.default_rng(7)
    d = rng.standard_normal((30, 6))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    bp = E.boundary_points(d)
    lam = ellipsoidal_coordinate(E, bp)
    assert np.max(np.abs(lam)) < 1e-10


def test_confocal_coordinate_scales_quadratically():
    # for the unit ball, lambda(x) = |x|^2 - 1
    E = Ellipsoid((1.0,) * 5)
    rng = np.random.default_rng(21)
    pts = rng.standard_normal((25, 5))
    pts *= (rng.uniform(1.5, 3.0, 25) / np.linalg.norm(pts, axis=1))[:, None]
    lam = ellipsoidal_coordinate(E, pts)
    assert np.max(np.abs(lam - (np.sum(pts ** 2, axis=1) - 1.0))) < 1e-11


def test_paraboloid_membership_and_sections():
    P = Paraboloid((1.0, 2.0), vertex_depth=-1.0)   # vertex at height 1
    assert P.vertex_height == 1.0
    assert not P.contains([0.0, 0.0, 0.5])
    assert P.contains([0.0, 0.0, 1.5])
    # boundary point: x1^2 / 1 = z - 1 at z = 2 means x1 = 1
    assert abs(P.height_excess([1.0, 0.0, 2.0])) < 1e-14
    sect = P.section(2.0)
    assert np.allclose(sect.semiaxes, [1.0, 2.0])
    low = P.section(0.5)
    assert low.degenerate


def test_paraboloid_translation():
    P = Paraboloid((1.0, 1.0), vertex_depth=0.0)
    up = P.translated(2.0)
    assert up.vertex_height == 2.0
    assert up.contains([0.0, 0.0, 2.5])
    assert not up.contains([0.0, 0.0, 1.5])


def test_paraboloid_roundness():
    assert Paraboloid((1.0, 1.0, 1.0)).is_round()
    assert not Paraboloid((1.0, 1.0, 1.0 + 1e-6)).is_round()


def test_envelope_sets():
    g = EnvelopeSet("growth", delta=0.5)
    assert g.contains([0.1, 0.0, 1.0])          # rho^2 = 0.01 < 1
    assert not g.contains([2.0, 0.0, 1.0])      # rho^2 = 4 > 1
    assert not g.contains([0.0, 0.0, -1.0])     # below the base plane
    w = EnvelopeSet("widened-paraboloid", gamma=2.0, mu=0.25)
    assert w.contains([1.0, 0.0, 1.0])          # rho = 1 < 2 * 1^(3/4)
    assert not w.contains([3.0, 0.0, 1.0])
    with pytest.raises(GeometryError):
        EnvelopeSet("growth", delta=1.5)
    with pytest.raises(GeometryError):
        EnvelopeSet("widened-paraboloid", gamma=-1.0, mu=0.25)


def test_blowdown_validation():
    b = BlowdownData((0.1,) * 5, 1.0 / 6.0)
    assert b.dim == 6
    assert b.is_isotropic()
    with pytest.raises(GeometryError):
        BlowdownData((0.1, 0.1, 0.1), 1.0)       # trace 0.3 != 1/2
    with pytest.raises(GeometryError):
        BlowdownData((0.25, 0.25), -1.0)         # slope must be positive
    aniso = BlowdownData((0.08, 0.09, 0.1, 0.11, 0.12), 0.2)
    assert not aniso.is_isotropic()


def test_blowdown_profile_and_gradient():
    b = BlowdownData((0.08, 0.09, 0.1, 0.11, 0.12), 0.2, constant=0.3)
    rng = np.random.default_rng(33)
    x = rng.standard_normal(6)
    q = float(np.sum(np.array(b.coefficients) * x[:5] ** 2))
    assert abs(b.quadratic(x) - q) < 1e-14
    assert abs(b.profile(x) - (q - 0.2 * x[5] - 0.3)) < 1e-14
    # gradient of the lateral quadratic by central differences
    g = b.quadratic_gradient(x)
    eps = 1e-6
    for j in range(6):
        xp = x.copy(); xp[j] += eps
        xm = x.copy(); xm[j] -= eps
        fd = (b.quadratic(xp) - b.quadratic(xm)) / (2 * eps)
        assert abs(g[j] - fd) < 1e-8


def test_json_round_trips():
    objs = [
        Ellipsoid((1.0, 2.0, 0.5), center=(0.0, 0.0, 1.0)),
        Paraboloid((1.1, 0.9, 1.0, 1.2, 0.8), vertex_depth=-0.5),
        BlowdownData((0.1,) * 5, 1.0 / 6.0, constant=0.25),
        EnvelopeSet("widened-paraboloid", gamma=1.5, mu=0.3, shift=1.0),
    ]
    for obj in objs:
        doc = to_json(obj)
        text = json.dumps(doc)                   # must be JSON-serializable
        back = from_json(json.loads(text))
        assert type(back) is type(obj)
        assert to_json(back) == doc
