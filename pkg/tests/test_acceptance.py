"""Acceptance suite: one criterion per test, one printed verdict line each.

Run with ``pytest -s tests/test_acceptance.py`` to see the verdict lines.
Every criterion states its tolerance inline; the printed detail carries the
measured quantity so a failing line is directly actionable.  Random sweeps
are seeded and deterministic.
"""

import numpy as np
import pytest

from obstaclelab.construct import construct_paraboloid, ellipsoid_sequence_term
from obstaclelab.geometry import BlowdownData, Ellipsoid
from obstaclelab.potential import (
    ellipsoid_interior_coefficients,
    ellipsoid_potential,
    homoeoid_gap,
)
from obstaclelab.solver import solve_obstacle
from obstaclelab.diagnostics import (
    Field,
    acf_scan,
    compare_and_slide,
    frequency_scan,
    hele_shaw_residual,
    lateral_derivative_field,
    potential_decay_scan,
    round_reference_field,
    SmoothBump,
    solution_field,
    subquadratic_check,
)

ISO = BlowdownData((0.1,) * 5, 1.0 / 6.0)
ANISO = BlowdownData((0.08, 0.09, 0.1, 0.11, 0.12), 0.2)


def verdict(number, name, ok, detail):
    print("[%s] criterion-%02d %s: %s"
          % ("PASS" if ok else "FAIL", number, name, detail), flush=True)
    return ok


@pytest.fixture(scope="module")
def iso():
    return construct_paraboloid(ISO)


def test_criterion_01_trace_identity():
    rng = np.random.default_rng(101)
    worst = 0.0
    for N in range(3, 9):
        for _ in range(167):
            E = Ellipsoid(np.exp(rng.uniform(-1.0, 1.0, size=N)))
            iq = ellipsoid_interior_coefficients(E)
            worst = max(worst, abs(iq.trace - 0.5))
    ok = worst <= 1e-10
    assert verdict(1, "trace-identity", ok,
                   "max |sum q - 1/2| = %.3e over 1002 ellipsoids, "
                   "N in 3..8 (tol 1e-10)" % worst)


def test_criterion_02_ball_oracle():
    worst = 0.0
    for N in range(3, 9):
        for R in (0.7, 1.0, 1.6):
            iq = ellipsoid_interior_coefficients(Ellipsoid((R,) * N))
            worst = max(worst, abs(iq.constant - R ** 2 / (2.0 * (N - 2))))
            worst = max(worst, max(abs(q - 1.0 / (2.0 * N))
                                   for q in iq.coefficients))
    ok = worst <= 1e-10
    assert verdict(2, "ball-oracle", ok,
                   "max closed-form gap = %.3e, N in 3..8, three radii "
                   "(tol 1e-10)" % worst)


def test_criterion_03_no_gravity_in_cavity():
    rng = np.random.default_rng(303)
    worst = 0.0
    for k in range(20):
        N = 3 + k % 6
        E = Ellipsoid(np.exp(rng.uniform(-0.5, 0.5, size=N)))
        pts = rng.uniform(-0.25, 0.25, size=(100, N))
        g = homoeoid_gap(E, 1.5, pts)
        worst = max(worst, float(np.max(g) - np.min(g)))
    ok = worst <= 1e-10
    assert verdict(3, "homoeoid-constancy", ok,
                   "max spread = %.3e over 20 ellipsoids x 100 points "
                   "(tol 1e-10)" % worst)


def test_criterion_04_interior_identity_and_apertures():
    worst_id = 0.0
    worst_halving = np.inf
    rng = np.random.default_rng(404)
    for b in (ISO, ANISO):
        ratios = []
        for n in (8, 16, 32, 64):
            t = ellipsoid_sequence_term(b, n)
            en = t.ellipsoid
            dirs = rng.standard_normal((20, 6))
            dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
            rad = rng.random(20) ** (1.0 / 6)
            pts = en.center + dirs * en.semiaxes * rad[:, None]
            vals = ellipsoid_potential(en, pts)
            target = b.slope * pts[:, -1] - np.sum(
                t.coefficients * pts ** 2, axis=1)
            worst_id = max(worst_id, float(np.max(np.abs(vals - target))))
            ratios.append(np.asarray(t.aperture_ratios))
        diffs = np.max(np.abs(np.diff(np.stack(ratios), axis=0)), axis=1)
        for i in range(len(diffs) - 1):
            worst_halving = min(worst_halving, diffs[i] / diffs[i + 1])
    ok = worst_id <= 1e-6 and worst_halving >= 2.8
    assert verdict(4, "interior-identity", ok,
                   "max residual %.3e (tol 1e-6); worst aperture Cauchy "
                   "halving %.2f (>= 2.8, consistent with 1/n^2)"
                   % (worst_id, worst_halving))


def test_criterion_05_solution_self_consistency(iso):
    psol = iso
    P = psol.paraboloid
    vz = P.vertex_height
    rng = np.random.default_rng(505)

    # nonnegativity over the sampling box
    box = np.zeros((4000, 6))
    box[:, :5] = rng.uniform(-2.2, 2.2, (4000, 5))
    box[:, 5] = rng.uniform(vz - 1.0, vz + 1.5, 4000)
    min_u = float(np.min(psol.u(box)))

    # vanishing on the body
    body = np.zeros((400, 6))
    zs = rng.uniform(vz + 1e-3, vz + 1.4, 400)
    dirs = rng.standard_normal((400, 5))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    scale = rng.random(400) ** 0.2
    for k, z in enumerate(zs):
        body[k, :5] = dirs[k] * P.section(z).semiaxes * scale[k]
        body[k, 5] = z
    max_body = float(np.max(np.abs(psol.u(body))))

    # discrete Laplacian = 1 outside, second order in the step
    h_max = 0.05
    pts = []
    rng2 = np.random.default_rng(77)
    while len(pts) < 30:
        x = np.zeros(6)
        x[:5] = rng2.uniform(-1.5, 1.5, 5)
        x[5] = rng2.uniform(vz - 1.0, vz + 1.2)
        stencil = [x.copy()]
        for i in range(6):
            for s in (1.0, -1.0):
                y = x.copy()
                y[i] += s * h_max
                stencil.append(y)
        if np.max(P.height_excess(np.array(stencil))) <= -0.06:
            pts.append(x)
    pts = np.array(pts)
    errs = []
    for h in (0.05, 0.025, 0.0125):
        lap = -12.0 * psol.u(pts)
        for i in range(6):
            e = np.zeros(6)
            e[i] = h
            lap += psol.u(pts + e) + psol.u(pts - e)
        errs.append(float(np.max(np.abs(lap / h ** 2 - 1.0))))
    ratios = [errs[i] / errs[i + 1] for i in range(2)]

    ok = (min_u >= -1e-8 and max_body <= 1e-6
          and all(2.5 <= r <= 6.0 for r in ratios))
    assert verdict(5, "self-consistency", ok,
                   "min u = %.2e (>= -1e-8); max |u| on body = %.2e "
                   "(<= 1e-6); FD Laplacian errors %s halving %s "
                   "(each in [2.5, 6])"
                   % (min_u, max_body,
                      ["%.2e" % e for e in errs],
                      ["%.2f" % r for r in ratios]))


def test_criterion_06_frequency_suite(iso):
    radii = (0.25, 0.5, 1.0, 2.0, 4.0)
    u = solution_field(iso)
    rep = frequency_scan(u, ISO, radii)

    # invariance: add a lateral harmonic quadratic to both value and gradient
    c1, c2 = 0.3, 0.2

    def val(pts):
        pts = np.asarray(pts, dtype=float)
        return (u.value(pts) + c1 * pts[..., 0] * pts[..., 1]
                + c2 * (pts[..., 2] ** 2 - pts[..., 3] ** 2))

    def grad(pts):
        pts = np.asarray(pts, dtype=float)
        g = np.array(u.gradient(pts))
        g[..., 0] += c1 * pts[..., 1]
        g[..., 1] += c1 * pts[..., 0]
        g[..., 2] += 2.0 * c2 * pts[..., 2]
        g[..., 3] -= 2.0 * c2 * pts[..., 3]
        return g

    rep2 = frequency_scan(Field(val, grad, dim=6), ISO, radii)
    eff = max(rep.tol_quad, rep2.tol_quad)
    shift = max(abs(a - b) for a, b in zip(rep.values, rep2.values))
    ok = (rep.nonpositive and rep.nondecreasing and shift <= eff)
    assert verdict(6, "frequency-suite", ok,
                   "values %s nonpositive=%s nondecreasing=%s within "
                   "quadrature tol %.2e; harmonic-quadratic shift %.2e"
                   % (["%.3e" % v for v in rep.values], rep.nonpositive,
                      rep.nondecreasing, eff, shift))


def test_criterion_07_decay_suite(iso):
    dec = potential_decay_scan(iso, 7.0 / 20.0)
    sq = subquadratic_check(iso)
    ok = (dec.ridge_decreasing and dec.off_axis_decreasing and sq.decreasing)
    assert verdict(7, "far-field-decay", ok,
                   "ridge %s off-axis %s both strictly decreasing=%s; "
                   "subquadratic ratios %s decreasing=%s"
                   % (["%.2e" % v for v in dec.ridge_values],
                      ["%.2e" % v for v in dec.off_axis_values],
                      dec.ridge_decreasing and dec.off_axis_decreasing,
                      ["%.2e" % v for v in sq.max_ratios], sq.decreasing))


def boundary_of(psol):
    def bc(rho, z):
        rho = np.asarray(rho, dtype=float)
        z = np.asarray(z, dtype=float)
        pts = np.zeros(np.broadcast(rho, z).shape + (6,))
        pts[..., 0] = rho
        pts[..., -1] = z
        return psol.u(pts)
    return bc


def test_criterion_08_comparison_and_sliding(iso):
    psol = iso
    vz = psol.paraboloid.vertex_height
    h = 1.0 / 64
    gs = solve_obstacle(6, boundary_of(psol), 1.5, (vz - 0.75, vz + 1.25), h,
                        tol=1e-9)
    rep = compare_and_slide(gs, psol)
    ok = (rep.gaps_ok and rep.coincidence_ok and rep.untested == []
          and abs(rep.lambda_bar) < 1e-12)
    assert verdict(8, "comparison-sliding", ok,
                   "shifts %s gaps %s (tol %.2e) ok=%s; coincidence "
                   "symdiff %.4f <= %.4f ok=%s"
                   % (rep.lambdas, ["%.1e" % g for g in rep.max_gaps],
                      rep.tolerance, rep.gaps_ok, rep.symdiff_fraction,
                      rep.symdiff_tol, rep.coincidence_ok))


def test_criterion_09_solver_convergence(iso):
    psol = iso
    vz = psol.paraboloid.vertex_height
    bc = boundary_of(psol)
    solutions = {}
    for h in (1.0 / 16, 1.0 / 32, 1.0 / 64):
        solutions[h] = solve_obstacle(6, bc, 1.5, (vz - 0.75, vz + 1.25), h,
                                      tol=1e-10)
    coarse = solutions[1.0 / 16]
    ir = np.arange(1, len(coarse.rho) - 1)
    iz = np.arange(1, len(coarse.z) - 1)
    R, Z = np.meshgrid(coarse.rho[ir], coarse.z[iz], indexing="ij")
    pts = np.zeros(R.shape + (6,))
    pts[..., 0] = R
    pts[..., -1] = Z
    ref = round_reference_field(psol).value(pts)
    errs = []
    for h in (1.0 / 16, 1.0 / 32, 1.0 / 64):
        gs = solutions[h]
        k = int(round((1.0 / 16) / h))
        sub = gs.u[np.ix_(ir * k, iz * k)]
        errs.append(float(np.max(np.abs(sub - ref))))
    ratios = [errs[i] / errs[i + 1] for i in range(2)]
    ok = all(2.5 <= r <= 6.5 for r in ratios)
    assert verdict(9, "solver-convergence", ok,
                   "errors vs direct reference %s at h = 1/16, 1/32, 1/64; "
                   "halving ratios %s (each in [2.5, 6.5], ~4x)"
                   % (["%.3e" % e for e in errs],
                      ["%.2f" % r for r in ratios]))


def test_criterion_10_moving_source_residual(iso):
    vz = iso.paraboloid.vertex_height
    bumps = [
        SmoothBump(0.35, vz + 0.05, vz + 0.55, 0.1, 0.9),
        SmoothBump(0.50, vz + 0.35, vz + 0.85, 0.1, 0.9),
        SmoothBump(0.40, vz + 0.75, vz + 1.25, 0.1, 0.9),
        SmoothBump(0.30, vz + 0.20, vz + 0.70, 0.1, 0.9),
        SmoothBump(0.45, vz + 0.55, vz + 1.05, 0.1, 0.9),
    ]
    rep = hele_shaw_residual(iso, 1.0, bumps)
    flat = [r for row in rep.ratios for r in row]
    ok = all(r >= 2.0 for r in flat)
    assert verdict(10, "moving-source-residual", ok,
                   "refinement ratios %s over 5 bumps at h = 1/16 -> 1/32 "
                   "(each >= 2, ~4x nominal)"
                   % ["%.2f" % r for r in flat])


def test_criterion_11_two_phase_monotonicity(iso):
    rep = acf_scan(lateral_derivative_field(iso), (0.5, 1.0, 2.0), 6)
    ok = rep.nondecreasing and all(v >= 0 for v in rep.values)
    assert verdict(11, "two-phase-monotonicity", ok,
                   "phi at r = 0.5, 1, 2: %s nondecreasing=%s"
                   % (["%.4e" % v for v in rep.values], rep.nondecreasing))
