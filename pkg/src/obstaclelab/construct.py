"""Paraboloid solutions of the obstacle problem built from ellipsoid sequences.

The construction: given blow-down data p(x') = sum_j b_j x_j^2 (trace 1/2),
slope b_N > 0 and constant b_{N+1}, form for each even step n the quadratic

    q^n(x) = (1 - 2/n^2) p(x') + x_N^2 / n^2,      c_n = (b_N n / 2)^2,

fit the unique centered ellipsoid E~ whose interior potential is
c_n - q^n (coefficients q^n sum to 1/2, so such an ellipsoid exists), and
shift it up by tau_n = b_N n^2 / 2.  The shifted ellipsoid E^n then satisfies
the pointwise identity

    V_{E^n}(x) = b_N x_N - q^n(x)      for x in E^n,

exactly (the shift turns the centered quadratic into the linear term), so

    u_n(x) = q^n(x) - b_N x_N + V_{E^n}(x)

vanishes on E^n, equals the obstacle-problem shape of E^n, and as n grows the
E^n converge to a paraboloid P with the prescribed blow-down.  Interior
errors are exactly proportional to 1/n^2, which justifies Richardson
extrapolation of potentials, of gradients, and of the shape parameters
tau_n / B_{j,n}^2 -> 2 / a_j^2.

A nonzero constant b_{N+1} only translates the picture: the solution with
constant b_{N+1} is the zero-constant solution slid along the axis by
t = -b_{N+1}/b_N, and the expansion constant of the solution is
c_P = -b_{N+1}.

The reverse direction (paraboloid -> blow-down data) is closed form: the
quadratic coefficients are the interior coefficients of the sectional
ellipsoid with semiaxes a' one unit above the vertex (they are scale
invariant), and the slope is that ellipsoid's interior constant in dimension
N-1 (degree-2 homogeneous, so it carries the scale).  For round sections of
radius gamma in R^N this gives slope = gamma^2 / (2 (N-3)).
"""

from __future__ import annotations

import math
import weakref
from dataclasses import dataclass, field

import numpy as np

from .geometry import BlowdownData, Ellipsoid, GeometryError, Paraboloid
from .potential import (PotentialToleranceError, UnsupportedDimensionError,
                        ellipsoid_interior_coefficients, ellipsoid_potential,
                        ellipsoid_potential_gradient,
                        ellipsoid_potential_hessian)
from .quadrature import adaptive_gauss


class FitError(RuntimeError):
    pass


class ConstructionError(RuntimeError):
    """Sequence extraction did not settle; carries the convergence table."""

    def __init__(self, message, table=None):
        super().__init__(message)
        self.table = table


# ---------------------------------------------------------------------------
# inverse spectral problem: coefficients -> ellipsoid

def _shape_coefficients(semiaxes):
    """Interior (c, q) of the ellipsoid with the given semiaxes, fast path.

    Same integrals as potential._AxisIntegrals but only the full range is
    needed, so a one-shot adaptive rule avoids building primitives for every
    Newton candidate.
    """
    a2 = np.asarray(semiaxes, dtype=float) ** 2
    N = a2.shape[0]
    m = float(np.min(a2))
    d = a2 - m
    t_max = m ** -0.5

    def integrand(t):
        t2 = t * t
        fac = 1.0 + d[:, None] * t2[None, :]
        base = 2.0 / np.sqrt(np.prod(fac, axis=0))
        rows = np.empty((N + 1, t.shape[0]))
        rows[0] = base * t ** (N - 3)
        rows[1:] = base * t ** (N - 1) / fac
        return rows

    vals, _ = adaptive_gauss(integrand, 0.0, t_max, rel_tol=1e-14, order=16)
    pref = float(np.prod(np.sqrt(a2))) / 4.0
    return pref * float(vals[0]), pref * vals[1:]


def _newton_shape(q_target, shape0, tol=1e-13, max_iter=100, fd_step=1e-6):
    """Solve q(shape) = q_target with shape_N frozen at 1 (scale fixed).

    All N coefficients enter the residual in relative form and the Newton
    step is least squares over the N-1 free log-semiaxes.  Matching every
    component relatively matters: the sequence construction sends the axis
    coefficient to zero like 1/n^2, and pinning it only through the trace
    complement of the others would leave the long semiaxis with a relative
    error of order n^2 * tol, which the vertex extraction cannot afford.
    """
    N = q_target.shape[0]
    u = np.log(shape0[:N - 1])

    def residual(uvec):
        axes = np.append(np.exp(uvec), 1.0)
        _, q = _shape_coefficients(axes)
        return q / q_target - 1.0

    r = residual(u)
    for _ in range(max_iter):
        if float(np.max(np.abs(r))) <= tol:
            break
        jac = np.empty((N, N - 1))
        for k in range(N - 1):
            up = u.copy()
            um = u.copy()
            up[k] += fd_step
            um[k] -= fd_step
            jac[:, k] = (residual(up) - residual(um)) / (2.0 * fd_step)
        step, _, rank, _ = np.linalg.lstsq(jac, r, rcond=None)
        if rank < N - 1:
            raise FitError("singular Jacobian in ellipsoid fit")
        # damped update: halve until the residual actually drops
        lam = 1.0
        for _ in range(25):
            u_new = u - lam * step
            r_new = residual(u_new)
            if float(np.max(np.abs(r_new))) < float(np.max(np.abs(r))):
                break
            lam *= 0.5
        else:
            raise FitError("ellipsoid fit stalled (damping exhausted)")
        u, r = u_new, r_new
    else:
        raise FitError("ellipsoid fit: no convergence in %d iterations"
                       % max_iter)
    return np.append(np.exp(u), 1.0)


def fit_ellipsoid(coefficients, constant, trace_tol=1e-12,
                  agreement_tol=1e-7, multi_start=True):
    """Centered ellipsoid whose interior potential is constant - sum q_j x_j^2.

    Works in log-semiaxis variables with the last axis frozen at 1 during the
    shape solve (the coefficients are scale invariant), then rescales by
    beta = sqrt(constant / fitted constant).  Two Newton runs from distinct
    starting guesses must agree within ``agreement_tol`` per semiaxis.
    """
    q = np.asarray(coefficients, dtype=float)
    N = q.shape[0]
    if N < 3:
        raise UnsupportedDimensionError("ellipsoid fit needs N >= 3")
    if np.any(q <= 0) or not np.all(np.isfinite(q)):
        raise FitError("target coefficients must be positive and finite")
    if abs(float(np.sum(q)) - 0.5) > trace_tol:
        raise FitError("target coefficients must sum to 1/2 within %g, got %.17g"
                       % (trace_tol, float(np.sum(q))))
    if not (constant > 0 and np.isfinite(constant)):
        raise FitError("target constant must be positive and finite")
    if float(np.max(q)) / float(np.min(q)) > 1e6:
        raise FitError("anisotropy beyond 1e3 per axis is rejected")

    # q_j ~ 1/a_j^2 to leading order, so start from sqrt(q_N / q_j)
    shape0 = np.sqrt(q[-1] / q)
    shape = _newton_shape(q, shape0)
    if multi_start:
        bump = 1.0 + 0.2 * np.cos(np.arange(N, dtype=float))
        shape_b = _newton_shape(q, shape0 * bump)
        if float(np.max(np.abs(shape - shape_b))) > agreement_tol:
            raise FitError("multi-start fits disagree by %.3e"
                           % float(np.max(np.abs(shape - shape_b))))
    c_hat, _ = _shape_coefficients(shape)
    beta = math.sqrt(constant / c_hat)
    return Ellipsoid(beta * shape)


def sectional_ellipsoid(blowdown):
    """Cross-section ellipsoid of the limit paraboloid, with its scale.

    Fits the (N-1)-dimensional ellipsoid whose interior potential equals
    slope - p(x'); its semiaxes are exactly the sectional semiaxes of the
    paraboloid the sequence converges to.  Returns (ellipsoid, scale) where
    scale is the dilation applied to the unit-normalized shape.
    """
    e = fit_ellipsoid(blowdown.coefficients, blowdown.slope)
    # the shape solve freezes the last axis at 1, so the rescale factor is
    # exactly the last fitted semiaxis
    scale = float(e.semiaxes[-1])
    return e, scale


def blowdown_from_paraboloid(paraboloid):
    """Closed-form blow-down data of a paraboloid (constant left at zero).

    b_j are the interior coefficients of the sectional ellipsoid and the
    slope is its interior constant; both come from one coefficient solve in
    dimension N-1.
    """
    section = Ellipsoid(paraboloid.sectional_semiaxes)
    iq = ellipsoid_interior_coefficients(section)
    return BlowdownData(iq.coefficients, iq.constant)


# ---------------------------------------------------------------------------
# the sequence

@dataclass(frozen=True, eq=False)
class EllipsoidSequenceTerm:
    """One step of the construction: fitted, shifted ellipsoid plus records."""

    n: int
    coefficients: np.ndarray          # q^n over all N coordinates
    constant: float                   # c_n
    shift: float                      # tau_n
    ellipsoid: Ellipsoid              # E^n, center tau_n e_N
    identity_residual: float          # max | V - (b_N x_N - q^n) | on samples

    @property
    def semiaxes(self):
        return self.ellipsoid.semiaxes

    @property
    def top_ratio(self):
        """tau_n / B_{N,n}; tends to 1 as the top of E^n recedes."""
        return self.shift / float(self.ellipsoid.semiaxes[-1])

    @property
    def aperture_ratios(self):
        """tau_n / B_{j,n}^2 for the cross axes; tends to 2/a_j^2."""
        return self.shift / self.ellipsoid.semiaxes[:-1] ** 2


def ellipsoid_sequence_term(blowdown, n, identity_tol=1e-6, n_check=20,
                            seed=1234):
    """Build E^n and verify the interior identity at sampled points."""
    if n < 2:
        raise ValueError("sequence steps need n >= 2")
    N = blowdown.dim
    qn = np.append((1.0 - 2.0 / n ** 2) * blowdown.coefficients, 1.0 / n ** 2)
    cn = (blowdown.slope * n / 2.0) ** 2
    tau = blowdown.slope * n ** 2 / 2.0
    core = fit_ellipsoid(qn, cn)
    shift_vec = np.zeros(N)
    shift_vec[-1] = tau
    en = core.translated(shift_vec)
    rng = np.random.default_rng(seed + n)
    dirs = rng.standard_normal((n_check, N))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    radii = rng.random(n_check) ** (1.0 / N)
    pts = en.center + dirs * en.semiaxes * radii[:, None]
    vals = ellipsoid_potential(en, pts)
    target = blowdown.slope * pts[:, -1] - np.sum(qn * pts ** 2, axis=1)
    res = float(np.max(np.abs(vals - target)))
    if res > identity_tol:
        raise ConstructionError(
            "step %d interior identity residual %.3e exceeds %g"
            % (n, res, identity_tol))
    return EllipsoidSequenceTerm(n, qn, cn, tau, en, res)


def _richardson(values, ns):
    """Neville extrapolation to n = infinity in the variable 1/n.

    ``values`` has shape (T, ...) matching the schedule ``ns``.  Returns
    (limit, bracket) where the bracket is the difference between the last two
    diagonal entries.  Sequence quantities here converge with mixed powers of
    1/n (interior potentials are pure 1/n^2, but shape parameters and
    exterior values carry genuine 1/n terms), so the extrapolation variable
    is 1/n; polynomial stages then remove whichever powers are present.
    Measured against far-schedule references, the bracket tracks the true
    error to within a factor of order one for both shape parameters.
    """
    vals = [np.asarray(v, dtype=float) for v in values]
    T = len(vals)
    if T == 1:
        return vals[0], np.full_like(vals[0], np.inf)
    x = np.array([1.0 / float(n) for n in ns])
    R = list(vals)
    prev_diag = None
    for k in range(1, T):
        prev_diag = R[T - 1]
        for i in range(T - 1, k - 1, -1):
            R[i] = R[i] + (R[i] - R[i - 1]) * x[i] / (x[i - k] - x[i])
    return R[T - 1], np.abs(R[T - 1] - prev_diag)


class SequencePotential:
    """Extrapolated potential of the ellipsoid sequence.

    ``axis_shift`` slides the raw (zero-constant) limit along e_N, which is
    how a nonzero blow-down constant enters.

    The terms are not nested: tops and cross sections grow with n but the
    bottoms ascend toward the limiting vertex, so each E^n pokes slightly
    below its successor.  A point can therefore sit inside some terms and
    outside others.  In a thin band near the vertex that mixes the interior
    and exterior branches of the per-term potentials, which are only C^1
    across each boundary; extrapolation accuracy there and far above the
    vertex degrades from machine precision to roughly the bracket estimate,
    which is why evaluations report brackets instead of promising exactness.
    One further caveat the bracket cannot see: a point in the sliver
    between the largest term's boundary and the limit body looks interior
    to every computed term, so the extrapolation returns the interior limit
    even though the true point is exterior; the sliver width shrinks like
    1/n_max and the direct-quadrature reference route is the honest check
    there.  The containment margin of each term in its successor is
    measured on sampled boundary points at build time and recorded, never
    assumed.
    """

    def __init__(self, terms, axis_shift=0.0, n_probe_dirs=128):
        if not terms:
            raise ConstructionError("sequence potential needs at least one term")
        self.terms = sorted(terms, key=lambda t: t.n)
        self.ns = [t.n for t in self.terms]
        self.axis_shift = float(axis_shift)
        N = self.terms[0].ellipsoid.dim
        rng = np.random.default_rng(987)
        dirs = rng.standard_normal((n_probe_dirs, N))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        margin = 0.0
        for small, big in zip(self.terms[:-1], self.terms[1:]):
            pts = small.ellipsoid.boundary_points(dirs)
            margin = max(margin, float(np.max(big.ellipsoid.level(pts))) - 1.0)
        self.nest_margin = margin
        self.nested = margin <= 1e-10

    def _shifted(self, x):
        x = np.asarray(x, dtype=float)
        if self.axis_shift == 0.0:
            return x
        y = x.copy()
        y[..., -1] -= self.axis_shift
        return y

    def _extrapolate(self, per_term, tol, return_diagnostics, quantity):
        limit, bracket = _richardson(per_term, self.ns)
        worst = float(np.max(bracket)) if bracket.size else 0.0
        if tol is not None and worst > tol:
            raise PotentialToleranceError(
                "%s extrapolation bracket %.3e exceeds tol %g"
                % (quantity, worst, tol), bracket=bracket)
        if return_diagnostics:
            return limit, {"bracket": bracket, "terms": np.asarray(per_term),
                           "schedule": list(self.ns), "nested": self.nested}
        return limit

    def value(self, x, tol=None, return_diagnostics=False):
        y = self._shifted(x)
        per_term = [ellipsoid_potential(t.ellipsoid, y) for t in self.terms]
        return self._extrapolate(per_term, tol, return_diagnostics,
                                 "potential")

    def gradient(self, x, tol=None, return_diagnostics=False):
        y = self._shifted(x)
        per_term = [ellipsoid_potential_gradient(t.ellipsoid, y)
                    for t in self.terms]
        return self._extrapolate(per_term, tol, return_diagnostics,
                                 "gradient")

    def hessian(self, x, tol=None, return_diagnostics=False):
        y = self._shifted(x)
        per_term = [ellipsoid_potential_hessian(t.ellipsoid, y)
                    for t in self.terms]
        return self._extrapolate(per_term, tol, return_diagnostics,
                                 "hessian")


@dataclass(frozen=True, eq=False)
class ParaboloidSolution:
    """Obstacle-problem solution whose coincidence set is a paraboloid.

    u(x) = p(x') - slope x_N - constant + V_P(x), where V_P is the sequence
    potential.  u vanishes on the closed paraboloid, is nonnegative, and has
    Laplacian 1 outside.  ``expansion_constant`` is the constant term c_P in
    the far-field expansion u ~ p - slope x_N + c_P.
    """

    paraboloid: Paraboloid
    blowdown: BlowdownData
    sequence: SequencePotential
    table: list = field(default_factory=list)

    @property
    def terms(self):
        return self.sequence.terms

    @property
    def expansion_constant(self):
        return -self.blowdown.constant

    def potential(self, x, tol=None, return_diagnostics=False):
        return self.sequence.value(x, tol=tol,
                                   return_diagnostics=return_diagnostics)

    def potential_gradient(self, x, tol=None):
        return self.sequence.gradient(x, tol=tol)

    def potential_hessian(self, x, tol=None):
        return self.sequence.hessian(x, tol=tol)

    def u(self, x, tol=None):
        x = np.asarray(x, dtype=float)
        return (self.blowdown.profile(x)
                + self.sequence.value(x, tol=tol))

    def u_gradient(self, x, tol=None):
        x = np.asarray(x, dtype=float)
        g = self.blowdown.quadratic_gradient(x)
        g[..., -1] -= self.blowdown.slope
        return g + self.sequence.gradient(x, tol=tol)

    def u_hessian(self, x, tol=None):
        x = np.asarray(x, dtype=float)
        N = self.blowdown.dim
        base = np.zeros((N, N))
        idx = np.arange(N - 1)
        base[idx, idx] = 2.0 * self.blowdown.coefficients
        return base + self.sequence.hessian(x, tol=tol)


def aperture_margin(term, blowdown, n_dirs=256, seed=5551):
    """max of p(x') - 2 slope x_N over sampled boundary points of E^n.

    Nonpositive means E^n stays inside the aperture region
    { p(x') <= 2 b_N x_N }, the containment the construction relies on.
    """
    rng = np.random.default_rng(seed)
    N = term.ellipsoid.dim
    dirs = rng.standard_normal((n_dirs, N))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    pts = term.ellipsoid.boundary_points(dirs)
    p = np.sum(blowdown.coefficients * pts[:, :-1] ** 2, axis=1)
    return float(np.max(p - 2.0 * blowdown.slope * pts[:, -1]))


def construct_paraboloid(blowdown, schedule=None, ratio_tol=1e-4,
                         vertex_tol=1e-3, identity_tol=1e-6,
                         sectional_tol=5e-4):
    """Run the sequence and extract the limit paraboloid.

    The cross semiaxes come from extrapolating tau_n / B_{j,n}^2 -> 2/a_j^2
    (a 1/n^2 series) and the vertex from tau_n - B_{N,n} (a genuine 1/n
    series); both are extrapolated over the whole schedule and must settle
    within their tolerances, measured by the extrapolation bracket, or a
    ConstructionError carrying the table is raised.  The cross semiaxes are
    also checked against the closed-form sectional ellipsoid, an independent
    route that must agree within ``sectional_tol``.
    """
    if blowdown.dim < 6:
        raise UnsupportedDimensionError(
            "the sequence construction needs N >= 6, got %d" % blowdown.dim)
    if schedule is None:
        schedule = (8, 16, 32, 64, 128)
    ns = sorted(int(n) for n in schedule)
    if len(ns) < 3:
        raise ValueError("schedule needs at least three steps")
    terms = [ellipsoid_sequence_term(blowdown, n, identity_tol=identity_tol)
             for n in ns]

    table = []
    for t in terms:
        table.append({
            "n": t.n,
            "semiaxes": t.semiaxes.tolist(),
            "top_ratio": t.top_ratio,
            "aperture_ratios": t.aperture_ratios.tolist(),
            "identity_residual": t.identity_residual,
            "aperture_margin": aperture_margin(t, blowdown),
        })

    ratios = np.stack([t.aperture_ratios for t in terms])     # (T, N-1)
    verts = np.array([[t.shift - float(t.semiaxes[-1])] for t in terms])
    rstar, rbr = _richardson(list(ratios), ns)
    vstar, vbr = _richardson(list(verts), ns)
    vstar, vbr = float(vstar[0]), float(vbr[0])
    scale = max(1.0, float(np.max(np.abs(rstar))))
    if float(np.max(rbr)) > ratio_tol * scale:
        raise ConstructionError(
            "aperture extrapolation not settled: bracket %.3e > tol %g"
            % (float(np.max(rbr)), ratio_tol), table=table)
    if vbr > vertex_tol * max(1.0, abs(vstar)):
        raise ConstructionError(
            "vertex extrapolation not settled: bracket %.3e > tol %g"
            % (vbr, vertex_tol), table=table)
    a_cross = np.sqrt(2.0 / rstar)
    axis_shift = -blowdown.constant / blowdown.slope
    vertex_depth = -vstar + blowdown.constant / blowdown.slope
    paraboloid = Paraboloid(a_cross, vertex_depth)
    seq = SequencePotential(terms, axis_shift=axis_shift)
    # independent route: the sectional ellipsoid fit must land on the same
    # cross semiaxes
    sect, _ = sectional_ellipsoid(
        BlowdownData(blowdown.coefficients, blowdown.slope))
    sect_gap = float(np.max(np.abs(sect.semiaxes - a_cross)))
    if sect_gap > sectional_tol:
        raise ConstructionError(
            "sequence cross semiaxes disagree with the sectional fit by %.3e"
            % sect_gap, table=table)
    table.append({"n": "limit", "semiaxes": a_cross.tolist(),
                  "vertex_depth": vertex_depth,
                  "ratio_bracket": float(np.max(rbr)),
                  "vertex_bracket": vbr,
                  "sectional_gap": sect_gap})
    return ParaboloidSolution(paraboloid, blowdown, seq, table)


_solution_cache = weakref.WeakKeyDictionary()


def solution_for_paraboloid(paraboloid, schedule=None):
    """Solution whose coincidence set is (exactly) the given paraboloid.

    Inverse route: closed-form blow-down data from the sectional ellipsoid,
    raw construction, then the axis shift that puts the vertex at the
    requested depth.  The construction's own vertex estimate is recorded in
    the table; the stored paraboloid is the caller's, exactly.
    """
    key = (paraboloid, tuple(schedule) if schedule else None)
    cached = _solution_cache.get(paraboloid)
    if cached is not None and cached[0] == key[1]:
        return cached[1]
    base = blowdown_from_paraboloid(paraboloid)
    raw = construct_paraboloid(base, schedule=schedule)
    # slide the raw solution up by t so the vertex lands exactly where
    # requested (translating by t turns vertex_depth into raw_depth - t);
    # the slide sets the blow-down constant to -slope * t
    t = raw.paraboloid.vertex_depth - paraboloid.vertex_depth
    vertex_gap = t
    final_b = BlowdownData(base.coefficients, base.slope,
                           constant=-base.slope * t)
    seq = SequencePotential(raw.sequence.terms,
                            axis_shift=raw.sequence.axis_shift + t)
    table = raw.table + [{"n": "shift", "axis_shift": t,
                          "vertex_gap": vertex_gap}]
    sol = ParaboloidSolution(paraboloid, final_b, seq, table)
    _solution_cache[paraboloid] = (key[1], sol)
    return sol
