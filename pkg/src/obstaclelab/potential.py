"""Newtonian potentials of ellipsoids and paraboloids.

The potential used throughout is

    V_M(x) = alpha_N * int_M |x - y|^(2-N) dy,
    alpha_N = 1 / (N (N-2) omega_N),   omega_N = |unit ball in R^N|,

normalized so that Delta V_M = -1 inside M and V_M is harmonic outside.

For a solid ellipsoid with semiaxes a_1..a_N the potential is the classical
one-dimensional integral over the confocal family: with
g(s) = prod_k sqrt(a_k^2 + s) and lambda(x) the ellipsoidal coordinate
(0 inside),

    V_E(x) = (prod a_k / 4) * [ I_c(lambda) - sum_j (x_j - c_j)^2 I_j(lambda) ],
    I_c(L) = int_L^inf ds / g(s),
    I_j(L) = int_L^inf ds / ((a_j^2 + s) g(s)).

Inside, this is the quadratic c - sum q_j (x_j - c_j)^2 with
q_j = (prod a / 4) I_j(0) and c = (prod a / 4) I_c(0); the q_j always sum to
1/2 (the integrand identity sum_j 1/((a_j^2+s) g) = -2 (1/g)' telescopes).

The improper integrals are mapped to a finite interval by t = (s + m)^(-1/2)
with m = min a_k^2, which gives C-infinity integrands on [0, (L+m)^(-1/2)]
for every N >= 3:

    I_c(L) = int_0^T 2 t^(N-3) prod_k (1 + d_k t^2)^(-1/2) dt,
    I_j(L) = int_0^T 2 t^(N-1) (1 + d_j t^2)^(-1) prod_k (1 + d_k t^2)^(-1/2) dt,

with d_k = a_k^2 - m and T = (L + m)^(-1/2).  They are evaluated through a
``PanelizedPrimitive`` built once per ellipsoid, so batches of points (each
with its own lambda) cost one Legendre-series evaluation per point.

Paraboloid potentials are delegated to the ellipsoid-sequence construction in
``construct`` (bounded regions) or computed by direct slab quadrature
(far field, round sections only), with an analytic bound for the truncated
tail mass.  A stratified Monte-Carlo route is kept as an independent check.
"""

from __future__ import annotations

import math
import weakref
from dataclasses import dataclass

import numpy as np

from .geometry import Ellipsoid, Paraboloid, ellipsoidal_coordinate
from .quadrature import PanelizedPrimitive, ball_volume, gauss_legendre, sphere_area


class PotentialToleranceError(RuntimeError):
    """Requested tolerance not met; carries the last bracket achieved."""

    def __init__(self, message, bracket=None):
        super().__init__(message)
        self.bracket = bracket


class UnsupportedDimensionError(ValueError):
    pass


class DegenerateSamplerError(ValueError):
    pass


def alpha_coefficient(N):
    """Normalization alpha_N making Delta V = -1 on the body."""
    if N < 3:
        raise UnsupportedDimensionError("potentials need N >= 3, got %d" % N)
    return 1.0 / (N * (N - 2) * ball_volume(N))


@dataclass(frozen=True)
class InteriorQuadratic:
    """Interior form V_E = constant - sum coefficients_j (x_j - center_j)^2."""

    constant: float
    coefficients: np.ndarray
    center: np.ndarray

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return self.constant - np.sum(
            self.coefficients * (x - self.center) ** 2, axis=-1)

    @property
    def trace(self):
        return float(np.sum(self.coefficients))


# ---------------------------------------------------------------------------
# ellipsoid axis integrals

class _AxisIntegrals:
    """I_c(lambda) and I_j(lambda) for one ellipsoid, batch-evaluable."""

    def __init__(self, semiaxes, rel_tol=1e-14):
        a2 = np.asarray(semiaxes, dtype=float) ** 2
        self.N = a2.shape[0]
        self.m = float(np.min(a2))
        self.d = a2 - self.m
        self.t_max = self.m ** -0.5
        dmax = float(np.max(self.d))
        # geometric seed ladder reaching below the sharpest feature 1/sqrt(dmax)
        if dmax > 0:
            levels = int(np.clip(math.ceil(
                math.log2(self.t_max * math.sqrt(dmax))) + 3, 4, 48))
        else:
            levels = 4
        seed = self.t_max / 2.0 ** np.arange(1, levels + 1)
        N, d = self.N, self.d

        def integrand(t):
            t2 = t * t
            fac = 1.0 + d[:, None] * t2[None, :]            # (N, k)
            base = 2.0 / np.sqrt(np.prod(fac, axis=0))
            rows = np.empty((N + 1, t.shape[0]))
            rows[0] = base * t ** (N - 3)
            rows[1:] = base * t ** (N - 1) / fac
            return rows

        self._prim = PanelizedPrimitive(integrand, self.t_max,
                                        rel_tol=rel_tol, seed_edges=seed)

    def at_zero(self):
        """(I_c(0), I_j(0)) from the full primitives (no clipping noise)."""
        tot = self._prim.total
        return float(tot[0]), tot[1:].copy()

    def eval(self, lam):
        """(I_c, I_j) at a batch of lambda values; shapes (B,), (N, B)."""
        lam = np.asarray(lam, dtype=float)
        T = (lam + self.m) ** -0.5
        vals = self._prim.eval(T)
        return vals[0], vals[1:]


_integral_cache = weakref.WeakKeyDictionary()


def _axis_integrals(ellipsoid):
    entry = _integral_cache.get(ellipsoid)
    if entry is None:
        entry = _AxisIntegrals(ellipsoid.semiaxes)
        _integral_cache[ellipsoid] = entry
    return entry


def ellipsoid_interior_coefficients(ellipsoid, trace_tol=1e-10):
    """Interior quadratic of the ellipsoid potential.

    The coefficients must sum to 1/2 (that is Delta V = -1); the computed sum
    is checked against ``trace_tol`` and a tolerance error is raised if the
    quadrature ever failed to deliver it.
    """
    integ = _axis_integrals(ellipsoid)
    pref = float(np.prod(ellipsoid.semiaxes)) / 4.0
    ic, ij = integ.at_zero()
    q = pref * ij
    c = pref * ic
    gap = abs(float(np.sum(q)) - 0.5)
    if gap > trace_tol:
        raise PotentialToleranceError(
            "interior coefficient trace off by %.3e (tol %.3e)"
            % (gap, trace_tol), bracket=gap)
    return InteriorQuadratic(c, q, ellipsoid.center.copy())


def _prepare_points(ellipsoid, x):
    x = np.asarray(x, dtype=float)
    single = (x.ndim == 1)
    pts = x[None, :] if single else x.reshape(-1, ellipsoid.dim)
    xt = pts - ellipsoid.center
    lam = ellipsoidal_coordinate(ellipsoid, pts)
    return xt, np.asarray(lam, dtype=float).reshape(-1), single, x.shape[:-1]


def ellipsoid_potential(ellipsoid, x):
    """V_E at one point (N,) or a batch (..., N); exact inside and outside."""
    integ = _axis_integrals(ellipsoid)
    pref = float(np.prod(ellipsoid.semiaxes)) / 4.0
    xt, lam, single, lead = _prepare_points(ellipsoid, x)
    ic, ij = integ.eval(lam)
    vals = pref * (ic - np.sum(xt.T * xt.T * ij, axis=0))
    return float(vals[0]) if single else vals.reshape(lead)


def ellipsoid_potential_gradient(ellipsoid, x):
    """Gradient of V_E; the same confocal formula covers both sides."""
    integ = _axis_integrals(ellipsoid)
    pref = float(np.prod(ellipsoid.semiaxes)) / 4.0
    xt, lam, single, lead = _prepare_points(ellipsoid, x)
    _, ij = integ.eval(lam)
    grad = (-2.0 * pref) * xt * ij.T
    return grad[0] if single else grad.reshape(lead + (ellipsoid.dim,))


def ellipsoid_potential_hessian(ellipsoid, x, boundary_tol=1e-12):
    """Hessian of V_E; constant diag(-2 q) inside, confocal formula outside.

    The Hessian jumps across the boundary; points within ``boundary_tol`` of
    the level set are treated as interior.
    """
    integ = _axis_integrals(ellipsoid)
    N = ellipsoid.dim
    a2 = ellipsoid.semiaxes ** 2
    pref = float(np.prod(ellipsoid.semiaxes)) / 4.0
    xt, lam, single, lead = _prepare_points(ellipsoid, x)
    _, ij = integ.eval(lam)
    hess = np.zeros((xt.shape[0], N, N))
    idx = np.arange(N)
    hess[:, idx, idx] = -2.0 * pref * ij.T
    outside = lam > boundary_tol
    if np.any(outside):
        xo = xt[outside]
        lo = lam[outside][:, None]
        denom = a2[None, :] + lo                     # (B, N)
        D = np.sum(xo ** 2 / denom ** 2, axis=1)
        g = np.sqrt(np.prod(denom, axis=1))
        w = xo / denom                               # x_i / (a_i^2 + lambda)
        corr = (4.0 * pref / (D * g))[:, None, None] * \
            w[:, :, None] * w[:, None, :]
        hess[outside] += corr
    if single:
        return hess[0]
    return hess.reshape(lead + (N, N))


def homoeoid_gap(ellipsoid, factor, x, boundary_tol=1e-12):
    """V_{tE}(x) - V_E(x) for x in the closed ellipsoid and t > 1.

    Constant in x (the classical shell theorem for homoeoids): the dilation
    shell tE minus E exerts no net field inside E, so the gap is the constant
    (t^2 - 1) c.  Both potentials are evaluated independently; nothing here
    assumes the constancy, which is what the tests verify.
    """
    if factor <= 1.0:
        raise ValueError("homoeoid factor must exceed 1")
    lev = ellipsoid.level(x)
    if np.any(lev > 1.0 + boundary_tol):
        raise ValueError("homoeoid gap is defined for points inside the body")
    return (ellipsoid_potential(ellipsoid.scaled(factor), x)
            - ellipsoid_potential(ellipsoid, x))


# ---------------------------------------------------------------------------
# Monte-Carlo route

class BoxSampler:
    """Uniform sampler on an axis box [lo, hi]; the proposal for rejection."""

    def __init__(self, lo, hi):
        self.lo = np.asarray(lo, dtype=float)
        self.hi = np.asarray(hi, dtype=float)
        if self.lo.shape != self.hi.shape or self.lo.ndim != 1:
            raise DegenerateSamplerError("box corners must be matching vectors")
        self.volume = float(np.prod(self.hi - self.lo))

    def draw(self, rng, m):
        u = rng.random((m, self.lo.shape[0]))
        return self.lo + u * (self.hi - self.lo)


class StratifiedSampler:
    """A list of box strata; samples are allocated proportionally to volume."""

    def __init__(self, parts):
        self.parts = list(parts)
        if not self.parts:
            raise DegenerateSamplerError("stratified sampler needs parts")


def paraboloid_slab_sampler(paraboloid, top, n_strata=16):
    """Stratified boxes covering the paraboloid up to height ``top``.

    Each stratum is the bounding box of the slice band; rejection against the
    exact membership happens inside the Monte-Carlo loop.
    """
    v = paraboloid.vertex_height
    if top <= v:
        raise DegenerateSamplerError("truncation height is below the vertex")
    edges = np.linspace(v, top, n_strata + 1)
    parts = []
    a = paraboloid.sectional_semiaxes
    for z0, z1 in zip(edges[:-1], edges[1:]):
        r = a * math.sqrt(z1 + paraboloid.vertex_depth)
        parts.append(BoxSampler(np.append(-r, z0), np.append(r, z1)))
    return StratifiedSampler(parts)


def montecarlo_potential(membership, sampler, x, n_samples=100000, seed=None,
                         batch=1 << 19):
    """Unbiased Monte-Carlo estimate of V at x with its standard error.

    ``membership`` maps a batch of points to booleans; ``sampler`` is a
    BoxSampler or StratifiedSampler.  Returns (estimate, stderr).  An empty
    region gives (0.0, 0.0); a sampler with nonpositive or nonfinite volume
    raises DegenerateSamplerError.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError("montecarlo_potential takes a single point")
    N = x.shape[0]
    alpha = alpha_coefficient(N)
    if n_samples < 1000:
        raise ValueError("need at least 1000 samples, got %d" % n_samples)
    parts = sampler.parts if isinstance(sampler, StratifiedSampler) else [sampler]
    vols = np.array([p.volume for p in parts])
    if np.any(~np.isfinite(vols)) or np.any(vols <= 0.0):
        raise DegenerateSamplerError("sampler volume must be positive and finite")
    rng = np.random.default_rng(seed)
    alloc = np.maximum((n_samples * vols / vols.sum()).astype(int), 1)
    est = 0.0
    var = 0.0
    for part, vol, m in zip(parts, vols, alloc):
        s = 0.0
        s2 = 0.0
        done = 0
        while done < m:
            k = min(batch, m - done)
            y = part.draw(rng, k)
            if y.shape != (k, N):
                raise DegenerateSamplerError("sampler returned wrong shape")
            inside = np.asarray(membership(y), dtype=bool)
            vals = np.zeros(k)
            if np.any(inside):
                diff = y[inside] - x
                dist = np.sqrt(np.sum(diff * diff, axis=1))
                vals[inside] = dist ** (2 - N)
            s += float(np.sum(vals))
            s2 += float(np.sum(vals * vals))
            done += k
        mean = s / m
        mvar = max(s2 / m - mean * mean, 0.0)
        est += vol * mean
        var += vol * vol * mvar / m
    return alpha * est, alpha * math.sqrt(var)


# ---------------------------------------------------------------------------
# paraboloid potentials

def paraboloid_tail_bound(paraboloid, x, height):
    """Upper bound on the potential contribution of the body above ``height``.

    Valid for N >= 6 once height >= max(2 x_N, vertex_depth, 1); the bound is
    of order height^((5-N)/2).  Returns inf when the validity conditions do
    not hold, which forces callers to push the truncation further out.
    """
    N = paraboloid.dim
    if N < 6:
        raise UnsupportedDimensionError(
            "paraboloid tail bound needs N >= 6, got %d" % N)
    x = np.asarray(x, dtype=float)
    zx = float(x[-1])
    if height < max(2.0 * zx, paraboloid.vertex_depth, 1.0):
        return math.inf
    slab = ball_volume(N - 1) * float(np.prod(paraboloid.sectional_semiaxes))
    c = alpha_coefficient(N) * slab * 2.0 ** ((3 * N - 5) / 2.0) * 2.0 / (N - 5)
    return c * height ** ((5 - N) / 2.0)


def round_paraboloid_exterior_potential(paraboloid, x, rel_tol=1e-6,
                                        max_extend=400):
    """Direct quadrature of V_P at an exterior point, round sections only.

    Reduces the N-dim integral to (slab height, section radius, polar angle)
    using the rotational symmetry of the section, integrates with panel Gauss
    rules graded along the axis, and extends the truncation until both the
    marginal panel contribution and the analytic tail bound fall below the
    requested relative tolerance.
    """
    if not paraboloid.is_round():
        raise ValueError("direct quadrature requires round sections")
    N = paraboloid.dim
    if N < 6:
        raise UnsupportedDimensionError(
            "paraboloid potentials need N >= 6, got %d" % N)
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        return np.array([round_paraboloid_exterior_potential(
            paraboloid, xi, rel_tol=rel_tol, max_extend=max_extend)
            for xi in x.reshape(-1, N)]).reshape(np.asarray(x).shape[:-1])
    if paraboloid.contains(x, closed=True):
        raise ValueError("point is inside the paraboloid; exterior routine only")
    a1 = float(paraboloid.sectional_semiaxes[0])
    rho_x = float(np.sqrt(np.sum(x[:-1] ** 2)))
    z_x = float(x[-1])
    v = paraboloid.vertex_height
    alpha = alpha_coefficient(N)
    area = sphere_area(N - 2)        # equator of the section, weight of psi
    ny, nr, npsi = 16, 32, 32
    yg, wy = gauss_legendre(ny)
    rg, wr = gauss_legendre(nr)
    pg, wp = gauss_legendre(npsi)
    psi = 0.5 * math.pi * (pg + 1.0)
    wpsi = 0.5 * math.pi * wp * np.sin(psi) ** (N - 3)

    def panel(lo, hi):
        half = 0.5 * (hi - lo)
        y = 0.5 * (lo + hi) + half * yg                   # (ny,)
        R = a1 * np.sqrt(y + paraboloid.vertex_depth)     # (ny,)
        r = 0.5 * R[:, None] * (rg[None, :] + 1.0)        # (ny, nr)
        wr_s = 0.5 * R[:, None] * wr[None, :]
        d2 = (rho_x ** 2 + r[:, :, None] ** 2
              - 2.0 * rho_x * r[:, :, None] * np.cos(psi)[None, None, :]
              + (z_x - y[:, None, None]) ** 2)
        kern = d2 ** (0.5 * (2 - N))
        inner = np.einsum("yrp,p->yr", kern, wpsi)
        rad = np.sum(inner * r ** (N - 2) * wr_s, axis=1)
        return half * float(np.sum(rad * wy))

    # graded axis panels: unit-ish near the vertex, geometric afterwards
    w0 = max(0.25, abs(z_x - v) / 32.0, 1e-3)
    edges = [v, v + w0]
    acc = panel(edges[0], edges[1])
    grow = 1.5
    tail = math.inf
    for _ in range(max_extend):
        lo = edges[-1]
        hi = lo + (edges[-1] - edges[-2]) * grow
        contrib = panel(lo, hi)
        edges.append(hi)
        acc += contrib
        tail = paraboloid_tail_bound(paraboloid, x, hi)
        val = alpha * area * acc
        scale = max(abs(val), 1e-300)
        if alpha * area * contrib < 0.25 * rel_tol * scale \
                and tail < rel_tol * scale:
            # the truncated mass adds between 0 and tail; take the midpoint
            return val + 0.5 * tail
    raise PotentialToleranceError(
        "direct paraboloid quadrature did not settle after %d panels"
        % max_extend, bracket=tail)


def paraboloid_potential(paraboloid, x, tol=1e-6, schedule=None,
                         return_diagnostics=False):
    """Sequence-extrapolated V_P; see ``construct`` for the machinery.

    Values come from potentials of fitted ellipsoids along a doubling
    schedule, extrapolated in 1/n^2; the extrapolation bracket (difference of
    the last two table entries) must meet ``tol`` or a tolerance error
    carrying the bracket is raised.
    """
    if paraboloid.dim < 6:
        raise UnsupportedDimensionError(
            "paraboloid potentials need N >= 6, got %d" % paraboloid.dim)
    from .construct import solution_for_paraboloid
    sol = solution_for_paraboloid(paraboloid, schedule=schedule)
    return sol.potential(x, tol=tol, return_diagnostics=return_diagnostics)


class PotentialEvaluator:
    """Uniform handle over the three evaluation routes.

    ``method`` is one of "closed-form" (ellipsoids), "sequence-extrapolation"
    (paraboloids) or "monte-carlo".  ``info()`` reports route metadata such as
    the number of sequence terms or the sampler standard error.
    """

    def __init__(self, body, method, value, gradient=None, meta=None):
        self.body = body
        self.method = method
        self._value = value
        self._gradient = gradient
        self.meta = dict(meta or {})

    def __call__(self, x):
        return self._value(x)

    def value(self, x):
        return self._value(x)

    def gradient(self, x):
        if self._gradient is None:
            raise NotImplementedError("no gradient on the %s route" % self.method)
        return self._gradient(x)

    def info(self):
        d = {"method": self.method}
        d.update(self.meta)
        return d

    @classmethod
    def for_ellipsoid(cls, ellipsoid):
        return cls(ellipsoid, "closed-form",
                   lambda x: ellipsoid_potential(ellipsoid, x),
                   lambda x: ellipsoid_potential_gradient(ellipsoid, x))

    @classmethod
    def for_paraboloid(cls, paraboloid, tol=1e-6, schedule=None):
        from .construct import solution_for_paraboloid
        sol = solution_for_paraboloid(paraboloid, schedule=schedule)
        return cls(paraboloid, "sequence-extrapolation",
                   lambda x: sol.potential(x, tol=tol),
                   lambda x: sol.potential_gradient(x),
                   meta={"n_terms": len(sol.terms),
                         "schedule": [t.n for t in sol.terms]})

    @classmethod
    def monte_carlo(cls, body, sampler, n_samples=100000, seed=0):
        def value(x):
            est, err = montecarlo_potential(body.contains, sampler, x,
                                            n_samples=n_samples, seed=seed)
            value.last_stderr = err
            return est
        value.last_stderr = None
        return cls(body, "monte-carlo", value,
                   meta={"n_samples": n_samples, "seed": seed})
