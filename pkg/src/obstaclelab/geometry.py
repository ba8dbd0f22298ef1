"""Solid bodies and blow-down data used throughout the package.

Conventions, fixed once here:

* Points live in R^N with N >= 3; the last coordinate x_N is the special
  axis.  Bodies are axis-aligned (no rotations): ellipsoids have axis-aligned
  semiaxes, paraboloids open upward along e_N with the vertex on the axis.

* A paraboloid with sectional semiaxes (a_1 .. a_{N-1}) and vertex depth a_N
  is the open set  P = { x : sum_j x_j^2 / a_j^2 < x_N + a_N }.  Its slice at
  height x_N is an ellipsoid with semiaxes a_j * sqrt(x_N + a_N), so the a_j
  are the semiaxes of the slice one unit above the vertex.

* Blow-down data records the quadratic profile at infinity of an obstacle
  solution: u(x) ~ sum_j b_j x_j^2 - slope * x_N - constant, with b_j > 0,
  sum_j b_j = 1/2 (so the Laplacian of the quadratic part is 1) and slope > 0.

The ellipsoidal coordinate lambda(x) of an exterior point is the unique
positive root of sum_j (x_j - c_j)^2 / (a_j^2 + lambda) = 1; the confocal
ellipsoid through x.  It is solved by bisection on [0, |x - c|^2] followed by
a few Newton steps, leaving the defining residual at roundoff level.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MU_DECAY_THRESHOLD = 25.0 / 72.0


class GeometryError(ValueError):
    pass


def _as_vector(v, n=None, name="vector"):
    a = np.asarray(v, dtype=float)
    if a.ndim != 1:
        raise GeometryError("%s must be one dimensional, got shape %s"
                            % (name, a.shape))
    if n is not None and a.shape[0] != n:
        raise GeometryError("%s must have length %d, got %d"
                            % (name, n, a.shape[0]))
    if not np.all(np.isfinite(a)):
        raise GeometryError("%s has non-finite entries" % name)
    return a


@dataclass(frozen=True, eq=False)
class Ellipsoid:
    """Axis-aligned solid ellipsoid { sum ((x_j - c_j)/a_j)^2 < 1 }."""

    semiaxes: np.ndarray
    center: np.ndarray = None
    degenerate: bool = False

    def __post_init__(self):
        a = _as_vector(self.semiaxes, name="semiaxes")
        if self.center is None:
            c = np.zeros_like(a)
        else:
            c = _as_vector(self.center, n=a.shape[0], name="center")
        if self.degenerate:
            if not np.all(a >= 0):
                raise GeometryError("degenerate ellipsoid needs semiaxes >= 0")
        elif not np.all(a > 0):
            raise GeometryError("ellipsoid semiaxes must be positive")
        object.__setattr__(self, "semiaxes", a)
        object.__setattr__(self, "center", c)

    @property
    def dim(self):
        return self.semiaxes.shape[0]

    @property
    def volume(self):
        from .quadrature import ball_volume
        return ball_volume(self.dim) * float(np.prod(self.semiaxes))

    def scaled(self, t):
        """Concentric dilation t * E (same center)."""
        if t <= 0:
            raise GeometryError("dilation factor must be positive")
        return Ellipsoid(t * self.semiaxes, self.center)

    def translated(self, shift):
        return Ellipsoid(self.semiaxes, self.center + _as_vector(shift, self.dim))

    def level(self, x):
        """sum ((x_j - c_j)/a_j)^2, vectorized over leading axes of x."""
        x = np.asarray(x, dtype=float)
        return np.sum(((x - self.center) / self.semiaxes) ** 2, axis=-1)

    def contains(self, x, closed=False):
        lev = self.level(x)
        return lev <= 1.0 if closed else lev < 1.0

    def boundary_points(self, directions):
        """Boundary points in the given unit directions (batch, dim)."""
        d = np.asarray(directions, dtype=float)
        d = d / np.linalg.norm(d, axis=-1, keepdims=True)
        return self.center + d * self.semiaxes


@dataclass(frozen=True, eq=False)
class Paraboloid:
    """Upward paraboloid { sum_j x_j^2 / a_j^2 < x_N + vertex_depth }."""

    sectional_semiaxes: np.ndarray
    vertex_depth: float = 0.0

    def __post_init__(self):
        a = _as_vector(self.sectional_semiaxes, name="sectional semiaxes")
        if not np.all(a > 0):
            raise GeometryError("sectional semiaxes must be positive")
        if not np.isfinite(self.vertex_depth):
            raise GeometryError("vertex depth must be finite")
        object.__setattr__(self, "sectional_semiaxes", a)
        object.__setattr__(self, "vertex_depth", float(self.vertex_depth))

    @property
    def dim(self):
        return self.sectional_semiaxes.shape[0] + 1

    @property
    def gamma(self):
        """Widest sectional semiaxis; the width scale used by envelopes."""
        return float(np.max(self.sectional_semiaxes))

    @property
    def vertex_height(self):
        return -self.vertex_depth

    def is_round(self, tol=1e-12):
        a = self.sectional_semiaxes
        return float(np.max(a) - np.min(a)) <= tol * float(np.max(a))

    def height_excess(self, x):
        """x_N + a_N - sum x_j^2/a_j^2; positive inside, zero on the boundary."""
        x = np.asarray(x, dtype=float)
        s = np.sum((x[..., :-1] / self.sectional_semiaxes) ** 2, axis=-1)
        return x[..., -1] + self.vertex_depth - s

    def contains(self, x, closed=False):
        e = self.height_excess(x)
        return e >= 0.0 if closed else e > 0.0

    def translated(self, shift_z):
        """Shift by shift_z along the axis (positive moves the body up)."""
        return Paraboloid(self.sectional_semiaxes,
                          self.vertex_depth - float(shift_z))

    def section(self, height):
        """Horizontal slice at x_N = height as an (N-1)-dim ellipsoid.

        At or below the vertex the slice is empty; a zero ellipsoid flagged
        ``degenerate`` is returned instead of raising, so grid sweeps can
        treat the vertex row uniformly.
        """
        s = height + self.vertex_depth
        if s <= 0.0:
            return Ellipsoid(np.zeros_like(self.sectional_semiaxes),
                             degenerate=True)
        return Ellipsoid(self.sectional_semiaxes * np.sqrt(s))


@dataclass(frozen=True, eq=False)
class EnvelopeSet:
    """Reference envelope regions used by the decay diagnostics.

    kind "growth": { x_N > 0, |x'|^2 < x_N^(1+delta) }, parameter delta in (0,1).
    kind "widened-paraboloid": { x_N > 0, |x'| < gamma * x_N^(1/2+mu) },
    parameters gamma > 0 and mu in (0, 1/2].  ``shift`` translates the set
    down by shift * e_N (membership is tested after moving the point back up).
    """

    kind: str
    delta: float = None
    gamma: float = None
    mu: float = None
    shift: float = 0.0

    def __post_init__(self):
        if self.kind == "growth":
            if self.delta is None or not (0.0 < self.delta < 1.0):
                raise GeometryError("growth envelope needs delta in (0, 1)")
        elif self.kind == "widened-paraboloid":
            if self.gamma is None or self.gamma <= 0:
                raise GeometryError("widened paraboloid needs gamma > 0")
            if self.mu is None or not (0.0 < self.mu <= 0.5):
                raise GeometryError("widened paraboloid needs mu in (0, 1/2]")
        else:
            raise GeometryError("unknown envelope kind %r" % (self.kind,))
        if not np.isfinite(self.shift):
            raise GeometryError("shift must be finite")

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        z = x[..., -1] + self.shift
        r2 = np.sum(x[..., :-1] ** 2, axis=-1)
        pos = z > 0.0
        if self.kind == "growth":
            bound = np.where(pos, np.maximum(z, 0.0) ** (1.0 + self.delta), 0.0)
            return pos & (r2 < bound)
        bound = np.where(pos, self.gamma * np.maximum(z, 0.0) ** (0.5 + self.mu), 0.0)
        return pos & (np.sqrt(r2) < bound)


@dataclass(frozen=True, eq=False)
class BlowdownData:
    """Quadratic-profile data (b_1..b_{N-1}, slope, constant) at infinity."""

    coefficients: np.ndarray      # b_1 .. b_{N-1}, positive, sums to 1/2
    slope: float                  # coefficient of -x_N, positive
    constant: float = 0.0         # coefficient of -1
    trace_tol: float = 1e-12

    def __post_init__(self):
        b = _as_vector(self.coefficients, name="coefficients")
        if not np.all(b > 0):
            raise GeometryError("blow-down coefficients must be positive")
        if abs(float(np.sum(b)) - 0.5) > self.trace_tol:
            raise GeometryError(
                "blow-down coefficients must sum to 1/2, got %.17g"
                % float(np.sum(b)))
        if not (self.slope > 0 and np.isfinite(self.slope)):
            raise GeometryError("slope must be positive and finite")
        if not np.isfinite(self.constant):
            raise GeometryError("constant must be finite")
        object.__setattr__(self, "coefficients", b)
        object.__setattr__(self, "slope", float(self.slope))
        object.__setattr__(self, "constant", float(self.constant))

    @property
    def dim(self):
        return self.coefficients.shape[0] + 1

    @property
    def min_coefficient(self):
        """Smallest quadratic eigenvalue; the flatness scale of the profile."""
        return float(np.min(self.coefficients))

    def is_isotropic(self, tol=1e-12):
        b = self.coefficients
        return float(np.max(b) - np.min(b)) <= tol

    def quadratic(self, x):
        """p(x') = sum b_j x_j^2 on the first N-1 coordinates."""
        x = np.asarray(x, dtype=float)
        return np.sum(self.coefficients * x[..., :-1] ** 2, axis=-1)

    def quadratic_gradient(self, x):
        x = np.asarray(x, dtype=float)
        g = np.zeros_like(x)
        g[..., :-1] = 2.0 * self.coefficients * x[..., :-1]
        return g

    def profile(self, x):
        """p(x') - slope * x_N - constant."""
        x = np.asarray(x, dtype=float)
        return self.quadratic(x) - self.slope * x[..., -1] - self.constant


# ---------------------------------------------------------------------------
# ellipsoidal coordinate

def ellipsoidal_coordinate(ellipsoid, x, tol=1e-13, max_newton=30):
    """Confocal coordinate lambda(x) >= 0, vectorized over leading axes of x.

    Interior and boundary points return 0.  The result satisfies
    |sum (x_j-c_j)^2/(a_j^2+lambda) - 1| <= 1e-12 for exterior points.
    """
    a2 = ellipsoid.semiaxes ** 2
    x = np.asarray(x, dtype=float)
    single = (x.ndim == 1)
    if single:
        x = x[None, :]
    d2 = (x - ellipsoid.center) ** 2
    lev = np.sum(d2 / a2, axis=-1)
    lam = np.zeros(lev.shape)
    outside = lev > 1.0
    if not np.any(outside):
        return float(lam[0]) if single else lam
    d2o = d2[outside].reshape(-1, ellipsoid.dim)
    lo = np.zeros(d2o.shape[0])
    hi = np.sum(d2o, axis=-1)          # h(|x-c|^2) < 0 always
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        h = np.sum(d2o / (a2 + mid[:, None]), axis=-1) - 1.0
        pos = h > 0
        lo = np.where(pos, mid, lo)
        hi = np.where(pos, hi, mid)
    lam_o = 0.5 * (lo + hi)
    for _ in range(max_newton):
        denom = a2 + lam_o[:, None]
        h = np.sum(d2o / denom, axis=-1) - 1.0
        dh = -np.sum(d2o / denom ** 2, axis=-1)
        step = h / dh
        lam_o = np.maximum(lam_o - step, 0.0)
        if float(np.max(np.abs(h))) < tol:
            break
    lam[outside] = lam_o
    return float(lam[0]) if single else lam


# ---------------------------------------------------------------------------
# JSON-friendly serialization

def to_json(obj):
    """Plain-dict form of any geometry object (lists, floats, strings only)."""
    if isinstance(obj, Ellipsoid):
        return {"kind": "ellipsoid", "dim": obj.dim,
                "semiaxes": obj.semiaxes.tolist(),
                "center": obj.center.tolist(),
                "degenerate": bool(obj.degenerate)}
    if isinstance(obj, Paraboloid):
        return {"kind": "paraboloid", "dim": obj.dim,
                "sectional_semiaxes": obj.sectional_semiaxes.tolist(),
                "vertex_depth": obj.vertex_depth}
    if isinstance(obj, EnvelopeSet):
        d = {"kind": "envelope", "envelope_kind": obj.kind, "shift": obj.shift}
        if obj.kind == "growth":
            d["delta"] = obj.delta
        else:
            d["gamma"] = obj.gamma
            d["mu"] = obj.mu
        return d
    if isinstance(obj, BlowdownData):
        return {"kind": "blowdown", "dim": obj.dim,
                "coefficients": obj.coefficients.tolist(),
                "slope": obj.slope, "constant": obj.constant}
    raise GeometryError("cannot serialize %r" % (type(obj).__name__,))


def from_json(d):
    """Inverse of to_json; validates the 'kind' tag and field shapes."""
    if not isinstance(d, dict) or "kind" not in d:
        raise GeometryError("geometry JSON must be a dict with a 'kind' tag")
    kind = d["kind"]
    try:
        if kind == "ellipsoid":
            e = Ellipsoid(np.asarray(d["semiaxes"], dtype=float),
                          np.asarray(d["center"], dtype=float)
                          if d.get("center") is not None else None,
                          degenerate=bool(d.get("degenerate", False)))
            if "dim" in d and int(d["dim"]) != e.dim:
                raise GeometryError("dim field disagrees with semiaxes length")
            return e
        if kind == "paraboloid":
            p = Paraboloid(np.asarray(d["sectional_semiaxes"], dtype=float),
                           float(d.get("vertex_depth", 0.0)))
            if "dim" in d and int(d["dim"]) != p.dim:
                raise GeometryError("dim field disagrees with semiaxes length")
            return p
        if kind == "envelope":
            return EnvelopeSet(d["envelope_kind"],
                               delta=d.get("delta"),
                               gamma=d.get("gamma"),
                               mu=d.get("mu"),
                               shift=float(d.get("shift", 0.0)))
        if kind == "blowdown":
            return BlowdownData(np.asarray(d["coefficients"], dtype=float),
                                float(d["slope"]),
                                float(d.get("constant", 0.0)))
    except KeyError as exc:
        raise GeometryError("geometry JSON missing field %s" % (exc,)) from exc
    raise GeometryError("unknown geometry kind %r" % (kind,))
