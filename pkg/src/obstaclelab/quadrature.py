"""Quadrature helpers shared by the potential and diagnostics modules.

Three tools live here:

* ``adaptive_gauss``: adaptive bisected Gauss-Legendre quadrature on a finite
  interval for a vector of smooth integrands.  Panels are split worst-first
  until an embedded error estimate (difference between the panel value at
  order ``n`` and order ``2n``) meets the requested tolerance.

* ``PanelizedPrimitive``: cumulative integrals F_k(T) = int_0^T f_k(t) dt of a
  vector of smooth integrands, built once on an adaptively bisected panel set
  and evaluated afterwards at arbitrary batches of upper limits T.  Inside a
  panel the integrand is represented by its Legendre interpolant on the Gauss
  nodes, so partial-panel integrals come from integrating the interpolant
  exactly rather than from any table lookup.

* sphere rules: Gauss rules in the polar angle with the sin^(N-2) surface
  weight, and a degree-5 exact point design on the equatorial sphere built
  from the axis points +-e_i and the edge midpoints (+-e_i +- e_j)/sqrt(2).
  The design weights are negative for dimensions above 4; that is fine for
  exactness and the rules are only used on smooth integrands.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from numpy.polynomial import legendre as npleg


class QuadratureError(RuntimeError):
    """Raised when an adaptive rule cannot meet its tolerance.

    Carries ``achieved`` (error estimate at give-up time) so callers can
    report the bracket instead of silently accepting a bad value.
    """

    def __init__(self, message, achieved=None):
        super().__init__(message)
        self.achieved = achieved


@lru_cache(maxsize=64)
def gauss_legendre(n):
    """Nodes and weights on [-1, 1], cached."""
    x, w = npleg.leggauss(n)
    return x, w


def _panel_values(f, a, b, order):
    """Integral of each component of f over [a, b] at the given order."""
    xi, w = gauss_legendre(order)
    half = 0.5 * (b - a)
    t = 0.5 * (a + b) + half * xi
    vals = np.asarray(f(t))
    return half * (vals @ w)


def adaptive_gauss(f, a, b, rel_tol=1e-12, abs_tol=0.0, order=16,
                   max_panels=2048):
    """Integrate f over [a, b] with worst-first panel bisection.

    ``f`` maps an array of nodes ``t`` with shape (k,) to values with shape
    (..., k); leading axes are treated as independent components.  Returns
    ``(integral, error_estimate)`` where both have the leading shape of f.
    """
    if not (b > a):
        raise ValueError("adaptive_gauss needs b > a, got [%r, %r]" % (a, b))
    panels = [(a, b)]
    coarse = [_panel_values(f, a, b, order)]
    fine = [_panel_values(f, a, b, 2 * order)]
    while True:
        # per-component control: each row is judged against its own total,
        # so rows of very different magnitude all get full relative accuracy
        E = np.stack([np.abs(cf - cc) for cc, cf in zip(coarse, fine)], axis=0)
        E = E.reshape(len(panels), -1)
        total = np.sum(np.stack(fine, axis=0), axis=0)
        scale = np.maximum(np.abs(total).reshape(-1), 1e-300)
        tol_row = np.maximum(abs_tol, rel_tol * scale)
        row_err = np.sum(E, axis=0)
        if np.all(row_err <= tol_row):
            return total, row_err.reshape(total.shape)
        if len(panels) >= max_panels:
            raise QuadratureError(
                "adaptive_gauss: %d panels, worst row at %.1f x its tolerance"
                % (len(panels), float(np.max(row_err / tol_row))),
                achieved=row_err.reshape(total.shape))
        k = int(np.argmax(np.max(E / scale[None, :], axis=1)))
        lo, hi = panels.pop(k)
        coarse.pop(k)
        fine.pop(k)
        mid = 0.5 * (lo + hi)
        for seg in ((lo, mid), (mid, hi)):
            panels.append(seg)
            coarse.append(_panel_values(f, seg[0], seg[1], order))
            fine.append(_panel_values(f, seg[0], seg[1], 2 * order))


class PanelizedPrimitive:
    """Reusable antiderivatives of a vector of smooth integrands on [0, Tmax].

    Build once, then ``eval(T)`` returns int_0^T f_k for arbitrary arrays of
    upper limits (clipped to [0, Tmax]).  Panel placement is adaptive: the
    builder bisects the panel with the worst embedded error estimate until
    the summed estimate is below ``rel_tol`` times the full integral.
    """

    def __init__(self, f, t_max, order=24, rel_tol=1e-13, max_panels=512,
                 seed_edges=None):
        if not (t_max > 0):
            raise ValueError("PanelizedPrimitive needs t_max > 0")
        self.t_max = float(t_max)
        self.order = int(order)
        edges = [0.0, self.t_max]
        if seed_edges is not None:
            edges += [float(e) for e in seed_edges if 0.0 < e < self.t_max]
        edges = sorted(set(edges))
        panels = list(zip(edges[:-1], edges[1:]))
        coarse = [_panel_values(f, lo, hi, order) for lo, hi in panels]
        fine = [_panel_values(f, lo, hi, 2 * order) for lo, hi in panels]
        while True:
            # per-component relative control, as in adaptive_gauss
            E = np.stack([np.abs(cf - cc)
                          for cc, cf in zip(coarse, fine)], axis=0)
            total = np.sum(np.stack(fine, axis=0), axis=0)
            scale = np.maximum(np.abs(total), 1e-300)
            row_err = np.sum(E, axis=0)
            if np.all(row_err <= rel_tol * scale):
                break
            if len(panels) >= max_panels:
                raise QuadratureError(
                    "PanelizedPrimitive: %d panels, worst row at %.1f x its "
                    "tolerance" % (len(panels),
                                   float(np.max(row_err / (rel_tol * scale)))),
                    achieved=row_err)
            k = int(np.argmax(np.max(E / scale[None, :], axis=1)))
            lo, hi = panels.pop(k)
            coarse.pop(k)
            fine.pop(k)
            mid = 0.5 * (lo + hi)
            for seg in ((lo, mid), (mid, hi)):
                panels.append(seg)
                coarse.append(_panel_values(f, seg[0], seg[1], order))
                fine.append(_panel_values(f, seg[0], seg[1], 2 * order))
        # Sort panels and build per-panel Legendre antiderivatives.
        order_idx = np.argsort([p[0] for p in panels])
        panels = [panels[i] for i in order_idx]
        self.edges = np.array([p[0] for p in panels] + [panels[-1][1]])
        xi, _ = gauss_legendre(2 * order)
        anti = []
        for lo, hi in panels:
            half = 0.5 * (hi - lo)
            t = 0.5 * (lo + hi) + half * xi
            vals = np.asarray(f(t))          # (K, nodes)
            coef = npleg.legfit(xi, vals.T * half, deg=2 * order - 1)
            anti.append(npleg.legint(coef, lbnd=-1))   # vanishes at panel start
        self._anti = anti                     # list of (deg+2, K) coefficient arrays
        panel_totals = np.stack(
            [npleg.legval(1.0, c) for c in anti], axis=0)   # (P, K)
        self._prefix = np.vstack([np.zeros((1, panel_totals.shape[1])),
                                  np.cumsum(panel_totals, axis=0)])
        self.total = self._prefix[-1]
        self.n_panels = len(panels)

    def eval(self, T):
        """Cumulative integrals at upper limits T; returns shape (K, *T.shape)."""
        T = np.asarray(T, dtype=float)
        scalar = (T.ndim == 0)
        Tf = np.atleast_1d(T).ravel()
        Tc = np.clip(Tf, 0.0, self.t_max)
        idx = np.clip(np.searchsorted(self.edges, Tc, side="right") - 1,
                      0, self.n_panels - 1)
        K = self._prefix.shape[1]
        out = self._prefix[idx].T.copy()      # (K, B)
        for p in np.unique(idx):
            sel = np.nonzero(idx == p)[0]
            lo, hi = self.edges[p], self.edges[p + 1]
            xi = 2.0 * (Tc[sel] - lo) / (hi - lo) - 1.0
            part = npleg.legval(xi, self._anti[p])   # (K, len(sel))
            out[:, sel] += part
        if scalar:
            return out[:, 0]
        return out.reshape((K,) + T.shape)


# ---------------------------------------------------------------------------
# spheres and balls

def ball_volume(N):
    """Volume of the unit ball in R^N."""
    return math.pi ** (N / 2.0) / math.gamma(N / 2.0 + 1.0)


def sphere_area(N):
    """Surface area of the unit sphere S^(N-1) in R^N."""
    return 2.0 * math.pi ** (N / 2.0) / math.gamma(N / 2.0)


@lru_cache(maxsize=64)
def polar_rule(N, n):
    """Nodes/weights for int_0^pi f(theta) sin^(N-2)(theta) dtheta."""
    xi, w = gauss_legendre(n)
    theta = 0.5 * math.pi * (xi + 1.0)
    weight = 0.5 * math.pi * w * np.sin(theta) ** (N - 2)
    return theta, weight


@lru_cache(maxsize=16)
def equatorial_design(n):
    """Degree-5 exact point design on S^(n-1), probability-normalized.

    Axis points +-e_i carry weight (4-n)/(2n(n+2)) each and the 2n(n-1) edge
    midpoints (+-e_i +- e_j)/sqrt(2) carry 1/(n(n+2)) each.  Exact for all
    polynomials of degree <= 5 against the uniform measure; axis weights go
    negative for n > 4, which only matters for stability, not exactness.
    """
    if n < 2:
        raise ValueError("equatorial design needs dimension >= 2")
    pts = []
    wts = []
    a = (4.0 - n) / (2.0 * n * (n + 2.0))
    b = 1.0 / (n * (n + 2.0))
    for i in range(n):
        for s in (+1.0, -1.0):
            e = np.zeros(n)
            e[i] = s
            pts.append(e)
            wts.append(a)
    r = 1.0 / math.sqrt(2.0)
    for i in range(n):
        for j in range(i + 1, n):
            for si in (+1.0, -1.0):
                for sj in (+1.0, -1.0):
                    e = np.zeros(n)
                    e[i] = si * r
                    e[j] = sj * r
                    pts.append(e)
                    wts.append(b)
    return np.array(pts), np.array(wts)


def sphere_rule(N, n_theta):
    """Full quadrature rule on S^(N-1): points (M, N), weights summing to its area.

    Product of the polar Gauss rule with the degree-5 equatorial design, so
    integrands that are polynomial of degree <= 5 in the equatorial direction
    cosines (at fixed polar angle) are integrated exactly in those variables.
    """
    theta, wt = polar_rule(N, n_theta)
    om, wo = equatorial_design(N - 1)
    pts = np.empty((len(theta), len(om), N))
    pts[:, :, :N - 1] = np.sin(theta)[:, None, None] * om[None, :, :]
    pts[:, :, N - 1] = np.cos(theta)[:, None]
    w = (wt[:, None] * wo[None, :]) * sphere_area(N - 1)
    return pts.reshape(-1, N), w.ravel()
