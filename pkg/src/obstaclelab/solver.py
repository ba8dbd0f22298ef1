"""Axisymmetric finite-difference solver for the obstacle problem.

Solves, on the meridian rectangle (rho, z) in [0, R] x [z0, z1],

    max(Delta_h u - 1, -u) = 0,   u = g on the Dirichlet sides,

where Delta_h discretizes  d_rr + (N-2)/rho d_r + d_zz  (the Laplacian of an
axisymmetric function of N variables) or the plain 2-D Laplacian in "slab"
mode.  The radial part uses the conservative flux form

    rho^(2-N) d_rho ( rho^(N-2) d_rho u ),

whose face-centered finite difference keeps every off-diagonal coefficient
positive (the naive central form goes negative within (N-2)/2 cells of the
axis and would break the discrete maximum principle).  On the axis the
standard limit stencil 2 (N-1) (u_1 - u_0) / h^2 applies.

The iteration is projected red-black SOR: a Gauss-Seidel sweep with
relaxation omega followed by clipping at zero, vectorized one color at a
time.  At a fixed point each node satisfies either u = 0 (with the
variational sign Delta_h u - 1 <= 0) or the equation itself, so the solver
stops on the true complementarity residual, not just the update size.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class SolverError(RuntimeError):
    pass


class IterationBudgetError(SolverError):
    """Convergence not reached; carries the residual history."""

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = history or []


@dataclass
class GridSolution:
    """Converged grid solution on the meridian rectangle."""

    dim: int
    rho: np.ndarray
    z: np.ndarray
    u: np.ndarray                 # (len(rho), len(z))
    mode: str
    tol: float
    omega: float
    sweeps: int
    final_update: float
    final_residual: float
    boundary_note: str = ""
    history: list = field(default_factory=list)

    @property
    def h(self):
        return float(self.rho[1] - self.rho[0]), float(self.z[1] - self.z[0])

    def value(self, rho, z):
        """Bilinear interpolation; O(h^2) between nodes."""
        rho = np.asarray(rho, dtype=float)
        z = np.asarray(z, dtype=float)
        hr, hz = self.h
        fr = np.clip((rho - self.rho[0]) / hr, 0.0, len(self.rho) - 1.0)
        fz = np.clip((z - self.z[0]) / hz, 0.0, len(self.z) - 1.0)
        if np.any(rho < self.rho[0] - 1e-12) or np.any(rho > self.rho[-1] + 1e-12) \
                or np.any(z < self.z[0] - 1e-12) or np.any(z > self.z[-1] + 1e-12):
            raise ValueError("interpolation point outside the solved box")
        i = np.minimum(fr.astype(int), len(self.rho) - 2)
        j = np.minimum(fz.astype(int), len(self.z) - 2)
        tr = fr - i
        tz = fz - j
        u = self.u
        return ((1 - tr) * (1 - tz) * u[i, j] + tr * (1 - tz) * u[i + 1, j]
                + (1 - tr) * tz * u[i, j + 1] + tr * tz * u[i + 1, j + 1])

    def rescaled(self, r):
        return RescaledSolution(self, r)


@dataclass
class RescaledSolution:
    """Evaluator of u_r(x) = u(r x) / r^2 on the meridian plane."""

    base: GridSolution
    r: float

    def value(self, rho, z):
        return self.base.value(self.r * np.asarray(rho, dtype=float),
                               self.r * np.asarray(z, dtype=float)) / self.r ** 2


def _stencil(dim, rho, h_rho, mode):
    """Row coefficients (c_east, c_west, including the axis row)."""
    m = len(rho) - 1
    c_e = np.empty(m)
    c_w = np.empty(m)
    if mode == "slab":
        c_e[:] = 1.0 / h_rho ** 2
        c_w[:] = 1.0 / h_rho ** 2
        c_e[0] = 2.0 / h_rho ** 2       # symmetry at rho = 0
        c_w[0] = 0.0
        return c_e, c_w
    p = dim - 2
    r_in = rho[1:m]
    c_e[1:] = ((r_in + 0.5 * h_rho) ** p / r_in ** p) / h_rho ** 2
    c_w[1:] = ((r_in - 0.5 * h_rho) ** p / r_in ** p) / h_rho ** 2
    c_e[0] = 2.0 * (dim - 1) / h_rho ** 2
    c_w[0] = 0.0
    return c_e, c_w


def solve_obstacle(dim, boundary, rho_max, z_range, h, tol=1e-8, omega=1.7,
                   max_sweeps=200000, mode="radial", coincidence_eps=None,
                   check_every=25):
    """Projected red-black SOR for the obstacle problem on the meridian box.

    ``boundary`` maps (rho, z) arrays to Dirichlet values on the three outer
    sides (the axis side is the natural symmetry boundary).  Negative
    boundary data is rejected; values above -1e-8 (evaluation noise from the
    potential routes) are clamped to zero.  Returns a GridSolution whose
    complementarity residual is below ``tol``.
    """
    if mode not in ("radial", "slab"):
        raise ValueError("mode must be 'radial' or 'slab'")
    if not (0.0 < omega < 2.0):
        raise ValueError("relaxation omega must sit in (0, 2)")
    hr = hz = float(h) if np.isscalar(h) else None
    if hr is None:
        hr, hz = (float(h[0]), float(h[1]))
    z0, z1 = float(z_range[0]), float(z_range[1])
    m = int(round(rho_max / hr))
    nz = int(round((z1 - z0) / hz))
    if m < 3 or nz < 3:
        raise ValueError("grid too coarse: %d x %d cells" % (m, nz))
    rho = np.linspace(0.0, m * hr, m + 1)
    z = np.linspace(z0, z0 + nz * hz, nz + 1)

    U = np.zeros((m + 1, nz + 1))
    for sel_r, sel_z, write in (
            (np.full(nz + 1, rho[-1]), z, lambda v: U.__setitem__((m, slice(None)), v)),
            (rho, np.full(m + 1, z[0]), lambda v: U.__setitem__((slice(None), 0), v)),
            (rho, np.full(m + 1, z[-1]), lambda v: U.__setitem__((slice(None), nz), v))):
        vals = np.asarray(boundary(sel_r, sel_z), dtype=float)
        if np.any(vals < -1e-8):
            raise SolverError("boundary data must be nonnegative, found %.3e"
                              % float(vals.min()))
        write(np.maximum(vals, 0.0))

    c_e, c_w = _stencil(dim, rho, hr, mode)
    cz = 1.0 / hz ** 2
    diag = c_e + c_w + 2.0 * cz
    eps_c = coincidence_eps if coincidence_eps is not None else 10.0 * tol

    ii = np.arange(m)[:, None]
    jj = np.arange(1, nz)[None, :]
    colors = [((ii + jj) % 2 == c) for c in (0, 1)]

    def neighbor_sum():
        E = U[1:m + 1, 1:nz]
        S = U[0:m, 0:nz - 1]
        Nn = U[0:m, 2:nz + 1]
        W = np.zeros((m, nz - 1))
        W[1:] = U[0:m - 1, 1:nz]
        return c_e[:, None] * E + c_w[:, None] * W + cz * (S + Nn)

    history = []
    update = np.inf
    residual = np.inf
    sweeps = 0
    while sweeps < max_sweeps:
        update = 0.0
        for mask in colors:
            nb = neighbor_sum()
            cand = (1.0 - omega) * U[0:m, 1:nz] \
                + omega * (nb - 1.0) / diag[:, None]
            cand = np.maximum(cand, 0.0)
            delta = np.abs(cand - U[0:m, 1:nz])[mask]
            if delta.size:
                update = max(update, float(delta.max()))
            U[0:m, 1:nz][mask] = cand[mask]
        sweeps += 1
        if sweeps % check_every == 0 or update <= 0.1 * tol:
            nb = neighbor_sum()
            lap = nb - diag[:, None] * U[0:m, 1:nz]     # Delta_h u at unknowns
            r_eq = lap - 1.0
            active = U[0:m, 1:nz] > eps_c
            res_active = float(np.max(np.abs(r_eq[active]))) if np.any(active) else 0.0
            res_contact = float(np.max(r_eq[~active])) if np.any(~active) else 0.0
            residual = max(res_active, max(res_contact, 0.0))
            history.append((sweeps, update, residual))
            if residual <= tol:
                break
    else:
        raise IterationBudgetError(
            "no convergence in %d sweeps (residual %.3e, tol %g)"
            % (max_sweeps, residual, tol), history=history)

    return GridSolution(dim, rho, z, U, mode, tol, omega, sweeps,
                        update, residual, history=history)


def coincidence_mask(solution, eps=None):
    """Boolean contact mask u <= eps plus a per-column contiguity diagnostic.

    Returns (mask, bad_columns) where bad_columns lists the z-indices whose
    masked nodes form more than one contiguous run in rho.  For a convex
    axisymmetric contact region every column should be a single run; the
    count is a grid-quality diagnostic, not an assertion.
    """
    if eps is None:
        eps = 10.0 * solution.tol
    mask = solution.u <= eps
    bad = []
    for j in range(mask.shape[1]):
        col = mask[:, j].astype(np.int8)
        rises = int(np.sum(np.diff(col) > 0)) + int(col[0])
        if rises > 1:
            bad.append(j)
    return mask, bad


@dataclass
class BlowdownEstimate:
    """Least-squares quadratic profile of rescalings u_r on the unit sphere."""

    radii: list
    coefficients: list          # fitted b(r): u_r ~ b |x'|^2 - beta x_N - gamma
    linear: list
    constants: list
    residuals: list             # weighted rms misfit per radius
    dim: int

    @property
    def trace(self):
        """(N-1) * b from the largest radius; should approach 1/2."""
        return (self.dim - 1) * self.coefficients[-1]


def blowdown_estimate(solution, radii, n_theta=64):
    """Fit u_r on the unit sphere to b sin^2(theta) + beta cos(theta) + gamma.

    The three basis functions are mutually orthogonal pieces on the sphere
    (quadratic in x', linear in x_N, constant), so the quadratic coefficient
    is clean of linear contamination.  Radii must keep r * sphere inside the
    solved box.
    """
    from .quadrature import polar_rule
    N = solution.dim
    theta, w = polar_rule(N, n_theta)
    s, c = np.sin(theta), np.cos(theta)
    design = np.column_stack([s ** 2, c, np.ones_like(c)])
    sw = np.sqrt(w)
    coeffs, lins, consts, res = [], [], [], []
    for r in radii:
        vals = solution.value(r * s, r * c) / r ** 2
        sol, *_ = np.linalg.lstsq(design * sw[:, None], vals * sw, rcond=None)
        fit = design @ sol
        coeffs.append(float(sol[0]))
        lins.append(float(sol[1]))
        consts.append(float(sol[2]))
        res.append(float(np.sqrt(np.sum(w * (vals - fit) ** 2) / np.sum(w))))
    return BlowdownEstimate(list(radii), coeffs, lins, consts, res, N)
