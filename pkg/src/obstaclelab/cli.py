"""Command line front end.

Subcommands:

* ``potential``   evaluate the Newtonian potential of a ball or ellipsoid
                  at a point, optionally cross-checked by Monte Carlo
* ``construct``   run the ellipsoid-sequence construction for a blow-down
                  profile and print the per-term table and the limit
* ``solve``       run the axisymmetric obstacle solver against the analytic
                  boundary data of a constructed solution; dump the grid
* ``frequency``   frequency scan of a constructed solution
* ``heleshaw``    weak residual of the moving-source flow
* ``verify``      quick invariant bundle, one pass/fail line each

All output is JSON on stdout (sorted keys).  Runs are deterministic for a
fixed configuration and seed.  Exit status 0 means every requested check
passed, 1 means some check failed, 2 means the request itself was invalid.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys

import numpy as np

from . import construct, diagnostics, geometry, potential, solver

PRESETS = {
    "isotropic": dict(coefficients=(0.1, 0.1, 0.1, 0.1, 0.1),
                      slope=1.0 / 6.0, constant=0.0),
    "anisotropic": dict(coefficients=(0.08, 0.09, 0.1, 0.11, 0.12),
                        slope=0.2, constant=0.0),
}

BODY_PRESETS = {
    "ball": (1.0, 1.0, 1.0, 1.0, 1.0, 1.0),
    "ellipsoid": (1.0, 1.1, 1.2, 1.3, 1.4, 1.5),
}


def _emit(obj):
    print(json.dumps(obj, sort_keys=True, indent=2, default=_jsonable))


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(type(x).__name__)


def _write_csv(path, header_comment, fieldnames, rows):
    with open(path, "w", newline="") as fh:
        fh.write(header_comment.rstrip("\n") + "\n")
        writer = csv.writer(fh)
        writer.writerow(fieldnames)
        writer.writerows(rows)


def _blowdown_from_args(args):
    if args.preset is not None:
        preset = PRESETS[args.preset]
        return geometry.BlowdownData(preset["coefficients"], preset["slope"],
                                     preset["constant"])
    if args.coefficients is None or args.slope is None:
        raise SystemExit2("need --preset or --coefficients plus --slope")
    return geometry.BlowdownData(tuple(args.coefficients), args.slope,
                                 args.constant)


class SystemExit2(SystemExit):
    def __init__(self, message):
        print("error: %s" % message, file=sys.stderr)
        super().__init__(2)


def _schedule(args):
    return tuple(args.schedule) if args.schedule else None


# ---------------------------------------------------------------------------
# subcommands

def cmd_potential(args):
    if args.body in BODY_PRESETS and args.semiaxes is None:
        semiaxes = BODY_PRESETS[args.body]
    elif args.semiaxes is not None:
        semiaxes = tuple(args.semiaxes)
    else:
        raise SystemExit2("unknown body %r and no --semiaxes given" % args.body)
    E = geometry.Ellipsoid(semiaxes)
    x = np.asarray(args.point, dtype=float)
    if x.shape != (E.dim,):
        raise SystemExit2("point has %d coordinates, body lives in %d"
                          % (x.size, E.dim))
    val = float(potential.ellipsoid_potential(E, x))
    out = {"potential": val, "method": "confocal", "dim": E.dim,
           "semiaxes": list(semiaxes), "point": x.tolist()}
    if args.gradient:
        out["gradient"] = potential.ellipsoid_potential_gradient(E, x).tolist()
    ok = True
    if args.check_mc:
        lo = E.center - E.semiaxes
        hi = E.center + E.semiaxes
        est, err = potential.montecarlo_potential(
            lambda p: E.contains(p), potential.BoxSampler(lo, hi), x,
            n_samples=args.mc_samples, seed=args.seed)
        out["mc_potential"] = est
        out["mc_stderr"] = err
        out["mc_agrees_3sigma"] = ok = bool(
            abs(est - val) <= 3.0 * err + 1e-12)
    _emit(out)
    return 0 if ok else 1


def cmd_construct(args):
    b = _blowdown_from_args(args)
    sol = construct.construct_paraboloid(b, schedule=_schedule(args),
                                         ratio_tol=args.ratio_tol,
                                         vertex_tol=args.vertex_tol)
    P = sol.paraboloid
    out = {
        "dim": b.dim,
        "coefficients": list(b.coefficients),
        "slope": b.slope,
        "constant": b.constant,
        "sectional_semiaxes": P.sectional_semiaxes.tolist(),
        "vertex_depth": P.vertex_depth,
        "expansion_constant": sol.expansion_constant,
        "table": sol.table,
    }
    _emit(out)
    if args.csv:
        rows = [[r.get("n", ""), json.dumps(r, sort_keys=True,
                                            default=_jsonable)]
                for r in sol.table]
        _write_csv(args.csv,
                   "# ellipsoid sequence table; identity residuals are "
                   "max |V - (slope z - q)| over interior samples, "
                   "tolerance 1e-6",
                   ["n", "row_json"], rows)
    return 0


def cmd_solve(args):
    b = _blowdown_from_args(args)
    if not b.is_isotropic():
        raise SystemExit2("the axisymmetric solver needs an isotropic preset")
    sol = construct.construct_paraboloid(b)
    P = sol.paraboloid
    vz = P.vertex_height
    rho_max = args.rho_max if args.rho_max else 1.5
    z0 = args.z_min if args.z_min is not None else vz - 0.75
    z1 = args.z_max if args.z_max is not None else vz + 1.25
    N = b.dim

    def boundary(rho, z):
        pts = np.zeros(np.broadcast(rho, z).shape + (N,))
        pts[..., 0] = rho
        pts[..., -1] = z
        return sol.u(pts)

    grid = solver.solve_obstacle(N, boundary, rho_max, (z0, z1), args.h,
                                 tol=args.tol, omega=args.omega)
    RR, ZZ = np.meshgrid(grid.rho, grid.z, indexing="ij")
    gap = float(np.max(np.abs(grid.u - boundary(RR, ZZ))))
    out = {
        "dim": N, "h": args.h, "rho_max": rho_max, "z_range": [z0, z1],
        "sweeps": grid.sweeps, "residual": grid.final_residual,
        "max_gap_vs_analytic": gap, "tol": grid.tol,
    }
    if args.out:
        np.save(args.out + ".npy", grid.u)
        with open(args.out + ".json", "w") as fh:
            json.dump({k: out[k] for k in sorted(out)}, fh, sort_keys=True,
                      indent=2)
        out["dump"] = args.out + ".npy"
    _emit(out)
    return 0


def cmd_frequency(args):
    b = _blowdown_from_args(args)
    sol = construct.construct_paraboloid(b)
    u = diagnostics.solution_field(sol)
    rep = diagnostics.frequency_scan(u, sol.blowdown, tuple(args.radii))
    out = {
        "radii": rep.radii, "values": rep.values,
        "quad_errors": rep.quad_errors,
        "nonpositive": rep.nonpositive, "nondecreasing": rep.nondecreasing,
    }
    _emit(out)
    if args.csv:
        _write_csv(args.csv,
                   "# frequency F1(r), dimensionless; pass means "
                   "nonpositive and nondecreasing within 1e-7",
                   ["radius", "F1", "quad_error"],
                   list(zip(rep.radii, rep.values, rep.quad_errors)))
    return 0 if (rep.nonpositive and rep.nondecreasing) else 1


def cmd_heleshaw(args):
    b = _blowdown_from_args(args)
    if not b.is_isotropic():
        raise SystemExit2("the moving-source residual needs a round preset")
    sol = construct.construct_paraboloid(b)
    vz = sol.paraboloid.vertex_height
    bumps = [
        diagnostics.SmoothBump(0.35, vz + 0.05, vz + 0.55, 0.1, 0.9),
        diagnostics.SmoothBump(0.5, vz + 0.35, vz + 0.85, 0.1, 0.9),
        diagnostics.SmoothBump(0.4, vz + 0.75, vz + 1.25, 0.1, 0.9),
    ]
    rep = diagnostics.hele_shaw_residual(sol, args.speed, bumps,
                                         tuple(args.resolutions))
    ok = all(r > 2.0 for row in rep.ratios for r in row)
    _emit({"resolutions": rep.resolutions, "residuals": rep.residuals,
           "ratios": rep.ratios, "speed": rep.speed,
           "second_order": ok})
    return 0 if ok else 1


def cmd_verify(args):
    checks = []
    rng = np.random.default_rng(args.seed)

    def record(name, ok, detail):
        checks.append({"name": name, "pass": bool(ok), "detail": detail})
        print("[%s] %s: %s" % ("PASS" if ok else "FAIL", name, detail))

    # interior trace across dimensions
    worst = 0.0
    for N in range(3, 9):
        for _ in range(10):
            semiaxes = np.exp(rng.uniform(-1.0, 1.0, size=N))
            E = geometry.Ellipsoid(semiaxes)
            iq = potential.ellipsoid_interior_coefficients(E)
            worst = max(worst, abs(iq.trace - 0.5))
    record("interior-trace", worst <= 1e-10, "max |trace - 1/2| = %.3e" % worst)

    # ball closed form
    E = geometry.Ellipsoid((1.0,) * 6)
    iq = potential.ellipsoid_interior_coefficients(E)
    gap = max(abs(iq.constant - 1.0 / 8.0),
              max(abs(q - 1.0 / 12.0) for q in iq.coefficients))
    record("ball-oracle", gap <= 1e-10, "max coefficient gap = %.3e" % gap)

    # homoeoid gap
    E = geometry.Ellipsoid((0.8, 1.0, 1.2, 0.9, 1.1, 1.05))
    pts = rng.uniform(-0.2, 0.2, size=(20, 6))
    g = potential.homoeoid_gap(E, 1.5, pts)
    spread = float(np.max(g) - np.min(g))
    record("homoeoid-constant", spread <= 1e-10, "spread = %.3e" % spread)

    # construction identity on the default schedule
    b = geometry.BlowdownData(**PRESETS["isotropic"])
    sol = construct.construct_paraboloid(b)
    res = max(t.identity_residual for t in sol.sequence.terms)
    record("sequence-identity", res <= 1e-6, "max residual = %.3e" % res)

    # frequency signs
    u = diagnostics.solution_field(sol)
    rep = diagnostics.frequency_scan(u, b, (0.5, 1.0, 2.0))
    record("frequency", rep.nonpositive and rep.nondecreasing,
           "values = %s" % ["%.3e" % v for v in rep.values])

    ok = all(c["pass"] for c in checks)
    if args.json:
        _emit({"checks": checks, "pass": ok})
    return 0 if ok else 1


# ---------------------------------------------------------------------------

def _add_blowdown_args(p):
    p.add_argument("--preset", choices=sorted(PRESETS), default=None)
    p.add_argument("--coefficients", type=float, nargs="+", default=None)
    p.add_argument("--slope", type=float, default=None)
    p.add_argument("--constant", type=float, default=0.0)


def build_parser():
    ap = argparse.ArgumentParser(prog="obstaclelab",
                                 description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("potential", help="Newtonian potential of a body")
    p.add_argument("--body", default="ball")
    p.add_argument("--semiaxes", type=float, nargs="+", default=None)
    p.add_argument("--point", type=float, nargs="+", required=True)
    p.add_argument("--gradient", action="store_true")
    p.add_argument("--check-mc", action="store_true")
    p.add_argument("--mc-samples", type=int, default=200000)
    p.add_argument("--seed", type=int, default=20260815)
    p.set_defaults(func=cmd_potential)

    p = sub.add_parser("construct", help="ellipsoid sequence construction")
    _add_blowdown_args(p)
    p.add_argument("--schedule", type=int, nargs="+", default=None)
    p.add_argument("--ratio-tol", type=float, default=1e-4)
    p.add_argument("--vertex-tol", type=float, default=1e-3)
    p.add_argument("--csv", default=None)
    p.set_defaults(func=cmd_construct)

    p = sub.add_parser("solve", help="axisymmetric obstacle solve")
    _add_blowdown_args(p)
    p.add_argument("--h", type=float, default=1.0 / 32)
    p.add_argument("--rho-max", type=float, default=None)
    p.add_argument("--z-min", type=float, default=None)
    p.add_argument("--z-max", type=float, default=None)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--omega", type=float, default=1.7)
    p.add_argument("--out", default=None,
                   help="dump basename (.npy grid + .json sidecar)")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("frequency", help="frequency scan")
    _add_blowdown_args(p)
    p.add_argument("--radii", type=float, nargs="+",
                   default=[0.25, 0.5, 1.0, 2.0, 4.0])
    p.add_argument("--csv", default=None)
    p.set_defaults(func=cmd_frequency)

    p = sub.add_parser("heleshaw", help="moving-source weak residual")
    _add_blowdown_args(p)
    p.add_argument("--speed", type=float, default=1.0)
    p.add_argument("--resolutions", type=float, nargs="+",
                   default=[1.0 / 16, 1.0 / 32])
    p.set_defaults(func=cmd_heleshaw)

    p = sub.add_parser("verify", help="quick invariant bundle")
    p.add_argument("--seed", type=int, default=20260815)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_verify)

    return ap


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except (geometry.GeometryError, ValueError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
