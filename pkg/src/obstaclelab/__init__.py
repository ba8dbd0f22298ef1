"""Newtonian potentials of ellipsoids and paraboloids, the ellipsoid-sequence
construction of paraboloid obstacle solutions, an axisymmetric projected-SOR
solver, and free-boundary diagnostics."""

from .geometry import (
    BlowdownData,
    Ellipsoid,
    EnvelopeSet,
    GeometryError,
    Paraboloid,
    ellipsoidal_coordinate,
    from_json,
    to_json,
)
from .potential import (
    DegenerateSamplerError,
    InteriorQuadratic,
    PotentialEvaluator,
    PotentialToleranceError,
    UnsupportedDimensionError,
    alpha_coefficient,
    ellipsoid_interior_coefficients,
    ellipsoid_potential,
    ellipsoid_potential_gradient,
    ellipsoid_potential_hessian,
    homoeoid_gap,
    montecarlo_potential,
    paraboloid_potential,
    round_paraboloid_exterior_potential,
)
from .construct import (
    ConstructionError,
    FitError,
    ParaboloidSolution,
    construct_paraboloid,
    ellipsoid_sequence_term,
    fit_ellipsoid,
    sectional_ellipsoid,
    solution_for_paraboloid,
)
from .solver import (
    GridSolution,
    IterationBudgetError,
    SolverError,
    blowdown_estimate,
    coincidence_mask,
    solve_obstacle,
)
from .diagnostics import (
    PreconditionError,
    SmoothBump,
    acf,
    acf_scan,
    compare_and_slide,
    doubling_f,
    doubling_scan,
    frequency_F1,
    frequency_scan,
    growth_envelope_check,
    hele_shaw_residual,
    potential_decay_scan,
    project_P2prime,
    round_reference_field,
    solution_field,
    subquadratic_check,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
