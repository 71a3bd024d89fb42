"""Feasibility and solvability boundaries of power-flow equations.

Boundary points are found by transversality-enforced Newton-Raphson (TENR)
on ``[F(x, lam); sigma_min(J(x))] = 0`` and traced as curves in a
two-parameter plane by spherical predictor-corrector continuation.  Voltage
limits on load buses enter through slack variables, so the same machinery
traces the feasibility boundary (limits active or solvability lost) and the
solvability boundary (limit rows dropped).
"""

from .boundary import (
    BoundarySystem,
    BranchSwitcher,
    NewtonSettings,
    SeedPoint,
    find_seeds,
    plane_system,
    tenr_solve,
)
from .errors import (
    ConvergenceError,
    CorrectorDiverged,
    DegenerateBranchError,
    DegenerateSigmaError,
    DimensionMismatch,
    EmptyInput,
    EmptySeedSet,
    FeasboundError,
    NoConvergence,
    ParseError,
    RankDeficientError,
    UnsupportedFeature,
    ValidationError,
)
from .netcase import (
    AdmittanceMatrix,
    BranchRecord,
    BusKind,
    BusRecord,
    CaseFormat,
    NetworkCase,
    build_ybus,
    builtin_case,
    load_case,
    three_bus_case,
)
from .oracle import (
    BoundaryKind,
    CellClass,
    ScanGrid,
    ScanResult,
    branch_check,
    classify_grid,
    classify_point,
    extract_boundary,
    hausdorff,
)
from .pfsystem import Binding, LimitFlag, ParameterVector, feasibility_flags, layout, residual
from .tracer import (
    BoundaryCurve,
    RadiusPolicy,
    SphereConstraint,
    TangentInfo,
    Termination,
    TraceSettings,
    TraceStep,
    adapt_radius,
    correct,
    curvature_tau,
    detect_reversion,
    predict,
    sweep_contours,
    tangent,
    trace_curve,
    trace_seeds,
)
from .transversality import SingularTriplet, gsvd

__version__ = "0.1.0"
