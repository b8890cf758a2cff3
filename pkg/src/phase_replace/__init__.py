"""Radial field surgery with certified energy decrease for vector
phase-transition functionals on 2-D grids, plus the strip column-measure
experiment built on top of it."""

from .energy import (
    EnergyBreakdown,
    ResidualField,
    energy_gradient,
    euler_lagrange_residual,
    total_energy,
)
from .flow import (
    CflViolationError,
    FlowConfig,
    FlowHistory,
    best_of_seeds,
    cfl_time_step,
    minimize,
    seeded_smooth_noise,
)
from .grids import (
    BoundarySpec,
    Grid2,
    PolarDecomposition,
    RegionMask,
    VectorField2D,
    apply_boundary,
    box_mask,
    column_tail_mask,
    constant_field,
    dump_field,
    dump_mask,
    field_from_function,
    full_mask,
    load_field,
    pin_dirichlet,
    polar_decompose,
    sublevel_mask,
)
from .potentials import (
    DegenerateW0Error,
    EvaluationError,
    HalfPlane,
    HReport,
    Potential,
    check_hypothesis_H,
    min_w_outside,
    radial_oscillation,
    radial_quadratic,
    scalar_double_well,
    two_well,
    zero_potential,
)
from .replacement import (
    CutoffParams,
    LevelCollisionError,
    ReplacementReport,
    SurgeryRejectedError,
    clamp_at_r_map,
    cutoff_alpha,
    radial_truncation_map,
    replace,
    select_noncritical_level,
)
from .strip_measures import (
    ColumnInterval,
    ExperimentConfig,
    ExperimentRow,
    MeasureReport,
    NoGoodColumnError,
    column_lower_bound_check,
    compute_measures,
    compute_w0,
    eta0_constant,
    extract_L_interval,
    run_corollary_experiment,
    run_single_R,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
