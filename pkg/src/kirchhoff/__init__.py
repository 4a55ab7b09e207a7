"""Regime constants, energy machinery and radial solvers for the critical
Kirchhoff functional on balls.

The public surface re-exports the main entry points of each submodule so that
``import kirchhoff as kh`` is enough for interactive use.
"""

from .constants import (
    KirchhoffParams,
    RegimeReport,
    SharpConstants,
    classify,
    critical_exponent,
    limit_check_d_to_4,
    regime_key,
    sharp_constants,
    sharp_constants_real,
    sobolev_constant,
    unit_ball_volume,
)
from .scalar import (
    ScalarProfile,
    lsc_equivalence_check,
    positivity_certificate,
    root_x0,
)
from .radial import (
    NormBundle,
    RadialField,
    RadialGrid,
    discrete_sobolev_ratio,
    field_from_callable,
    field_from_dict,
    field_to_dict,
    h1_inner,
    h1_norm,
    lq_norm,
    make_field,
    make_grid,
    norm_bundle,
    prolong,
    read_field_csv,
    refine,
    write_field_csv,
)
from .functional import (
    EnergyBreakdown,
    PerturbationSpec,
    directional_derivative,
    dual_gradient,
    energy,
    residual_norm,
    riesz_gradient,
    second_form,
)
from .solvers import (
    DivergenceError,
    SolveResult,
    SolverConfig,
    UnboundedEnergyError,
    apriori_bound,
    apriori_check,
    fixed_point_solve,
    minimize,
    multistart_search,
    uniqueness_probe,
)
from .cutoff import (
    CutoffSpec,
    build_cutoff,
    cutoff_crit_lower_bound,
    cutoff_h1_norm_sq,
    cutoff_source_lower_bound,
    find_sigma0,
    hypothesis_check_H1_H2,
    lambda_star_estimate,
    lambda_tilde,
    power_source,
)

__version__ = "0.1.0"
