"""pathlaw: a particle-simulation laboratory for path-distribution
dependent stochastic functional differential equations.

The package simulates interacting-particle approximations of SDEs whose
drift depends on the law of the solution segment, and verifies
quantitative properties of the dynamics by Monte Carlo: Picard-iteration
contraction, Wasserstein-2 stability bounds, Harnack-type inequalities
via coupling by change of measure, and integration-by-parts identities.
"""

__version__ = "0.1.0"

from .bounds import (
    ContractionParams,
    DiscreteMeasure,
    ExoResult,
    PinskerReport,
    contraction_bound,
    contraction_bound_detail,
    eps_grid,
    exo_criterion,
    pinsker_check,
    relative_entropy,
)
from .coupling import (
    CouplingResult,
    CouplingRun,
    HarnackReport,
    PowerHarnackReport,
    coupled_simulate,
    gamma_bar,
    log_harnack_check,
    power_harnack_check,
)
from .ibp import (
    IbpReport,
    PathRun,
    ShiftHarnackReport,
    ShiftPlan,
    build_shift_plan,
    density_ratio_second_moment,
    ibp_check,
    malliavin_weight,
    shift_harnack_check,
    shift_harnack_factor,
)
from .models import (
    CoefficientModel,
    RegularityConstants,
    TestFunction,
    constant_test_function,
    coordinate_test_function,
    finite_difference_drift_dir,
    generator_apply,
    generator_apply_many,
    make_linear_meanfield_delay,
    quadratic_test_function,
)
from .pathspace import (
    CameronMartinVector,
    EmpiricalPathMeasure,
    PathGrid,
    Segment,
    Trajectory,
    h1_norm_sq,
    segment_at,
    sup_norm,
    sup_norm_many,
)
from .simulate import (
    Ensemble,
    PicardReport,
    SimConfig,
    SimResult,
    SimulationError,
    WeakFormResidual,
    picard_contraction_coefficient,
    picard_solve,
    sample_brownian_segments,
    sample_constant_segments,
    simulate_mckean,
    suggest_picard_window,
    verify_fpke_weak_form,
)
from .transport import (
    BRUTEFORCE_CAP,
    EXACT_SOLVER_CAP,
    SinkhornResult,
    ground_cost_matrix,
    paired_cost,
    w2_bruteforce,
    w2_exact,
    w2_sinkhorn,
)

__all__ = [name for name in dir() if not name.startswith("_")]
