"""Additional-food prey-predator models and minimum-time food-steering.

Simulation of two predator-prey families (sigmoidal and group-defence
consumption, both with predator self-limitation and an additional food
supply), plus solvers for reaching a prescribed state in minimum time by
steering the quality or quantity of that food, with diagnostics against the
minimum principle.
"""

from .models import (
    BoundConstants,
    ControlSpec,
    ControlVariable,
    DimensionalParamsH3,
    DimensionalParamsH4,
    Params,
    ParamsH3,
    ParamsH4,
    SimState,
    affine_parts,
    bound_constants,
    clock_rate,
    lyapunov_weight,
    nondimensionalize_h3,
    nondimensionalize_h4,
    rhs_scaled,
    rhs_time,
    scaled_jacobian,
    validate_state,
    with_control,
)
from .integrators import (
    IntegratorOptions,
    MaxStepsExceededError,
    NonFiniteError,
    PiecewiseControl,
    Trajectory,
    integrate_adaptive,
    integrate_fixed,
    pull_back_control,
    reparametrize_to_time,
    simulate_scaled,
    simulate_time,
)
from .pmp import (
    Costate,
    DegeneratePointError,
    adjoint_rhs,
    bang_bang_law,
    hamiltonian,
    singular_locus,
    singular_locus_roots,
    singular_ratio_dsigma0,
    singular_ratio_sigma0,
    switching_function,
    switching_rate_coefficients,
)
from .bfgs import (
    BFGSResult,
    LineSearchError,
    OptimizerOptions,
    bfgs_minimize,
    box_reparam,
)
from .solve import (
    OptimalSolution,
    PMPReport,
    SolverOptions,
    TOCProblem,
    reconstruct_costate,
    solve_direct,
    solve_switching_times,
    verify_pmp,
)

__version__ = "0.1.0"
