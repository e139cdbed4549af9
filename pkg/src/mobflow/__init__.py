"""Structure-preserving variational solver for nonlinear-mobility flows.

Each time step of the continuity equation rho_t = div(M(rho) grad dE/drho)
is posed as a transport-metric minimization and solved by primal-dual
splitting with a bound-preserving Newton proximal operator, so positivity,
saturation bounds, mass and energy dissipation hold by construction.
"""

from .grid import (
    ContinuityOp,
    Field,
    Grid,
    SbpConstraintOp,
    SolverError,
    State,
    apply_constraint,
    apply_constraint_adjoint,
    lambda_max_AAt,
    solve_AAt,
)
from .optimizer import (
    IterationStats,
    SbpConfig,
    SolverParams,
    project_ball,
    prox_dual,
    prox_dual_pre,
    solve_inner,
)
from .physics import (
    BoundaryClosure,
    EnergySpec,
    Potential,
    boundary_value,
    energy,
    energy_1d,
    energy_2d,
    energy_grad,
    energy_grad_1d,
    energy_grad_2d,
    potential_deriv,
    potential_value,
    wall_energy,
    wall_energy_deriv,
)
from .stepper import (
    Trajectory,
    ch_initial,
    ch_steady,
    check_trajectory,
    mollified_droplets,
    random_field,
    run,
    run_sbp,
    saturation_critical_mass,
    saturation_steady,
)
from .transport import (
    Mobility,
    ProxResult,
    action,
    prox_action,
    prox_action_field,
    transport_cost,
)

__version__ = "0.1.0"

__all__ = [
    "BoundaryClosure", "ContinuityOp", "EnergySpec", "Field", "Grid",
    "IterationStats", "Mobility", "Potential", "ProxResult", "SbpConfig",
    "SbpConstraintOp", "SolverError", "SolverParams", "State", "Trajectory",
    "action", "apply_constraint", "apply_constraint_adjoint", "boundary_value",
    "ch_initial", "ch_steady", "check_trajectory", "energy", "energy_1d",
    "energy_2d", "energy_grad", "energy_grad_1d", "energy_grad_2d",
    "lambda_max_AAt", "mollified_droplets", "potential_deriv", "potential_value",
    "project_ball", "prox_action", "prox_action_field", "prox_dual",
    "prox_dual_pre", "random_field", "run", "run_sbp",
    "saturation_critical_mass", "saturation_steady", "solve_AAt", "solve_inner",
    "transport_cost", "wall_energy", "wall_energy_deriv",
]
