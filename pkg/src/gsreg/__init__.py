"""Group zero-norm regularized least squares via multi-stage convex relaxation."""

from .groups import (
    BoxConstraint,
    GroupStructure,
    approx_group_zero_norm,
    contiguous_groups,
    equilibrium_residual,
    group_norms,
    l21_norm,
    project_box,
)
from .penalties import (
    CAPPED_L1,
    LQ,
    MCP,
    SCAD,
    PhiConstants,
    PhiSpec,
    lipschitz_estimate,
    phi_constants,
    phi_eval,
    psi_star_eval,
    rho_lower_bound,
    theta_eval,
    weight_from_subgradient,
)
from .wl21 import (
    AlmConfig,
    DualState,
    SolveStats,
    SubproblemSpec,
    alm_solve,
    dual_objective,
    primal_objective,
)
from .mscra import MscraConfig, MscraResult, StageTrace, default_nu, run
from .data import (
    Instance,
    OracleResult,
    assemble_multitask,
    brute_force_zero_norm,
    gen_design,
    gen_observations,
    gen_signal,
    make_instance,
    metrics,
    oracle_ls,
)

__version__ = "0.1.0"
