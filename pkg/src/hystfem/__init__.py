"""Parabolic PDEs with play/Preisach hysteresis: P1 FEM, backward Euler,
and a globally convergent arc-smoothing Newton solver."""

from .fem import (
    FeFunction,
    Mesh,
    apply_dirichlet,
    assemble_lumped_mass,
    assemble_mass,
    assemble_stiffness,
    build_uniform_mesh,
    error_norms,
)
from .hysteresis import (
    DrivenInit,
    ExplicitInit,
    GeneralizedPlayParams,
    PlayParams,
    PlayState,
    PreisachMemory,
    PreisachParams,
    ScalarPiecewiseC2,
    generalized_play_update,
    lorentzian_preisach_params,
    play_init,
    play_level_function,
    play_update,
    preisach_init,
    preisach_level_function,
    preisach_output,
    preisach_update,
)
from .model import ModelProblem, model_from_scalars
from .solver import (
    DualIterationSolver,
    FixedPointSolver,
    NewtonConfig,
    NonConvergence,
    SmoothedNonlinearity,
    SmoothingNewtonSolver,
    SolveReport,
    build_arc,
    cdist,
    detect_window,
    dual_iteration,
    eval_smoothed,
    fixed_point,
    smooth_nonlinearity,
    smoothing_newton,
    spd_solve,
    tangent_extendable,
)
from .stepping import (
    PlayHysteresis,
    PreisachHysteresis,
    TransientProblem,
    TransientState,
    advance,
    build_step_system,
    init_state,
    run_transient,
)

__version__ = "0.1.0"
