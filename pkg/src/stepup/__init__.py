"""Centre-of-mass trajectory planning for stepping onto a platform.

A variable-height double-pendulum contact model is transcribed with direct
multiple shooting and solved by a bound-constrained augmented-Lagrangian
method. Plans are checked by dense forward integration.

Typical use::

    import stepup
    scenario = stepup.canonical_scenario()
    solution = stepup.plan(scenario)
    result = stepup.rollout(solution, scenario)
    audit = stepup.audit_constraints(result)
"""

from .constraints import (
    FEASIBILITY_TOL,
    ConstraintResiduals,
    ContactContext,
    FrictionParams,
    HalfspaceSet,
    LegLimits,
    evaluate_knot_constraints,
    friction_cone_residual,
    leg_length_residuals,
    polygon_to_halfspaces,
    torsional_matrix,
    torsional_residuals,
)
from .errors import (
    ConfigurationError,
    DivergenceError,
    InvalidInputError,
    NumericalFailure,
    PolygonDegenerateError,
    ScenarioError,
    StepUpError,
)
from .model import (
    CoMState,
    ContactMode,
    ControlInput,
    FootSpec,
    contact_acceleration,
    cop_world,
    foot_force,
    rotation_from_ypr,
    taylor_step,
)
from .objectives import (
    CostBreakdown,
    TaskWeights,
    TerminalTarget,
    TorqueHeuristicParams,
    control_variation_cost,
    knee_torque_heuristic,
    regularization_cost,
    terminal_cost,
    torque_cost,
)
from .planner import PlanSolution, plan
from .scenario_io import (
    canonical_scenario,
    load_scenario,
    parse_scenario,
    serialize_scenario,
    write_trajectory_csv,
)
from .solver import SolveReport, SolverConfig, Status, gradient, solve
from .transcription import NlpProblem, Phase, Scenario, VariableLayout, build_layout, build_nlp, initial_guess
from .validation import (
    AuditReport,
    RolloutResult,
    TorqueComparison,
    audit_constraints,
    rollout,
    torque_reduction_experiment,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
