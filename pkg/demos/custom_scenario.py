"""Build a small step-up scenario in code, plan it and export the trajectory.

A 15 cm step taken with the right foot first and the landing foot turned
by 10 degrees. A coarse grid (six knots per phase) keeps the solve short.
"""
import sys
import tempfile
from pathlib import Path

import numpy as np

import stepup
from stepup import CoMState, FootSpec, Phase, Scenario, TerminalTarget, rotation_from_ypr

height = 0.15
left_floor = FootSpec([0.0, 0.1, 0.0])
right_floor = FootSpec([0.0, -0.1, 0.0])
right_step = FootSpec([0.35, -0.1, height], rotation_from_ypr(-10.0))
left_step = FootSpec([0.35, 0.1, height])

phases = [
    Phase("double", left_floor, right_floor),
    Phase("left", left=left_floor),
    Phase("double", left_floor, right_step),
    Phase("right", right=right_step),
    Phase("double", left_step, right_step),
]
scenario = Scenario(
    phases,
    CoMState([0.0, 0.0, 1.0], [0.0, 0.0, 0.0]),
    TerminalTarget([0.35, 0.0, 1.0 + height]),
    knots_per_phase=6,
    leading_foot="r",
)

solution = stepup.plan(scenario)
report = solution.report
print(f"solver: {report.status.value} after {report.iterations} outer iterations, "
      f"violation {report.max_violation:.1e}")
print("phase durations [s]:", np.round(solution.T, 3))

result = stepup.rollout(solution, scenario, substeps_per_interval=20)
audit = stepup.audit_constraints(result, scenario)
print(f"dense audit: {'clean' if audit.clean else f'{len(audit.violations)} violations'}; "
      f"final CoM {np.round(result.x[-1], 3)}")

out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp())
stepup.write_trajectory_csv(out / "custom_trajectory.csv", result)
print("trajectory written to", out / "custom_trajectory.csv")
