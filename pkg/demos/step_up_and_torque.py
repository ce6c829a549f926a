"""Plan the bundled 0.31 m step-up with and without the knee-torque task.

Solves both variants (roughly a minute on one core), prints how the
leading-leg torque heuristic changes, and sketches the two profiles.
"""
import numpy as np

import stepup

scenario = stepup.canonical_scenario()
print(f"scenario: {scenario.name}, {scenario.n_phases} phases x {scenario.knots_per_phase} knots")

cmp = stepup.torque_reduction_experiment(scenario)
for label, sol in (("with torque task", cmp.with_task), ("without", cmp.without_task)):
    r = sol.report
    print(f"{label:<17} {r.status.value}, objective {r.objective:.3f}, "
          f"duration {sol.T.sum():.2f} s, wall {r.wall_time:.1f} s")

lead = cmp.leading_foot
print(f"\npeak |tau| on the leading ({lead}) leg: {cmp.max_tau_with:.3f} vs {cmp.max_tau_without:.3f} "
      f"-> {cmp.reduction:.0%} lower")

# Crude text plot: one row per interval, bar length proportional to |tau|.
scale = 40 / max(cmp.max_tau_without, 1e-9)
print("\ninterval  with task                                 without")
for k, (a, b) in enumerate(zip(np.abs(cmp.tau_with[lead]), np.abs(cmp.tau_without[lead]))):
    if k % 2 == 0:
        print(f"{k:>8}  {'#' * int(a * scale):<41} {'#' * int(b * scale)}")

result = stepup.rollout(cmp.with_task, scenario)
audit = stepup.audit_constraints(result, scenario)
print(f"\nrollout: knots reproduced to {result.knot_discrepancy(cmp.with_task).max() * 1e3:.2f} mm, "
      f"audit {'clean' if audit.clean else 'has violations'}")
