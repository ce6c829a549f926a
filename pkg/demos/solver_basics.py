"""Drive the augmented-Lagrangian solver on three textbook problems.

Each problem is written as plain functions of the decision vector; the same
forward-mode derivatives used by the step planner supply the gradients.
"""
import numpy as np

from stepup import NlpProblem, SolverConfig, solve

problems = [
    ("bound-active quadratic", NlpProblem.from_functions(1, lambda z: (z[0] - 1.0) ** 2, lower=[2.0]),
     [5.0], [2.0]),
    ("quadratic on a line", NlpProblem.from_functions(
        2, lambda z: (z[0] - 3.0) ** 2 + (z[1] + 1.0) ** 2, equality=lambda z: z[0] + z[1]),
     [0.0, 0.0], [2.0, -2.0]),
    ("Rosenbrock valley", NlpProblem.from_functions(
        2, lambda z: (1.0 - z[0]) ** 2 + 100.0 * (z[1] - z[0] ** 2) ** 2),
     [-1.2, 1.0], [1.0, 1.0]),
]

for title, nlp, guess, known in problems:
    print(f"\n{title}")
    for mode in ("algorithmic", "central_difference"):
        z, report = solve(nlp, guess, SolverConfig(gradient_mode=mode))
        print(f"  {mode:<19} {report.status.value:<10} z={np.round(z, 6)} "
              f"error={np.abs(z - known).max():.1e} inner steps={report.inner_iterations}")

# A problem with no feasible point ends in a diagnosis instead of a silent answer.
nlp = NlpProblem.from_functions(1, lambda z: z[0] ** 2, equality=lambda z: z[0] - 5.0, upper=[1.0])
_, report = solve(nlp, [0.0], SolverConfig(max_outer_iterations=20))
print(f"\nequality outside the box: {report.status.value}, violation {report.max_violation:.3f}")
