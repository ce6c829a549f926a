"""Command-line front end.

``stepup plan``           solve a scenario, roll it out, audit it
``stepup validate``       re-audit a saved plan against its scenario
``stepup compare-torque`` solve with and without the torque task

Exit status: 0 on success, 1 when the solve or audit fails, 2 on I/O or
scenario errors. Output files are deterministic for fixed inputs; timings go
to stdout only.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import autodiff as ad
from .errors import DivergenceError, InvalidInputError, StepUpError
from .planner import PlanSolution, plan
from .scenario_io import (
    load_scenario,
    serialize_scenario,
    validate_document,
    write_json,
    write_trajectory_csv,
)
from .solver import SolverConfig
from .validation import audit_constraints, rollout, torque_reduction_experiment

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_INPUT = 2
AUDIT_TOLERANCE = 1e-4


class _InputProblem(Exception):
    """Anything that maps to exit status 2."""


def _report_dict(report):
    doc = report.as_dict()
    doc["wall_time"] = None
    return doc


def _load(path):
    try:
        return load_scenario(path)
    except OSError as exc:
        raise _InputProblem(f"cannot read scenario {path}: {exc.strerror or exc}") from exc
    except (StepUpError, ValueError) as exc:
        raise _InputProblem(f"invalid scenario {path}: {exc}") from exc


def _prepare_out(path):
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise _InputProblem(f"cannot create output directory {path}: {exc.strerror or exc}") from exc
    return path


def audit_document(plan_solution, scenario, substeps):
    """Roll out, audit and return ``(audit dict, rollout result or None)``."""
    try:
        result = rollout(plan_solution, scenario, substeps_per_interval=substeps)
    except DivergenceError as exc:
        doc = {"tolerance": AUDIT_TOLERANCE, "clean": False, "violation_count": 0,
               "violations": [], "checked": {}, "worst": {}, "error": str(exc)}
        return doc, None
    audit = audit_constraints(result, scenario, tolerance=AUDIT_TOLERANCE)
    doc = audit.to_dict()
    doc["rollout"] = {
        "integrator": result.integrator,
        "restart": result.restart,
        "substeps_per_interval": int(substeps),
        "samples": len(result.t),
        "max_knot_discrepancy": float(result.knot_discrepancy(plan_solution).max()),
        "terminal_position_error": result.terminal_position_error,
        "terminal_velocity_error": result.terminal_velocity_error,
    }
    return doc, result


def _write_outputs(out, scenario, solution, substeps, suffix=""):
    plan_doc = solution.to_dict()
    plan_doc.pop("report")
    write_json(os.path.join(out, f"plan{suffix}.json"), {
        "scenario": serialize_scenario(scenario),
        "plan": plan_doc,
        "report": _report_dict(solution.report),
    }, "plan")
    audit, result = audit_document(solution, scenario, substeps)
    write_json(os.path.join(out, f"audit{suffix}.json"), audit, "audit")
    if result is not None:
        write_trajectory_csv(os.path.join(out, f"trajectory{suffix}.csv"), result)
    return audit


def _summary(label, solution, audit):
    r = solution.report
    print(f"{label}status={r.status.value} objective={r.objective:.6g} "
          f"violation={r.max_violation:.3g} outer={r.iterations} inner={r.inner_iterations} "
          f"time={r.wall_time:.1f}s audit={'clean' if audit['clean'] else 'VIOLATED'} "
          f"({audit['violation_count']} samples above {AUDIT_TOLERANCE:g})")


def cmd_plan(scenario_path, out_dir, config=None, substeps=20):
    """Solve, roll out and audit; writes plan.json, trajectory.csv and audit.json."""
    try:
        scenario = _load(scenario_path)
        out = _prepare_out(out_dir)
        solution = plan(scenario, config or SolverConfig())
        audit = _write_outputs(out, scenario, solution, substeps)
    except _InputProblem as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"error: cannot write outputs: {exc}", file=sys.stderr)
        return EXIT_INPUT
    _summary("", solution, audit)
    return EXIT_OK if solution.converged and audit["clean"] else EXIT_FAILED


def cmd_validate(scenario_path, plan_path, out_dir, substeps=20):
    """Audit a saved plan.json; writes trajectory.csv and audit.json."""
    try:
        scenario = _load(scenario_path)
        with open(plan_path, encoding="utf-8") as fh:
            doc = json.load(fh)
        validate_document(doc, "plan")
        solution = PlanSolution.from_dict(doc["plan"])
        out = _prepare_out(out_dir)
        audit, result = audit_document(solution, scenario, substeps)
        write_json(os.path.join(out, "audit.json"), audit, "audit")
        if result is not None:
            write_trajectory_csv(os.path.join(out, "trajectory.csv"), result)
    except _InputProblem as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (OSError, ValueError, KeyError, StepUpError) as exc:
        print(f"error: {plan_path}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    print(f"audit={'clean' if audit['clean'] else 'VIOLATED'} "
          f"({audit['violation_count']} samples above {AUDIT_TOLERANCE:g})")
    return EXIT_OK if audit["clean"] else EXIT_FAILED


def cmd_compare_torque(scenario_path, out_dir, config=None, substeps=20):
    """Solve with and without the torque task; writes comparison.json and both trajectories."""
    try:
        scenario = _load(scenario_path)
        out = _prepare_out(out_dir)
        comparison = torque_reduction_experiment(scenario, config or SolverConfig())
        without = scenario.replace(weights=scenario.weights.replace(w_tau=0.0, w_tau_max=0.0))
        audits = {
            "with_task": _write_outputs(out, scenario, comparison.with_task, substeps, "_with_task"),
            "without_task": _write_outputs(out, without, comparison.without_task, substeps,
                                           "_without_task"),
        }
        write_json(os.path.join(out, "comparison.json"), comparison.to_dict(), "comparison")
    except _InputProblem as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"error: cannot write outputs: {exc}", file=sys.stderr)
        return EXIT_INPUT
    for key, sol in (("with_task", comparison.with_task), ("without_task", comparison.without_task)):
        _summary(f"[{key}] ", sol, audits[key])
    print(f"status={comparison.status} leading_foot={comparison.leading_foot} "
          f"max|tau| with={comparison.max_tau_with:.4g} without={comparison.max_tau_without:.4g} "
          f"reduction={comparison.reduction:.1%}")
    return EXIT_OK if comparison.status == "ok" else EXIT_FAILED


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def _positive_float(text):
    value = float(text)
    if not (np.isfinite(value) and value > 0):
        raise argparse.ArgumentTypeError("must be a positive number")
    return value


def build_parser():
    parser = argparse.ArgumentParser(
        prog="stepup", description="Plan CoM trajectories for stepping onto a platform.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--scenario", required=True, help="scenario JSON file")
        p.add_argument("--out", required=True, help="output directory (created if missing)")
        p.add_argument("--substeps", type=_positive_int, default=20,
                       help="rollout integration steps per shooting interval (default 20)")

    def solver_flags(p):
        p.add_argument("--max-iter", type=_positive_int, default=SolverConfig.max_outer_iterations,
                       help="outer augmented-Lagrangian iterations")
        p.add_argument("--tol", type=_positive_float, default=SolverConfig.constraint_tolerance,
                       help="constraint-violation tolerance")
        p.add_argument("--gradient-mode", choices=ad.GRADIENT_MODES, default=ad.ALGORITHMIC)

    p = sub.add_parser("plan", help="solve a scenario, write plan, trajectory and audit")
    common(p)
    solver_flags(p)
    p = sub.add_parser("validate", help="roll out and audit a saved plan.json")
    common(p)
    p.add_argument("--plan", required=True, help="plan.json written by 'stepup plan'")
    p = sub.add_parser("compare-torque", help="compare peak knee torque with and without the task")
    common(p)
    solver_flags(p)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "validate":
        return cmd_validate(args.scenario, args.plan, args.out, args.substeps)
    try:
        config = SolverConfig(max_outer_iterations=args.max_iter, constraint_tolerance=args.tol,
                              gradient_mode=args.gradient_mode)
    except (StepUpError, InvalidInputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    if args.command == "plan":
        return cmd_plan(args.scenario, args.out, config, args.substeps)
    return cmd_compare_torque(args.scenario, args.out, config, args.substeps)


if __name__ == "__main__":
    sys.exit(main())
