"""Independent checks of a plan: dense forward integration and constraint audits.

The rollout integrates the continuous model ``xdd = a(x, u)`` with the planned
controls held constant over each interval. It never reads the planned
accelerations, so agreement with the knots is evidence, not tautology.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .constraints import foot_residuals, polygon_to_halfspaces, residual_names
from .errors import ConfigurationError, DivergenceError, InvalidInputError
from .model import lever
from .objectives import torque_values
from .planner import PlanSolution, plan
from .solver import SolverConfig, Status

RK4 = "rk4"
TAYLOR = "taylor"


def _phase_feet(scenario):
    feet = []
    for phase in scenario.phases:
        entry = {}
        for side in ("l", "r"):
            foot = phase.foot(side)
            if phase.mode.in_contact(side):
                entry[side] = (foot, polygon_to_halfspaces(foot.polygon))
        feet.append(entry)
    return feet


def _acceleration(x, feet, lam, p, g):
    acc = -g
    for side, (foot, _) in feet.items():
        acc = acc + lam[side] * lever(x, foot.position, foot.rotation, p[side])
    return acc


def _advance(x, v, h, feet, lam, p, g, integrator):
    if integrator == TAYLOR:
        acc = _acceleration(x, feet, lam, p, g)
        return x + v * h + 0.5 * acc * h * h, v + acc * h
    a1 = _acceleration(x, feet, lam, p, g)
    x2, v2 = x + 0.5 * h * v, v + 0.5 * h * a1
    a2 = _acceleration(x2, feet, lam, p, g)
    x3, v3 = x + 0.5 * h * v2, v + 0.5 * h * a2
    a3 = _acceleration(x3, feet, lam, p, g)
    x4, v4 = x + h * v3, v + h * a3
    a4 = _acceleration(x4, feet, lam, p, g)
    return x + h / 6.0 * (v + 2 * v2 + 2 * v3 + v4), v + h / 6.0 * (a1 + 2 * a2 + 2 * a3 + a4)


@dataclass
class RolloutResult:
    t: np.ndarray
    x: np.ndarray
    v: np.ndarray
    a: np.ndarray
    interval: np.ndarray
    phase: np.ndarray
    lambda_l: np.ndarray
    lambda_r: np.ndarray
    p_l: np.ndarray
    p_r: np.ndarray
    cop_l: np.ndarray
    cop_r: np.ndarray
    force_l: np.ndarray
    force_r: np.ndarray
    tau_l: np.ndarray
    tau_r: np.ndarray
    residuals: dict
    knot_x: np.ndarray
    knot_v: np.ndarray
    terminal_position_error: float
    terminal_velocity_error: float
    integrator: str = RK4
    restart: str = "interval"

    @property
    def tau_max(self):
        return {"l": float(np.abs(self.tau_l).max()), "r": float(np.abs(self.tau_r).max())}

    def knot_discrepancy(self, plan_solution):
        """Per-knot position error between integrated and planned states."""
        return np.linalg.norm(self.knot_x - plan_solution.x, axis=1)


def rollout(plan_solution, scenario, substeps_per_interval=20, integrator=RK4, restart="interval"):
    """Integrate the planned controls densely.

    Parameters
    ----------
    substeps_per_interval : int
        Integration steps per shooting interval.
    integrator : {"rk4", "taylor"}
        ``"taylor"`` applies the planner's own constant-acceleration update
        and exists for cross-checks only.
    restart : {"phase", "interval", "none"}
        Re-initialize from the planned knot state at each phase start, at each
        interval start, or never (single open-loop shot). The open-loop model
        is unstable whenever a foot pushes, so long horizons amplify O(dt^3)
        local errors.
    """
    if int(substeps_per_interval) < 1:
        raise InvalidInputError("substeps_per_interval must be >= 1")
    if integrator not in (RK4, TAYLOR):
        raise ConfigurationError(f"unknown integrator {integrator!r}")
    if restart not in ("phase", "interval", "none"):
        raise ConfigurationError(f"unknown restart policy {restart!r}")
    sub = int(substeps_per_interval)
    N = plan_solution.knots_per_phase
    K = plan_solution.n_intervals
    if N != scenario.knots_per_phase or K != scenario.n_intervals:
        raise ConfigurationError("plan and scenario disagree on the knot layout")
    g = scenario.gravity
    feet = _phase_feet(scenario)
    dts = plan_solution.interval_dt()
    t_knots = plan_solution.knot_times()

    S = K * sub + 1
    t = np.empty(S)
    xs = np.empty((S, 3))
    vs = np.empty((S, 3))
    interval = np.empty(S, dtype=int)
    knot_x = np.empty((K + 1, 3))
    knot_v = np.empty((K + 1, 3))
    x = plan_solution.x[0].copy()
    v = plan_solution.v[0].copy()
    knot_x[0], knot_v[0] = x, v

    i = 0
    for k in range(K):
        ph = k // N
        if (restart == "interval" and k > 0) or (restart == "phase" and k > 0 and k % N == 0):
            x = plan_solution.x[k].copy()
            v = plan_solution.v[k].copy()
        lam = {"l": plan_solution.lambda_l[k], "r": plan_solution.lambda_r[k]}
        p = {"l": plan_solution.p_l[k], "r": plan_solution.p_r[k]}
        pf = feet[ph]
        h = dts[k] / sub
        for j in range(sub):
            t[i] = t_knots[k] + j * h
            xs[i], vs[i], interval[i] = x, v, k
            i += 1
            with np.errstate(over="ignore", invalid="ignore"):
                x, v = _advance(x, v, h, pf, lam, p, g, integrator)
            if not (np.all(np.isfinite(x)) and np.all(np.isfinite(v))):
                raise DivergenceError(f"rollout diverged at t={t_knots[k] + (j + 1) * h:.6f}",
                                      time=t_knots[k] + (j + 1) * h)
        knot_x[k + 1], knot_v[k + 1] = x, v
    t[i] = t_knots[K]
    xs[i], vs[i], interval[i] = x, v, K - 1
    if np.any(np.diff(t) <= 0):
        raise InvalidInputError("rollout time grid is not strictly increasing")

    return _annotate(plan_solution, scenario, t, xs, vs, interval, knot_x, knot_v, integrator, restart)


def _annotate(plan_solution, scenario, t, xs, vs, interval, knot_x, knot_v, integrator, restart):
    S = len(t)
    N = plan_solution.knots_per_phase
    phase = interval // N
    g = scenario.gravity
    feet = _phase_feet(scenario)
    lam = {"l": plan_solution.lambda_l[interval], "r": plan_solution.lambda_r[interval]}
    p = {"l": plan_solution.p_l[interval], "r": plan_solution.p_r[interval]}

    acc = np.tile(-g, (S, 1))
    cop = {side: np.full((S, 3), np.nan) for side in ("l", "r")}
    force = {side: np.zeros((S, 3)) for side in ("l", "r")}
    tau = {side: np.zeros(S) for side in ("l", "r")}
    residuals = {}
    for ph_i, pf in enumerate(feet):
        sel = phase == ph_i
        if not np.any(sel):
            continue
        for side, (foot, hs) in pf.items():
            arm = lever(xs[sel], foot.position, foot.rotation, p[side][sel])
            acc[sel] += lam[side][sel, None] * arm
            cop[side][sel] = foot.position + p[side][sel] @ foot.rotation.T
            force[side][sel] = scenario.mass * lam[side][sel, None] * arm
            tau[side][sel] = torque_values(xs[sel, 2], foot.position[2], lam[side][sel],
                                           scenario.torque_params.delta(side), 1.0)
            res = foot_residuals(xs[sel], p[side][sel], foot.position, foot.rotation,
                                 hs.A, hs.b, scenario.friction, scenario.leg_limits)
            for col, name in enumerate(residual_names(side, len(hs.b))):
                residuals.setdefault(name, np.full(S, np.nan))[sel] = res[:, col]
            name = "left.lambda" if side == "l" else "right.lambda"
            residuals.setdefault(name, np.full(S, np.nan))[sel] = -lam[side][sel]

    return RolloutResult(
        t=t, x=xs, v=vs, a=acc, interval=interval, phase=phase,
        lambda_l=lam["l"], lambda_r=lam["r"], p_l=p["l"], p_r=p["r"],
        cop_l=cop["l"], cop_r=cop["r"], force_l=force["l"], force_r=force["r"],
        tau_l=tau["l"], tau_r=tau["r"], residuals=residuals,
        knot_x=knot_x, knot_v=knot_v,
        terminal_position_error=float(np.linalg.norm(xs[-1] - scenario.target.x_d)),
        terminal_velocity_error=float(np.linalg.norm(vs[-1] - scenario.target.v_d)),
        integrator=integrator, restart=restart,
    )


@dataclass
class AuditReport:
    tolerance: float
    violations: list = field(default_factory=list)
    checked: dict = field(default_factory=dict)
    worst: dict = field(default_factory=dict)

    @property
    def clean(self):
        return not self.violations

    def to_dict(self):
        return {
            "tolerance": self.tolerance,
            "clean": self.clean,
            "violation_count": len(self.violations),
            "violations": [
                {"time": t, "constraint": name, "residual": r} for t, name, r in self.violations
            ],
            "checked": self.checked,
            "worst": self.worst,
        }


def audit_constraints(result, scenario=None, tolerance=1e-4):
    """List every ``(time, constraint, residual)`` with residual above ``tolerance``."""
    if not tolerance > 0:
        raise InvalidInputError("tolerance must be > 0")
    report = AuditReport(tolerance=float(tolerance))
    for name in sorted(result.residuals):
        res = result.residuals[name]
        active = ~np.isnan(res)
        report.checked[name] = int(active.sum())
        if not np.any(active):
            continue
        report.worst[name] = float(np.nanmax(res))
        for i in np.flatnonzero(active & (res > tolerance)):
            report.violations.append((float(result.t[i]), name, float(res[i])))
    report.violations.sort()
    return report


@dataclass
class TorqueComparison:
    status: str
    leading_foot: str
    max_tau_with: float
    max_tau_without: float
    reduction: float
    with_task: PlanSolution
    without_task: PlanSolution
    tau_with: dict
    tau_without: dict
    message: str = ""

    def to_dict(self):
        def arm(sol, tau):
            report = sol.report
            return {
                "status": None if report is None else report.status.value,
                "objective": None if report is None else report.objective,
                "max_violation": None if report is None else report.max_violation,
                "durations": sol.T.tolist(),
                "tau_l": tau["l"].tolist(),
                "tau_r": tau["r"].tolist(),
            }

        return {
            "status": self.status,
            "leading_foot": self.leading_foot,
            "max_tau_with_task": self.max_tau_with,
            "max_tau_without_task": self.max_tau_without,
            "relative_reduction": self.reduction,
            "message": self.message,
            "with_task": arm(self.with_task, self.tau_with),
            "without_task": arm(self.without_task, self.tau_without),
        }


def relative_reduction(baseline, value, floor=0.01):
    """``(baseline - value) / max(baseline, floor)``."""
    return (baseline - value) / max(baseline, floor)


def torque_reduction_experiment(scenario, config=None):
    """Solve with and without the torque task and compare the leading-foot peak ``|tau|``."""
    config = config or SolverConfig()
    lead = scenario.leading_foot
    without = scenario.replace(weights=scenario.weights.replace(w_tau=0.0, w_tau_max=0.0))
    arms = {key: plan(sc, config) for key, sc in (("with", scenario), ("without", without))}
    taus = {key: sol.torque_profiles(scenario) for key, sol in arms.items()}
    peak = {key: float(np.abs(tau[lead]).max()) for key, tau in taus.items()}
    converged = all(sol.report.status is Status.CONVERGED for sol in arms.values())
    return TorqueComparison(
        status="ok" if converged else "experiment-inconclusive",
        leading_foot=lead,
        max_tau_with=peak["with"],
        max_tau_without=peak["without"],
        reduction=relative_reduction(peak["without"], peak["with"]),
        with_task=arms["with"],
        without_task=arms["without"],
        tau_with=taus["with"],
        tau_without=taus["without"],
        message="" if converged else "at least one arm did not converge",
    )
