"""High-level entry point: scenario in, optimized plan out."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .solver import SolveReport, SolverConfig, Status, solve
from .transcription import build_layout, build_nlp, initial_guess, torque_profiles


@dataclass
class PlanSolution:
    """Optimized knot states, interval controls and phase durations."""

    x: np.ndarray
    v: np.ndarray
    a: np.ndarray
    lambda_l: np.ndarray
    lambda_r: np.ndarray
    p_l: np.ndarray
    p_r: np.ndarray
    T: np.ndarray
    slacks: np.ndarray
    knots_per_phase: int
    report: SolveReport | None = None
    cost: dict | None = None

    def __post_init__(self):
        K = len(self.a)
        P = len(self.T)
        if K != self.knots_per_phase * P:
            raise ValueError("interval count does not match knots_per_phase * phases")
        if self.x.shape != (K + 1, 3) or self.v.shape != (K + 1, 3):
            raise ValueError("state arrays need N*P + 1 rows")
        for name in ("lambda_l", "lambda_r"):
            if getattr(self, name).shape != (K,):
                raise ValueError(f"{name} needs N*P entries")
        for name in ("p_l", "p_r", "a"):
            if getattr(self, name).shape != (K, 3):
                raise ValueError(f"{name} needs shape (N*P, 3)")

    @classmethod
    def from_vector(cls, layout, z, report=None, cost=None):
        parts = layout.unpack(z)
        return cls(
            x=parts["x"], v=parts["v"], a=parts["a"],
            lambda_l=parts["lambda_l"], lambda_r=parts["lambda_r"],
            p_l=parts["p_l"], p_r=parts["p_r"], T=parts["T"], slacks=parts["s"],
            knots_per_phase=layout.N, report=report, cost=cost,
        )

    def to_vector(self, layout):
        return layout.pack({
            "x": self.x, "v": self.v, "a": self.a,
            "lambda_l": self.lambda_l, "lambda_r": self.lambda_r,
            "p_l": self.p_l, "p_r": self.p_r, "T": self.T, "s": self.slacks,
        })

    @property
    def n_intervals(self):
        return len(self.a)

    @property
    def converged(self):
        return self.report is not None and self.report.status is Status.CONVERGED

    def interval_phase(self):
        return np.arange(self.n_intervals) // self.knots_per_phase

    def interval_dt(self):
        return self.T[self.interval_phase()] / self.knots_per_phase

    def knot_times(self):
        return np.concatenate([[0.0], np.cumsum(self.interval_dt())])

    def torque_profiles(self, scenario):
        return torque_profiles(scenario, self.x, self.lambda_l, self.lambda_r)

    def to_dict(self):
        return {
            "knots_per_phase": self.knots_per_phase,
            "durations": self.T.tolist(),
            "knot_times": self.knot_times().tolist(),
            "x": self.x.tolist(),
            "v": self.v.tolist(),
            "a": self.a.tolist(),
            "lambda_l": self.lambda_l.tolist(),
            "lambda_r": self.lambda_r.tolist(),
            "p_l": self.p_l.tolist(),
            "p_r": self.p_r.tolist(),
            "slacks": self.slacks.tolist(),
            "cost": self.cost,
            "report": None if self.report is None else self.report.as_dict(),
        }

    @classmethod
    def from_dict(cls, doc):
        arr = lambda key: np.asarray(doc[key], dtype=float)  # noqa: E731
        return cls(
            x=arr("x"), v=arr("v"), a=arr("a"),
            lambda_l=arr("lambda_l"), lambda_r=arr("lambda_r"),
            p_l=arr("p_l"), p_r=arr("p_r"), T=arr("durations"), slacks=arr("slacks"),
            knots_per_phase=int(doc["knots_per_phase"]), cost=doc.get("cost"),
        )


def plan(scenario, config=None, guess=None):
    """Transcribe and solve a scenario; returns a :class:`PlanSolution`."""
    layout = build_layout(scenario)
    nlp = build_nlp(scenario, layout)
    z0 = initial_guess(scenario, layout) if guess is None else guess
    z, report = solve(nlp, z0, config or SolverConfig())
    return PlanSolution.from_vector(layout, z, report, report.cost_breakdown)
