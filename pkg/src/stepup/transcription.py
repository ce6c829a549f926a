"""Direct multiple shooting transcription of the step-up planning problem.

Decision vector, in block order::

    x(k), v(k)      k = 0 .. N*P          CoM states at knots
    a(k)            k = 0 .. N*P - 1      accelerations, tied to the contact model
    lambda_l(k), lambda_r(k)              multipliers, per interval
    p_l(k), p_r(k)                        foot-frame CoPs, per interval
    T_i             i = 0 .. P - 1        phase durations
    s_l, s_r                              epigraph slacks of the max-torque term

Controls are zero-order hold on the interval ``[k, k + 1)``; interval ``k``
belongs to phase ``k // N`` and uses ``dt = T_i / N``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import LocalFunction
from .constraints import FrictionParams, LegLimits, foot_residuals, polygon_to_halfspaces
from .errors import ConfigurationError
from .model import CoMState, ContactMode, FootSpec, gravity_vector, check_gravity, lever
from .objectives import (
    CostBreakdown,
    TaskWeights,
    TerminalTarget,
    TorqueHeuristicParams,
    control_regularization_terms,
    control_variation_cost,
    control_variation_terms,
    duration_terms,
    regularization_cost,
    stack_controls,
    terminal_cost,
    terminal_terms,
    torque_cost,
    torque_values,
)

SIDES = ("l", "r")


@dataclass(frozen=True)
class Phase:
    mode: ContactMode
    left: FootSpec | None = None
    right: FootSpec | None = None
    T_min: float = 0.4
    T_max: float = 1.6
    T_desired: float = 0.8

    def __post_init__(self):
        object.__setattr__(self, "mode", ContactMode(self.mode))
        if not all(np.isfinite([self.T_min, self.T_max, self.T_desired])):
            raise ConfigurationError("phase durations must be finite")
        if not 0.0 < self.T_min <= self.T_desired <= self.T_max:
            raise ConfigurationError("phase durations need 0 < T_min <= T_desired <= T_max")
        if self.mode.left_in_contact and self.left is None:
            raise ConfigurationError(f"{self.mode.value} phase needs a left foot")
        if self.mode.right_in_contact and self.right is None:
            raise ConfigurationError(f"{self.mode.value} phase needs a right foot")

    def foot(self, side):
        return self.left if side == "l" else self.right


@dataclass(frozen=True)
class Scenario:
    phases: tuple
    initial: CoMState
    target: TerminalTarget
    knots_per_phase: int = 20
    weights: TaskWeights = field(default_factory=TaskWeights)
    friction: FrictionParams = field(default_factory=FrictionParams)
    leg_limits: LegLimits = field(default_factory=LegLimits)
    torque_params: TorqueHeuristicParams | None = None
    mass: float = 175.0
    gravity: np.ndarray = field(default_factory=gravity_vector)
    lambda_max: float = 100.0
    leading_foot: str = "l"
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "phases", tuple(self.phases))
        if len(self.phases) < 1:
            raise ConfigurationError("a scenario needs at least one phase")
        if int(self.knots_per_phase) != self.knots_per_phase or self.knots_per_phase < 2:
            raise ConfigurationError("knots_per_phase must be an integer >= 2")
        object.__setattr__(self, "knots_per_phase", int(self.knots_per_phase))
        if not (np.isfinite(self.mass) and self.mass > 0.0):
            raise ConfigurationError("mass must be > 0")
        if not (np.isfinite(self.lambda_max) and self.lambda_max > 0.0):
            raise ConfigurationError("lambda_max must be > 0")
        if self.leading_foot not in SIDES:
            raise ConfigurationError("leading_foot must be 'l' or 'r'")
        object.__setattr__(self, "gravity", check_gravity(self.gravity))
        if self.torque_params is None:
            delta = 0.75 * self.leg_limits.l_max
            object.__setattr__(self, "torque_params", TorqueHeuristicParams(delta, delta))

    @property
    def n_phases(self):
        return len(self.phases)

    @property
    def n_intervals(self):
        return self.knots_per_phase * self.n_phases

    def replace(self, **changes):
        fields = {name: getattr(self, name) for name in self.__dataclass_fields__}
        fields.update(changes)
        return Scenario(**fields)

    def knot_phase(self):
        """Phase index of every interval ``k = 0 .. N*P - 1``."""
        return np.arange(self.n_intervals) // self.knots_per_phase

    def contact_mask(self, side):
        return np.array([p.mode.in_contact(side) for p in self.phases], dtype=float)[
            self.knot_phase()
        ]


class VariableLayout:
    """Slot map from named variables to positions in the flat decision vector."""

    BLOCKS = ("x", "v", "a", "lambda_l", "lambda_r", "p_l", "p_r", "T", "s")

    def __init__(self, scenario):
        N, P = scenario.knots_per_phase, scenario.n_phases
        K = N * P
        self.N, self.P, self.K = N, P, K
        shapes = {
            "x": (K + 1, 3), "v": (K + 1, 3), "a": (K, 3),
            "lambda_l": (K,), "lambda_r": (K,), "p_l": (K, 3), "p_r": (K, 3),
            "T": (P,), "s": (2,),
        }
        self.shapes = shapes
        offset = 0
        self.index = {}
        for name in self.BLOCKS:
            n = int(np.prod(shapes[name]))
            self.index[name] = np.arange(offset, offset + n).reshape(shapes[name])
            offset += n
        self.size = offset

        lower = np.full(self.size, -np.inf)
        upper = np.full(self.size, np.inf)
        for side in SIDES:
            lam = self.index[f"lambda_{side}"]
            active = scenario.contact_mask(side) > 0
            lower[lam] = 0.0
            upper[lam] = np.where(active, scenario.lambda_max, 0.0)
            pz = self.index[f"p_{side}"][:, 2]
            lower[pz] = 0.0
            upper[pz] = 0.0
        lower[self.index["T"]] = [p.T_min for p in scenario.phases]
        upper[self.index["T"]] = [p.T_max for p in scenario.phases]
        lower[self.index["s"]] = 0.0
        self.lower = lower
        self.upper = upper

    def __eq__(self, other):
        return (
            isinstance(other, VariableLayout)
            and self.size == other.size
            and all(np.array_equal(self.index[k], other.index[k]) for k in self.BLOCKS)
            and np.array_equal(self.lower, other.lower)
            and np.array_equal(self.upper, other.upper)
        )

    def slot_names(self):
        """One readable name per decision-vector slot, in order."""
        names = []
        for block in self.BLOCKS:
            for idx in np.ndindex(*self.shapes[block]):
                names.append(f"{block}[{','.join(map(str, idx))}]")
        return names

    def unpack(self, z):
        z = np.asarray(z, dtype=float)
        return {name: z[idx] for name, idx in self.index.items()}

    def pack(self, parts):
        z = np.zeros(self.size)
        for name, arr in parts.items():
            z[self.index[name]] = arr
        return z

    def controls(self):
        """``(K, 8)`` index array of ``u = (lambda_l, lambda_r, p_l, p_r)``."""
        i = self.index
        return np.column_stack([i["lambda_l"], i["lambda_r"], i["p_l"], i["p_r"]])


def build_layout(scenario):
    if not isinstance(scenario, Scenario):
        raise ConfigurationError("build_layout expects a Scenario")
    return VariableLayout(scenario)


class NlpProblem:
    """Smooth NLP ``min f(z)`` s.t. ``c(z) = 0``, ``g(z) <= 0``, ``lower <= z <= upper``.

    Objective, equalities and inequalities are lists of
    :class:`~stepup.autodiff.LocalFunction`; the objective is the sum of all
    outputs of its terms.
    """

    def __init__(self, n, lower, upper, objective_terms, equalities=(), inequalities=(),
                 layout=None, scenario=None, breakdown=None):
        self.n = int(n)
        self.lower = np.asarray(lower, dtype=float)
        self.upper = np.asarray(upper, dtype=float)
        if self.lower.shape != (self.n,) or self.upper.shape != (self.n,):
            raise ConfigurationError("bound vectors must match the decision dimension")
        self.objective_terms = list(objective_terms)
        self.equalities = list(equalities)
        self.inequalities = list(inequalities)
        self.layout = layout
        self.scenario = scenario
        self._breakdown = breakdown
        self.n_eq = sum(f.size for f in self.equalities)
        self.n_ineq = sum(f.size for f in self.inequalities)

    @classmethod
    def from_functions(cls, n, objective, equality=None, inequality=None, lower=None, upper=None):
        """Wrap whole-vector callables (written with dual-safe operations)."""
        idx = np.arange(n)[None, :]

        def site(fun):
            def wrapped(block):
                out = fun(block[0])
                if isinstance(out, ad.Dual):
                    return ad.Dual(out.val.reshape(1, -1), out.eps.reshape(1, -1, out.n_seeds))
                return np.asarray(out, dtype=float).reshape(1, -1)
            return LocalFunction(wrapped, [idx])

        lower = np.full(n, -np.inf) if lower is None else np.broadcast_to(lower, (n,)).astype(float)
        upper = np.full(n, np.inf) if upper is None else np.broadcast_to(upper, (n,)).astype(float)
        return cls(
            n, lower, upper, [site(objective)],
            [site(equality)] if equality is not None else [],
            [site(inequality)] if inequality is not None else [],
        )

    def objective(self, z):
        return float(sum(f(z).sum() for f in self.objective_terms))

    def objective_gradient(self, z, mode=ad.ALGORITHMIC):
        value = 0.0
        grad = np.zeros(self.n)
        for f in self.objective_terms:
            v, g = f.total_gradient(z, self.n, mode)
            value += v
            grad += g
        return value, grad

    def equality(self, z):
        if not self.equalities:
            return np.zeros(0)
        return np.concatenate([f(z) for f in self.equalities])

    def inequality(self, z):
        if not self.inequalities:
            return np.zeros(0)
        return np.concatenate([f(z) for f in self.inequalities])

    def equality_jacobian(self, z, mode=ad.ALGORITHMIC):
        return ad.stacked_jacobian(self.equalities, z, self.n, mode)

    def inequality_jacobian(self, z, mode=ad.ALGORITHMIC):
        return ad.stacked_jacobian(self.inequalities, z, self.n, mode)

    def max_violation(self, z):
        c = self.equality(z)
        g = self.inequality(z)
        eq = float(np.abs(c).max()) if c.size else 0.0
        ineq = float(np.maximum(g, 0.0).max()) if g.size else 0.0
        bounds = float(max(np.max(self.lower - z, initial=0.0), np.max(z - self.upper, initial=0.0)))
        return max(eq, ineq, bounds)

    def breakdown(self, z):
        if self._breakdown is None:
            return None
        return self._breakdown(z)

    def evaluators(self):
        """Named evaluators, for gradient cross-checks."""
        out = {}
        for kind, fns in (("objective", self.objective_terms), ("equality", self.equalities),
                          ("inequality", self.inequalities)):
            for i, f in enumerate(fns):
                out[f"{kind}[{i}]:{getattr(f, 'name', '')}"] = f
        return out


def _named(fn, name):
    fn.name = name
    return fn


def _phase_constants(scenario, side):
    """Per-interval foot position, rotation, halfspaces (padded) and contact flags."""
    K = scenario.n_intervals
    ph = scenario.knot_phase()
    vmax = max(
        (len(p.foot(side).polygon) for p in scenario.phases if p.foot(side) is not None),
        default=3,
    )
    pos = np.zeros((scenario.n_phases, 3))
    rot = np.tile(np.eye(3), (scenario.n_phases, 1, 1))
    A = np.zeros((scenario.n_phases, vmax, 3))
    b = np.ones((scenario.n_phases, vmax))
    nv = np.zeros(scenario.n_phases, dtype=int)
    for i, phase in enumerate(scenario.phases):
        foot = phase.foot(side)
        if foot is None:
            continue
        hs = polygon_to_halfspaces(foot.polygon)
        pos[i] = foot.position
        rot[i] = foot.rotation
        A[i, : len(hs.b)] = hs.A
        b[i, : len(hs.b)] = hs.b
        nv[i] = len(hs.b)
    contact = scenario.contact_mask(side)
    assert contact.shape == (K,)
    return pos[ph], rot[ph], A[ph], b[ph], nv[ph], contact, vmax


def build_nlp(scenario, layout=None):
    """Assemble the multiple-shooting NLP for a scenario."""
    layout = build_layout(scenario) if layout is None else layout
    idx = layout.index
    N, K = layout.N, layout.K
    ph = scenario.knot_phase()
    g = scenario.gravity
    x0, v0 = scenario.initial.x, scenario.initial.v
    consts = {side: _phase_constants(scenario, side) for side in SIDES}

    # equalities: initial state, shooting defects, acceleration definitions
    def initial(x, v):
        return ad.stack([x[:, 0] - x0[0], x[:, 1] - x0[1], x[:, 2] - x0[2],
                         v[:, 0] - v0[0], v[:, 1] - v0[1], v[:, 2] - v0[2]], axis=-1)

    def defects(x, v, a, T, x1, v1):
        dt = T[:, 0] / N
        dx = x1 - x - v * dt[:, None] - 0.5 * a * (dt * dt)[:, None]
        dv = v1 - v - a * dt[:, None]
        return ad.stack([dx[:, 0], dx[:, 1], dx[:, 2], dv[:, 0], dv[:, 1], dv[:, 2]], axis=-1)

    def accel_definition(x, a, lam_l, lam_r, p_l, p_r):
        acc = -g
        for side, lam, p in (("l", lam_l, p_l), ("r", lam_r, p_r)):
            pos, rot, _, _, _, contact, _ = consts[side]
            acc = acc + (lam[:, 0] * contact)[:, None] * lever(x, pos, rot, p)
        return a - acc

    equalities = [
        _named(LocalFunction(initial, [idx["x"][:1], idx["v"][:1]]), "initial_state"),
        _named(LocalFunction(defects, [idx["x"][:-1], idx["v"][:-1], idx["a"],
                                       idx["T"][ph][:, None], idx["x"][1:], idx["v"][1:]]),
               "shooting_defects"),
        _named(LocalFunction(accel_definition, [idx["x"][:-1], idx["a"], idx["lambda_l"],
                                                idx["lambda_r"], idx["p_l"], idx["p_r"]]),
               "acceleration_definition"),
    ]

    # inequalities: contact constraints at both ends of every interval under that interval's
    # held controls (the cone, torsion and leg-max sets are convex in the lever, so the interior
    # follows up to path curvature), plus epigraph rows on interval starts
    site_state = np.concatenate([np.arange(K), np.arange(1, K + 1)])
    site_ctrl = np.concatenate([np.arange(K), np.arange(K)])
    is_end = np.arange(site_state.size) >= K
    inequalities = []
    for side_i, side in enumerate(SIDES):
        pos, rot, A, b, nv, contact, vmax = (c[site_ctrl] if isinstance(c, np.ndarray) else c
                                             for c in consts[side])
        delta = scenario.torque_params.delta(side)
        mask = np.zeros((site_state.size, vmax + 6), dtype=bool)
        active = contact > 0
        mask[:, :vmax] = active[:, None] & (np.arange(vmax)[None, :] < nv[:, None])
        mask[:, vmax:-1] = active[:, None]
        mask[:, -1] = active & ~is_end

        def contact_rows(x, p, lam, s, pos=pos, rot=rot, A=A, b=b, contact=contact, delta=delta):
            res = foot_residuals(x, p, pos, rot, A, b, scenario.friction, scenario.leg_limits)
            tau = torque_values(x[:, 2], pos[:, 2], lam[:, 0], delta, contact)
            epi = tau * tau - s[:, 0]
            return ad.stack([res[:, i] for i in range(res.shape[-1])] + [epi], axis=-1)

        inequalities.append(_named(
            LocalFunction(contact_rows, [idx["x"][site_state], idx[f"p_{side}"][site_ctrl],
                                         idx[f"lambda_{side}"][site_ctrl],
                                         np.full((site_state.size, 1), idx["s"][side_i])],
                          mask=mask),
            f"contact_{side}",
        ))

    # objective
    w = scenario.weights
    target = scenario.target
    kf = target.terminal_knots(N, scenario.n_phases)
    T_d = np.array([p.T_desired for p in scenario.phases])
    u_idx = layout.controls()
    foot_z = {side: consts[side][0][:, 2] for side in SIDES}
    contact = {side: consts[side][5] for side in SIDES}
    delta = {side: scenario.torque_params.delta(side) for side in SIDES}

    def torque_sum(x, lam_l, lam_r):
        total = 0.0
        for side, lam in (("l", lam_l), ("r", lam_r)):
            tau = torque_values(x[:, 2], foot_z[side], lam[:, 0], delta[side], contact[side])
            total = total + tau * tau
        return w.w_tau * total

    objective = [
        _named(LocalFunction(lambda x, v: w.w_xd * terminal_terms(x, v, target.x_d, target.v_d),
                             [idx["x"][kf], idx["v"][kf]]), "terminal"),
        _named(LocalFunction(torque_sum, [idx["x"][:-1], idx["lambda_l"], idx["lambda_r"]]),
               "torque"),
        _named(LocalFunction(lambda s: w.w_tau_max * (s[:, 0] + s[:, 1]), [idx["s"][None, :]]),
               "torque_max"),
        _named(LocalFunction(lambda u0, u1: w.w_du * control_variation_terms(u0, u1),
                             [u_idx[:-1], u_idx[1:]]), "control_variation"),
        _named(LocalFunction(lambda T: w.w_t * duration_terms(T[:, 0], T_d),
                             [idx["T"][:, None]]), "durations"),
        _named(LocalFunction(lambda u: control_regularization_terms(u, w.w_lambda, w.w_p),
                             [u_idx]), "control_regularization"),
    ]

    def breakdown(z):
        return cost_breakdown(scenario, layout, z)

    return NlpProblem(layout.size, layout.lower, layout.upper, objective, equalities,
                      inequalities, layout=layout, scenario=scenario, breakdown=breakdown)


def torque_profiles(scenario, x, lambda_l, lambda_r):
    """Heuristic knee-torque profile per foot over the intervals."""
    out = {}
    ph = scenario.knot_phase()
    for side, lam in (("l", lambda_l), ("r", lambda_r)):
        foot_z = np.array([
            p.foot(side).position[2] if p.foot(side) is not None else 0.0 for p in scenario.phases
        ])[ph]
        out[side] = torque_values(np.asarray(x)[: scenario.n_intervals, 2], foot_z,
                                  np.asarray(lam), scenario.torque_params.delta(side),
                                  scenario.contact_mask(side))
    return out


def cost_breakdown(scenario, layout, z):
    """Per-task costs evaluated with the summed forms of the cost terms."""
    parts = layout.unpack(z)
    w = scenario.weights
    kf = scenario.target.terminal_knots(layout.N, layout.P)
    taus = torque_profiles(scenario, parts["x"], parts["lambda_l"], parts["lambda_r"])
    u = stack_controls(parts["lambda_l"], parts["lambda_r"], parts["p_l"], parts["p_r"])
    T_d = [p.T_desired for p in scenario.phases]
    torque, _ = torque_cost([taus["l"], taus["r"]], w.w_tau, w.w_tau_max, slacks=parts["s"])
    return CostBreakdown(
        terminal=terminal_cost(parts["x"][kf], parts["v"][kf], scenario.target, w.w_xd),
        torque=torque,
        control_variation=control_variation_cost(u, w.w_du) if len(u) > 1 else 0.0,
        regularization=regularization_cost(parts["T"], T_d, u, w),
    )


def initial_guess(scenario, layout=None):
    """Durations at their desired values, CoM interpolated to the target, the rest zero."""
    layout = build_layout(scenario) if layout is None else layout
    K = layout.K
    frac = np.arange(K + 1)[:, None] / K
    x = (1.0 - frac) * scenario.initial.x + frac * scenario.target.x_d
    return layout.pack({
        "x": x,
        "T": [p.T_desired for p in scenario.phases],
    })
