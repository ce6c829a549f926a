"""Cost terms: terminal tracking, knee-torque heuristic, control smoothness, regularization.

Each term has a per-site form (``*_terms``) returning one non-negative
contribution per knot or interval, and a summed, weighted form. The
transcription differentiates the per-site forms; the summed forms report
costs. Both run the same arithmetic.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import autodiff as ad
from .errors import ConfigurationError


@dataclass(frozen=True)
class TaskWeights:
    w_xd: float = 10.0
    w_tau: float = 0.1
    w_tau_max: float = 1.0
    w_du: float = 1e-3
    w_t: float = 1.0
    w_lambda: float = 1e-4
    w_p: float = 1e-2

    def __post_init__(self):
        for name, w in asdict(self).items():
            if not np.isfinite(w) or w < 0.0:
                raise ConfigurationError(f"weight {name} must be finite and >= 0")

    def replace(self, **changes):
        return TaskWeights(**{**asdict(self), **changes})


@dataclass(frozen=True)
class TerminalTarget:
    """Desired final CoM position/velocity; ``terminal_fraction`` of the last phase is tracked."""

    x_d: np.ndarray
    v_d: np.ndarray = None
    terminal_fraction: float = 0.3

    def __post_init__(self):
        x_d = np.asarray(self.x_d, dtype=float)
        v_d = np.zeros(3) if self.v_d is None else np.asarray(self.v_d, dtype=float)
        if x_d.shape != (3,) or v_d.shape != (3,):
            raise ConfigurationError("x_d and v_d must be 3-vectors")
        if not (np.all(np.isfinite(x_d)) and np.all(np.isfinite(v_d))):
            raise ConfigurationError("target must be finite")
        if not 0.0 < self.terminal_fraction <= 1.0:
            raise ConfigurationError("terminal_fraction must lie in (0, 1]")
        object.__setattr__(self, "x_d", x_d)
        object.__setattr__(self, "v_d", v_d)

    def terminal_knots(self, knots_per_phase, n_phases):
        """State indices tracked by the terminal task, ending at the final knot."""
        total = knots_per_phase * n_phases
        count = max(1, int(round(self.terminal_fraction * knots_per_phase)))
        return np.arange(total - count + 1, total + 1)


@dataclass(frozen=True)
class TorqueHeuristicParams:
    delta_l: float = 0.9
    delta_r: float = 0.9

    def __post_init__(self):
        if not (np.isfinite(self.delta_l) and np.isfinite(self.delta_r)):
            raise ConfigurationError("reference heights must be finite")

    def delta(self, side):
        return self.delta_l if side == "l" else self.delta_r


def knee_torque_heuristic(state, foot, lam, delta, in_contact):
    """``(x_z - x_foot_z - delta) * lambda`` in contact, else 0."""
    if not in_contact:
        return 0.0
    return float((state.x[2] - foot.position[2] - delta) * lam)


def torque_values(com_z, foot_z, lam, delta, contact):
    """Batched heuristic; ``contact`` is a 0/1 mask. Dual-safe in ``com_z`` and ``lam``."""
    return (com_z - foot_z - delta) * lam * contact


def terminal_terms(x, v, x_d, v_d):
    dx = x - x_d
    dv = v - v_d
    return ad.dot(dx, dx) + ad.dot(dv, dv)


def terminal_cost(x, v, target, w_xd):
    """``w_xd * sum_k (|x(k) - x_d|^2 + |v(k) - v_d|^2)`` over the given knots."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    v = np.atleast_2d(np.asarray(v, dtype=float))
    if x.shape[0] == 0:
        raise ConfigurationError("terminal knot set is empty")
    return float(w_xd * terminal_terms(x, v, target.x_d, target.v_d).sum())


@dataclass(frozen=True)
class EpigraphSlacks:
    """Slack form of ``max_k tau(k)^2``: cost uses ``s``, constraints ``tau(k)^2 - s <= 0``."""

    slacks: np.ndarray
    residuals: list

    def feasible(self, tol=0.0):
        return all(np.all(r <= tol) for r in self.residuals)


def torque_cost(taus, w_tau, w_tau_max, slacks=None):
    """Torque heuristic cost with the max term in epigraph form.

    Parameters
    ----------
    taus : sequence of arrays
        One heuristic profile per foot.
    slacks : array_like, optional
        Slack values to price; defaults to the optimal ones, ``max_k tau^2``.

    Returns
    -------
    value : float
    epigraph : EpigraphSlacks
    """
    taus = [np.asarray(t, dtype=float).ravel() for t in taus]
    sq = [t**2 for t in taus]
    if slacks is None:
        slacks = np.array([s.max() if s.size else 0.0 for s in sq])
    slacks = np.asarray(slacks, dtype=float)
    value = w_tau * sum(float(s.sum()) for s in sq) + w_tau_max * float(slacks.sum())
    residuals = [s - slack for s, slack in zip(sq, slacks)]
    return value, EpigraphSlacks(slacks, residuals)


def stack_controls(lambda_l, lambda_r, p_l, p_r):
    """Control vectors ``u = (lambda_l, lambda_r, p_l, p_r)`` as ``(K, 8)`` rows."""
    return np.column_stack([
        np.asarray(lambda_l, dtype=float),
        np.asarray(lambda_r, dtype=float),
        np.asarray(p_l, dtype=float).reshape(-1, 3),
        np.asarray(p_r, dtype=float).reshape(-1, 3),
    ])


def control_variation_terms(u_prev, u_next):
    d = u_next - u_prev
    return ad.dot(d, d)


def control_variation_cost(u, w_du):
    """``w_du * sum_k |u(k) - u(k-1)|^2`` across all intervals and phase boundaries."""
    u = np.asarray(u, dtype=float)
    if u.ndim != 2 or u.shape[0] < 2:
        raise ConfigurationError("control variation needs at least two control knots")
    return float(w_du * control_variation_terms(u[:-1], u[1:]).sum())


def duration_terms(T, T_d):
    d = T - T_d
    return d * d


def control_regularization_terms(u, w_lambda, w_p):
    lam = u[..., 0:2]
    p = u[..., 2:8]
    return w_lambda * ad.dot(lam, lam) + w_p * ad.dot(p, p)


def regularization_cost(T, T_d, u, weights):
    """``w_t sum (T - T_d)^2 + w_lambda sum lambda^2 + w_p sum |p|^2``."""
    T = np.asarray(T, dtype=float).ravel()
    T_d = np.asarray(T_d, dtype=float).ravel()
    if T.shape != T_d.shape:
        raise ConfigurationError("durations and desired durations differ in length")
    u = np.asarray(u, dtype=float).reshape(-1, 8)
    return float(
        weights.w_t * duration_terms(T, T_d).sum()
        + control_regularization_terms(u, weights.w_lambda, weights.w_p).sum()
    )


@dataclass(frozen=True)
class CostBreakdown:
    terminal: float
    torque: float
    control_variation: float
    regularization: float

    @property
    def total(self):
        return self.terminal + self.torque + self.control_variation + self.regularization

    def as_dict(self):
        return {**asdict(self), "total": self.total}
