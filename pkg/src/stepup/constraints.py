"""Per-knot contact constraints: CoP in polygon, friction, torsion, leg length.

All residuals follow the convention ``residual <= 0`` means satisfied. The
batched helpers accept plain arrays or :class:`~stepup.autodiff.Dual` inputs
so the transcription can differentiate exactly the code checked here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import ConfigurationError, InvalidInputError
from .model import ContactMode, FootSpec, check_polygon, lever

FEASIBILITY_TOL = 1e-6


@dataclass(frozen=True)
class HalfspaceSet:
    """``A p <= b`` for foot-frame points ``p``; rows have unit in-plane normals."""

    A: np.ndarray
    b: np.ndarray

    def residuals(self, p):
        return self.A @ np.asarray(p, dtype=float) - self.b

    def contains(self, p, tol=0.0):
        return bool(np.all(self.residuals(p) <= tol))


@dataclass(frozen=True)
class FrictionParams:
    mu_s: float = 0.6
    mu_t: float = 0.05

    def __post_init__(self):
        if not (np.isfinite(self.mu_s) and self.mu_s > 0.0):
            raise ConfigurationError("mu_s must be > 0")
        if not (np.isfinite(self.mu_t) and self.mu_t >= 0.0):
            raise ConfigurationError("mu_t must be >= 0")


@dataclass(frozen=True)
class LegLimits:
    l_min: float = 0.5
    l_max: float = 1.2

    def __post_init__(self):
        if not (np.isfinite(self.l_min) and np.isfinite(self.l_max)):
            raise ConfigurationError("leg limits must be finite")
        if not 0.0 < self.l_min < self.l_max:
            raise ConfigurationError("leg limits need 0 < l_min < l_max")


class ConstraintResiduals:
    """Named residuals; a residual ``<= 0`` is satisfied."""

    def __init__(self, items=()):
        self.items = [(str(name), float(val)) for name, val in items]
        if not all(np.isfinite(v) for _, v in self.items):
            raise InvalidInputError("non-finite constraint residual")

    def __iter__(self):
        return iter(self.items)

    def __len__(self):
        return len(self.items)

    def __getitem__(self, name):
        for key, val in self.items:
            if key == name:
                return val
        raise KeyError(name)

    @property
    def names(self):
        return [name for name, _ in self.items]

    @property
    def values(self):
        return np.array([val for _, val in self.items])

    @property
    def max_violation(self):
        if not self.items:
            return 0.0
        return max(0.0, float(self.values.max()))

    def violated(self, tol=FEASIBILITY_TOL):
        return [(name, val) for name, val in self.items if val > tol]


def polygon_to_halfspaces(polygon):
    """Halfspace form of a convex CCW polygon given by its vertices.

    Each edge ``v_i -> v_{i+1}`` contributes the row ``n_i . p <= n_i . v_i``
    with ``n_i`` its unit outward normal, so residuals are signed distances.
    """
    v = check_polygon(polygon)
    edges = np.roll(v, -1, axis=0) - v
    normals = np.column_stack([edges[:, 1], -edges[:, 0]])
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    A = np.column_stack([normals, np.zeros(len(v))])
    b = np.einsum("ij,ij->i", normals, v)
    return HalfspaceSet(A, b)


def friction_cone_residual(r, mu_s):
    """``r_x^2 + r_y^2 - mu_s^2 r_z^2`` for a foot-frame lever ``r``."""
    return r[..., 0] ** 2 + r[..., 1] ** 2 - mu_s**2 * r[..., 2] ** 2


def torsional_matrix(p, mu_t):
    """Rows ``(c - d)^T`` and ``(-c - d)^T`` with ``c = (-p_y, p_x, 0)``, ``d = (0, 0, mu_t)``."""
    p = np.asarray(p, dtype=float)
    c = np.array([-p[1], p[0], 0.0])
    d = np.array([0.0, 0.0, float(mu_t)])
    return np.vstack([c - d, -c - d])


def torsional_residuals(p, r, mu_t):
    """``F(p) r`` written out; the last axis holds the two bounds."""
    twist = p[..., 0] * r[..., 1] - p[..., 1] * r[..., 0]
    normal = mu_t * r[..., 2]
    return ad.stack([twist - normal, -twist - normal], axis=-1)


def leg_length_residuals(x, foot_position, limits):
    """``(l_min^2 - |x - x_f|^2, |x - x_f|^2 - l_max^2)``."""
    d = x - foot_position
    sq = ad.dot(d, d)
    return ad.stack([limits.l_min**2 - sq, sq - limits.l_max**2], axis=-1)


def foot_residuals(x, p, position, rotation, A, b, friction, limits):
    """All residuals of one foot in contact, batched over leading axes.

    Output columns: ``len(b)`` CoP rows, friction, two torsion rows, two leg rows.
    """
    r = ad.rmatvec(rotation, lever(x, position, rotation, p))
    cop = ad.matvec(A, p) - b
    fric = friction_cone_residual(r, friction.mu_s)
    tors = torsional_residuals(p, r, friction.mu_t)
    leg = leg_length_residuals(x, position, limits)
    parts = [cop[..., i] for i in range(cop.shape[-1])]
    parts += [fric, tors[..., 0], tors[..., 1], leg[..., 0], leg[..., 1]]
    return ad.stack(parts, axis=-1)


def residual_names(side, n_vertices):
    foot = "left" if side == "l" else "right"
    names = [f"{foot}.cop[{i}]" for i in range(n_vertices)]
    names += [f"{foot}.friction", f"{foot}.torsion[0]", f"{foot}.torsion[1]"]
    names += [f"{foot}.leg_min", f"{foot}.leg_max"]
    return names


@dataclass(frozen=True)
class ContactContext:
    """Everything the per-knot constraints of one phase depend on."""

    mode: ContactMode
    left: FootSpec | None
    right: FootSpec | None
    friction: FrictionParams
    leg_limits: LegLimits

    def __post_init__(self):
        object.__setattr__(self, "mode", ContactMode(self.mode))
        if self.mode.left_in_contact and self.left is None:
            raise ConfigurationError("left foot required for this contact mode")
        if self.mode.right_in_contact and self.right is None:
            raise ConfigurationError("right foot required for this contact mode")
        halfspaces = {}
        for side, foot in (("l", self.left), ("r", self.right)):
            if foot is not None:
                halfspaces[side] = polygon_to_halfspaces(foot.polygon)
        object.__setattr__(self, "halfspaces", halfspaces)

    def foot(self, side):
        return self.left if side == "l" else self.right

    @property
    def active_sides(self):
        return [s for s in ("l", "r") if self.mode.in_contact(s)]


def evaluate_knot_constraints(state, context, u):
    """Residuals of every contact constraint active at one knot."""
    items = []
    for side in context.active_sides:
        foot = context.foot(side)
        hs = context.halfspaces[side]
        p = u.p_l if side == "l" else u.p_r
        res = foot_residuals(
            state.x, p, foot.position, foot.rotation, hs.A, hs.b,
            context.friction, context.leg_limits,
        )
        items.extend(zip(residual_names(side, len(hs.b)), res))
    return ConstraintResiduals(items)
