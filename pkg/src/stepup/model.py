"""Variable-height double pendulum: the reduced centroidal model of the planner.

The CoM is pulled by gravity and by up to two line forces, one per foot, each
directed from the foot's center of pressure through the CoM and scaled by a
non-negative multiplier. Everything here is mass-normalized except
:func:`foot_force`.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import InvalidInputError, PolygonDegenerateError

STANDARD_GRAVITY = 9.81


def _vec3(value, name):
    arr = np.asarray(value, dtype=float)
    if arr.shape != (3,):
        raise InvalidInputError(f"{name} must be a 3-vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} has non-finite components")
    return arr


class ContactMode(enum.Enum):
    FLIGHT = "flight"
    LEFT = "left"
    RIGHT = "right"
    DOUBLE = "double"

    @property
    def left_in_contact(self):
        return self in (ContactMode.LEFT, ContactMode.DOUBLE)

    @property
    def right_in_contact(self):
        return self in (ContactMode.RIGHT, ContactMode.DOUBLE)

    def in_contact(self, side):
        """``side`` is ``"l"`` or ``"r"``."""
        return self.left_in_contact if side == "l" else self.right_in_contact


@dataclass(frozen=True)
class CoMState:
    """CoM position ``x`` [m] and velocity ``v`` [m/s] in the inertial frame."""

    x: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", _vec3(self.x, "x"))
        object.__setattr__(self, "v", _vec3(self.v, "v"))


@dataclass(frozen=True)
class ControlInput:
    """Foot multipliers [1/s^2] and CoPs in foot coordinates [m]."""

    lambda_l: float = 0.0
    lambda_r: float = 0.0
    p_l: np.ndarray = field(default_factory=lambda: np.zeros(3))
    p_r: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        for name in ("lambda_l", "lambda_r"):
            lam = float(getattr(self, name))
            if not np.isfinite(lam):
                raise InvalidInputError(f"{name} is not finite")
            if lam < 0.0:
                raise InvalidInputError(f"{name} must be >= 0 (unilateral contact)")
            object.__setattr__(self, name, lam)
        for name in ("p_l", "p_r"):
            p = _vec3(getattr(self, name), name)
            if p[2] != 0.0:
                raise InvalidInputError(f"{name} must lie in the sole plane (z == 0)")
            object.__setattr__(self, name, p)


def polygon_area(vertices):
    """Signed shoelace area; positive for counter-clockwise order."""
    v = np.asarray(vertices, dtype=float)
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def check_polygon(vertices, tol=1e-12):
    """Validate a convex CCW polygon and return it as an ``(v, 2)`` array."""
    v = np.asarray(vertices, dtype=float)
    if v.ndim != 2 or v.shape[1] != 2:
        raise PolygonDegenerateError("polygon must be a list of (x, y) vertices")
    if len(v) < 3:
        raise PolygonDegenerateError(f"polygon needs at least 3 vertices, got {len(v)}")
    if not np.all(np.isfinite(v)):
        raise PolygonDegenerateError("polygon has non-finite vertices")
    if polygon_area(v) <= tol:
        raise PolygonDegenerateError("polygon must have positive area in CCW order")
    edges = np.roll(v, -1, axis=0) - v
    nxt = np.roll(edges, -1, axis=0)
    turns = edges[:, 0] * nxt[:, 1] - edges[:, 1] * nxt[:, 0]
    if np.any(turns <= tol):
        raise PolygonDegenerateError("polygon must be strictly convex and counter-clockwise")
    return v


def check_rotation(R, tol=1e-9):
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3) or not np.all(np.isfinite(R)):
        raise InvalidInputError("rotation must be a finite 3x3 matrix")
    if not np.allclose(R.T @ R, np.eye(3), atol=tol) or abs(np.linalg.det(R) - 1.0) > tol:
        raise InvalidInputError("rotation must be orthonormal with determinant +1")
    return R


def rotation_from_ypr(yaw, pitch=0.0, roll=0.0, degrees=True):
    """Z-Y-X (yaw-pitch-roll) rotation matrix, ``Rz(yaw) @ Ry(pitch) @ Rx(roll)``."""
    if degrees:
        yaw, pitch, roll = np.radians([yaw, pitch, roll])
    cy, sy = np.cos(yaw), np.sin(yaw)
    cp, sp = np.cos(pitch), np.sin(pitch)
    cr, sr = np.cos(roll), np.sin(roll)
    Rz = np.array([[cy, -sy, 0.0], [sy, cy, 0.0], [0.0, 0.0, 1.0]])
    Ry = np.array([[cp, 0.0, sp], [0.0, 1.0, 0.0], [-sp, 0.0, cp]])
    Rx = np.array([[1.0, 0.0, 0.0], [0.0, cr, -sr], [0.0, sr, cr]])
    return Rz @ Ry @ Rx


@dataclass(frozen=True)
class FootSpec:
    """Foot pose and support polygon (vertices in foot coordinates, CCW)."""

    position: np.ndarray
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    polygon: np.ndarray = field(
        default_factory=lambda: np.array([[-0.1, -0.05], [0.1, -0.05], [0.1, 0.05], [-0.1, 0.05]])
    )

    def __post_init__(self):
        object.__setattr__(self, "position", _vec3(self.position, "position"))
        object.__setattr__(self, "rotation", check_rotation(self.rotation))
        object.__setattr__(self, "polygon", check_polygon(self.polygon))

    @property
    def centroid(self):
        """Area centroid of the support polygon, as a foot-frame 3-vector."""
        v = self.polygon
        x, y = v[:, 0], v[:, 1]
        xn, yn = np.roll(x, -1), np.roll(y, -1)
        cross = x * yn - xn * y
        area = 0.5 * cross.sum()
        cx = ((x + xn) * cross).sum() / (6.0 * area)
        cy = ((y + yn) * cross).sum() / (6.0 * area)
        return np.array([cx, cy, 0.0])


def gravity_vector(g=STANDARD_GRAVITY):
    """Gravity ``(0, 0, g)``; the free-fall acceleration is its negative."""
    g = float(g)
    if not np.isfinite(g) or g <= 0.0:
        raise InvalidInputError("gravity magnitude must be positive and finite")
    return np.array([0.0, 0.0, g])


def check_gravity(g):
    g = _vec3(g, "gravity")
    if g[0] != 0.0 or g[1] != 0.0 or g[2] <= 0.0:
        raise InvalidInputError("gravity must be (0, 0, g) with g > 0")
    return g


def lever(x, foot_position, rotation, p):
    """``x - x_foot - R p``: the CoP-to-CoM segment. Batched and dual-safe."""
    return x - foot_position - ad.matvec(rotation, p)


def cop_world(foot, p):
    """World-frame CoP ``x_foot + R p`` of a foot-frame CoP ``p``."""
    p = _vec3(p, "p")
    if p[2] != 0.0:
        raise InvalidInputError("p must lie in the sole plane (z == 0)")
    return foot.position + foot.rotation @ p


def contact_acceleration(state, mode, left, right, u, g=None):
    """CoM acceleration for a contact mode.

    Returns ``-g`` plus ``lambda * (x - x_foot - R p)`` for every foot in
    contact. ``left``/``right`` may be ``None`` when that foot is airborne.
    """
    g = gravity_vector() if g is None else check_gravity(g)
    mode = ContactMode(mode)
    acc = -g.copy()
    if mode.left_in_contact:
        if left is None:
            raise InvalidInputError("left foot spec required in this mode")
        acc = acc + u.lambda_l * lever(state.x, left.position, left.rotation, u.p_l)
    if mode.right_in_contact:
        if right is None:
            raise InvalidInputError("right foot spec required in this mode")
        acc = acc + u.lambda_r * lever(state.x, right.position, right.rotation, u.p_r)
    if not np.all(np.isfinite(acc)):
        raise InvalidInputError("non-finite acceleration")
    return acc


def foot_force(state, foot, lam, p, mass):
    """Inertial-frame contact force ``m * lambda * (x - x_foot - R p)`` [N]."""
    mass = float(mass)
    if not np.isfinite(mass) or mass <= 0.0:
        raise InvalidInputError("mass must be positive")
    lam = float(lam)
    if not np.isfinite(lam) or lam < 0.0:
        raise InvalidInputError("lambda must be finite and >= 0")
    return mass * lam * (state.x - cop_world(foot, p))


def taylor_step(state, acceleration, dt):
    """Second-order Taylor update under constant acceleration over ``dt``."""
    dt = float(dt)
    if not np.isfinite(dt) or dt <= 0.0:
        raise InvalidInputError("dt must be positive")
    a = _vec3(acceleration, "acceleration")
    return CoMState(state.x + state.v * dt + 0.5 * a * dt**2, state.v + a * dt)
