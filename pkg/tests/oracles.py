"""Reference computations written independently of the package internals."""

import math

import numpy as np


def point_in_convex_polygon(point, vertices):
    """Winding-number test on the closed polygon (boundary counts as inside)."""
    px, py = point
    v = [tuple(map(float, q)) for q in vertices]
    winding = 0.0
    for (x0, y0), (x1, y1) in zip(v, v[1:] + v[:1]):
        ax, ay, bx, by = x0 - px, y0 - py, x1 - px, y1 - py
        cross = ax * by - ay * bx
        dot = ax * bx + ay * by
        if abs(cross) < 1e-15 and dot <= 0.0:
            return True  # on an edge
        winding += math.atan2(cross, dot)
    return abs(winding) > math.pi


def ballistic(x0, v0, t, g=9.81):
    """Closed-form free-fall position and velocity at times ``t``."""
    t = np.asarray(t, dtype=float)[:, None]
    acc = np.array([0.0, 0.0, -g])
    return np.asarray(x0) + np.asarray(v0) * t + 0.5 * acc * t**2, np.asarray(v0) + acc * t


def yaw_matrix(deg):
    c, s = math.cos(math.radians(deg)), math.sin(math.radians(deg))
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def taylor_chain(x0, v0, accelerations, dts):
    """Knot sequence from repeated constant-acceleration updates, in plain Python floats."""
    xs, vs = [list(map(float, x0))], [list(map(float, v0))]
    for a, dt in zip(accelerations, dts):
        x, v = xs[-1], vs[-1]
        xs.append([x[i] + v[i] * dt + 0.5 * a[i] * dt * dt for i in range(3)])
        vs.append([v[i] + a[i] * dt for i in range(3)])
    return np.array(xs), np.array(vs)
