"""Forward-mode algorithmic differentiation with vectorized dual numbers.

A :class:`Dual` carries a value array of shape ``S`` and a tangent array of
shape ``S + (n,)``, one column per seed direction. Elementary operations
propagate both, so a function written against plain numpy arithmetic returns
its value and its directional derivatives in one pass.

Knot-local functions of a transcribed trajectory only touch a handful of
variables each. :class:`LocalFunction` exploits this: every knot receives its
own copy of the same small set of seed directions, so a whole sparse Jacobian
costs one dual evaluation (or ``2 * n_seeds`` evaluations in central-difference
mode).
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .errors import NumericalFailure

ALGORITHMIC = "algorithmic"
CENTRAL_DIFFERENCE = "central_difference"
GRADIENT_MODES = (ALGORITHMIC, CENTRAL_DIFFERENCE)


def _tangent(c):
    c = np.asarray(c, dtype=float)
    return c[..., None]


class Dual:
    """Array-valued dual number ``val + eps * e``."""

    __array_priority__ = 1000
    __array_ufunc__ = None

    def __init__(self, val, eps):
        self.val = np.asarray(val, dtype=float)
        self.eps = np.asarray(eps, dtype=float)

    @classmethod
    def seed(cls, val):
        """Independent variables: one seed direction per element of ``val``."""
        val = np.asarray(val, dtype=float)
        n = val.size
        return cls(val, np.eye(n).reshape(val.shape + (n,)))

    @property
    def shape(self):
        return self.val.shape

    @property
    def n_seeds(self):
        return self.eps.shape[-1]

    def __len__(self):
        return len(self.val)

    def __repr__(self):
        return f"Dual(val={self.val!r}, n_seeds={self.n_seeds})"

    def __getitem__(self, key):
        if not isinstance(key, tuple):
            key = (key,)
        return Dual(self.val[key], self.eps[key + (slice(None),)])

    def __neg__(self):
        return Dual(-self.val, -self.eps)

    def __pos__(self):
        return self

    def __add__(self, other):
        if isinstance(other, Dual):
            return Dual(self.val + other.val, self.eps + other.eps)
        val = self.val + other
        return Dual(val, np.broadcast_to(self.eps, val.shape + (self.n_seeds,)))

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Dual):
            return Dual(
                self.val * other.val,
                self.eps * _tangent(other.val) + other.eps * _tangent(self.val),
            )
        other = np.asarray(other, dtype=float)
        return Dual(self.val * other, self.eps * _tangent(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Dual):
            val = self.val / other.val
            eps = (self.eps - other.eps * _tangent(val)) / _tangent(other.val)
            return Dual(val, eps)
        other = np.asarray(other, dtype=float)
        return Dual(self.val / other, self.eps / _tangent(other))

    def __rtruediv__(self, other):
        val = np.asarray(other, dtype=float) / self.val
        return Dual(val, -self.eps * _tangent(val / self.val))

    def __pow__(self, power):
        if isinstance(power, Dual):
            raise TypeError("Dual exponents are not supported")
        if power == 2:
            return self * self
        return Dual(self.val**power, self.eps * _tangent(power * self.val ** (power - 1)))

    def sum(self, axis=None):
        if axis is None:
            axes = tuple(range(self.val.ndim))
        else:
            axes = tuple(np.atleast_1d(axis) % self.val.ndim)
        return Dual(self.val.sum(axis=axes), self.eps.sum(axis=axes))


def value(x):
    """Strip tangents, returning a plain array."""
    return x.val if isinstance(x, Dual) else np.asarray(x, dtype=float)


def sqrt(x):
    if isinstance(x, Dual):
        val = np.sqrt(x.val)
        return Dual(val, x.eps / _tangent(2.0 * val))
    return np.sqrt(x)


def stack(items, axis=-1):
    """``np.stack`` accepting a mix of arrays and duals."""
    duals = [item for item in items if isinstance(item, Dual)]
    if not duals:
        return np.stack([np.asarray(item, dtype=float) for item in items], axis=axis)
    n = duals[0].n_seeds
    vals = [value(item) for item in items]
    shape = np.broadcast_shapes(*(v.shape for v in vals))
    vals = [np.broadcast_to(v, shape) for v in vals]
    epss = [
        np.broadcast_to(item.eps, shape + (n,))
        if isinstance(item, Dual)
        else np.zeros(shape + (n,))
        for item in items
    ]
    val = np.stack(vals, axis=axis)
    # the tangent axis stays last
    eps_axis = axis if axis >= 0 else axis - 1
    return Dual(val, np.stack(epss, axis=eps_axis))


def matvec(R, v):
    """``R @ v`` over leading batch axes for a constant matrix ``R``."""
    if isinstance(v, Dual):
        return Dual(
            np.einsum("...ij,...j->...i", R, v.val),
            np.einsum("...ij,...jn->...in", R, v.eps),
        )
    return np.einsum("...ij,...j->...i", R, v)


def rmatvec(R, v):
    """``R.T @ v`` over leading batch axes for a constant matrix ``R``."""
    return matvec(np.swapaxes(np.asarray(R, dtype=float), -1, -2), v)


def dot(a, b):
    """Inner product over the last axis."""
    return (a * b).sum(axis=-1)


def gradient(fun, point, mode=ALGORITHMIC):
    """Gradient of a scalar function.

    Parameters
    ----------
    fun : callable
        Scalar function of a 1-D array. In algorithmic mode it must be written
        with operations :class:`Dual` supports.
    point : array_like
        Evaluation point.
    mode : {"algorithmic", "central_difference"}
        Central differences use the step ``1e-6 * max(1, |x_i|)``.
    """
    x = np.asarray(point, dtype=float).ravel()
    if mode == ALGORITHMIC:
        out = fun(Dual.seed(x))
        if not isinstance(out, Dual):
            g = np.zeros_like(x)
            f0 = float(out)
        else:
            g = np.asarray(out.eps, dtype=float).reshape(-1)
            g = np.broadcast_to(g, x.shape).copy()
            f0 = float(out.val)
    elif mode == CENTRAL_DIFFERENCE:
        f0 = float(fun(x))
        g = np.empty_like(x)
        for i in range(x.size):
            h = 1e-6 * max(1.0, abs(x[i]))
            xp = x.copy()
            xm = x.copy()
            xp[i] += h
            xm[i] -= h
            g[i] = (float(fun(xp)) - float(fun(xm))) / (2.0 * h)
    else:
        raise ValueError(f"unknown gradient mode {mode!r}")
    if not (np.isfinite(f0) and np.all(np.isfinite(g))):
        raise NumericalFailure("non-finite function value or gradient")
    return g


class LocalFunction:
    """A function evaluated independently at ``M`` sites of a decision vector.

    Parameters
    ----------
    fun : callable
        ``fun(*blocks) -> (M, m)`` where block ``j`` has shape ``(M, d_j)``.
        Must be written with :class:`Dual`-compatible operations.
    blocks : sequence of int arrays
        Block ``j`` is an ``(M, d_j)`` array of indices into the decision
        vector. An index may appear at several sites (shared variables).
    mask : bool array, optional
        ``(M, m)`` selection of which outputs are emitted, in row-major order.
    """

    def __init__(self, fun, blocks, mask=None):
        self.fun = fun
        self.blocks = [np.asarray(b, dtype=np.intp) for b in blocks]
        self.blocks = [b[:, None] if b.ndim == 1 else b for b in self.blocks]
        self.sites = self.blocks[0].shape[0]
        if any(b.shape[0] != self.sites for b in self.blocks):
            raise ValueError("all blocks need the same number of sites")
        self.columns = np.concatenate(self.blocks, axis=1)
        self.widths = [b.shape[1] for b in self.blocks]
        self.n_seeds = int(sum(self.widths))
        self.mask = None if mask is None else np.asarray(mask, dtype=bool)
        self._n_out = None

    @property
    def size(self):
        """Number of emitted outputs."""
        if self._n_out is None:
            if self.mask is not None:
                self._n_out = int(self.mask.sum())
            else:
                probe = self._raw([np.zeros(b.shape) for b in self.blocks])
                self._n_out = int(np.asarray(probe).size)
        return self._n_out

    def _raw(self, arrays):
        out = self.fun(*arrays)
        if isinstance(out, Dual):
            if out.val.ndim == 1:
                out = out[:, None] if out.val.shape[0] == self.sites else out
            return out
        out = np.asarray(out, dtype=float)
        return out[:, None] if out.ndim == 1 else out

    def _select(self, arr):
        if self.mask is None:
            return arr.reshape(-1)
        return arr[self.mask]

    def __call__(self, z):
        out = self._raw([z[b] for b in self.blocks])
        out = value(out)
        return self._select(out)

    def local_jacobian(self, z, mode=ALGORITHMIC):
        """Values ``(M, m)`` and per-site derivatives ``(M, m, n_seeds)``."""
        arrays = [z[b] for b in self.blocks]
        if mode == ALGORITHMIC:
            duals = []
            offset = 0
            for arr, w in zip(arrays, self.widths):
                eps = np.zeros(arr.shape + (self.n_seeds,))
                eps[:, np.arange(w), offset + np.arange(w)] = 1.0
                duals.append(Dual(arr, eps))
                offset += w
            out = self._raw(duals)
            if not isinstance(out, Dual):
                val = np.asarray(out, dtype=float)
                return val, np.zeros(val.shape + (self.n_seeds,))
            val = out.val
            jac = np.broadcast_to(out.eps, val.shape + (self.n_seeds,))
            return val, jac
        if mode == CENTRAL_DIFFERENCE:
            val = value(self._raw(arrays))
            jac = np.empty(val.shape + (self.n_seeds,))
            s = 0
            for j, w in enumerate(self.widths):
                for c in range(w):
                    base = arrays[j][:, c]
                    h = 1e-6 * np.maximum(1.0, np.abs(base))
                    plus = [a.copy() for a in arrays]
                    minus = [a.copy() for a in arrays]
                    plus[j][:, c] = base + h
                    minus[j][:, c] = base - h
                    fp = value(self._raw(plus))
                    fm = value(self._raw(minus))
                    jac[..., s] = (fp - fm) / (2.0 * h[:, None])
                    s += 1
            return val, jac
        raise ValueError(f"unknown gradient mode {mode!r}")

    def emitted(self, z, mode=ALGORITHMIC):
        """Emitted values ``(E,)`` with their local gradients and columns, both ``(E, n_seeds)``."""
        val, jac = self.local_jacobian(z, mode)
        cols = np.broadcast_to(self.columns[:, None, :], jac.shape)
        if self.mask is None:
            return (val.reshape(-1), jac.reshape(-1, self.n_seeds),
                    cols.reshape(-1, self.n_seeds))
        return val[self.mask], jac[self.mask], cols[self.mask]

    def jacobian_entries(self, z, mode=ALGORITHMIC):
        """Emitted values and COO entries ``(rows, cols, vals)`` of the Jacobian."""
        val, jac, cols = self.emitted(z, mode)
        rows = np.broadcast_to(np.arange(val.size)[:, None], jac.shape)
        return val, rows.reshape(-1), cols.reshape(-1), jac.reshape(-1)

    def total_gradient(self, z, n, mode=ALGORITHMIC):
        """Gradient of the sum of all emitted outputs, as a dense ``(n,)`` array."""
        sel_val, _, cols, vals = self.jacobian_entries(z, mode)
        return float(sel_val.sum()), np.bincount(cols, weights=vals, minlength=n)


def stacked_jacobian(functions, z, n, mode=ALGORITHMIC):
    """Values and CSR Jacobian of several :class:`LocalFunction` stacked row-wise."""
    values = []
    rows = []
    cols = []
    data = []
    offset = 0
    for fn in functions:
        val, r, c, d = fn.jacobian_entries(z, mode)
        values.append(val)
        rows.append(r + offset)
        cols.append(c)
        data.append(d)
        offset += val.size
    if not functions:
        return np.zeros(0), sp.csr_matrix((0, n))
    jac = sp.csr_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=(offset, n),
    )
    return np.concatenate(values), jac
