"""Augmented Lagrangian solver for bound-constrained smooth NLPs.

The outer loop updates multiplier estimates and the penalty parameter. The
inner loop minimizes the augmented Lagrangian over the variable bounds with a
projected quasi-Newton method:

* constraint curvature enters through ``rho * J^T J`` built from the exact
  sparse Jacobians;
* the remaining second-order information is a *partitioned* SR1 model: every
  element (one output of one knot-local function) keeps its own small secant
  matrix over the handful of variables it touches, updated from exact element
  gradients. Bilinear and quadratic elements are recovered exactly after a few
  steps.
* bounds are handled by an epsilon-active set and projected Armijo backtracking.
"""

from __future__ import annotations

import enum
import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import autodiff as ad
from .errors import ConfigurationError, NumericalFailure

logger = logging.getLogger(__name__)


class Status(str, enum.Enum):
    CONVERGED = "Converged"
    MAX_ITERATIONS = "MaxIterations"
    INFEASIBLE = "Infeasible"
    NUMERICAL_FAILURE = "NumericalFailure"


@dataclass(frozen=True)
class SolverConfig:
    max_outer_iterations: int = 40
    max_inner_iterations: int = 300
    constraint_tolerance: float = 1e-6
    optimality_tolerance: float = 1e-5
    initial_penalty: float = 10.0
    penalty_growth_factor: float = 10.0
    max_penalty: float = 1e10
    gradient_mode: str = ad.ALGORITHMIC
    armijo: float = 1e-4
    min_step: float = 1e-12
    time_limit: float | None = None

    def __post_init__(self):
        if self.constraint_tolerance <= 0 or self.optimality_tolerance <= 0:
            raise ConfigurationError("tolerances must be > 0")
        if self.penalty_growth_factor <= 1:
            raise ConfigurationError("penalty_growth_factor must be > 1")
        if self.initial_penalty <= 0:
            raise ConfigurationError("initial_penalty must be > 0")
        if self.max_outer_iterations < 1 or self.max_inner_iterations < 1:
            raise ConfigurationError("iteration budgets must be >= 1")
        if self.gradient_mode not in ad.GRADIENT_MODES:
            raise ConfigurationError(f"gradient_mode must be one of {ad.GRADIENT_MODES}")


@dataclass
class SolveReport:
    status: Status
    iterations: int = 0
    inner_iterations: int = 0
    objective: float = float("nan")
    max_violation: float = float("inf")
    optimality: float = float("inf")
    cost_breakdown: dict | None = None
    wall_time: float = 0.0
    message: str = ""
    guess_clipped: bool = False
    history: list = field(default_factory=list)

    @property
    def converged(self):
        return self.status is Status.CONVERGED

    def as_dict(self):
        return {
            "status": self.status.value,
            "iterations": self.iterations,
            "inner_iterations": self.inner_iterations,
            "objective": self.objective,
            "max_violation": self.max_violation,
            "optimality": self.optimality,
            "cost_breakdown": self.cost_breakdown,
            "wall_time": self.wall_time,
            "message": self.message,
            "guess_clipped": self.guess_clipped,
            "history": self.history,
        }


def gradient(fun, point, mode=ad.ALGORITHMIC):
    """Gradient of a scalar function; see :func:`stepup.autodiff.gradient`."""
    return ad.gradient(fun, point, mode)


class _Elements:
    """Partitioned SR1 curvature for the emitted outputs of one LocalFunction."""

    def __init__(self, fn):
        self.fn = fn
        if fn.mask is None:
            self.site = np.repeat(np.arange(fn.sites), fn.size // max(fn.sites, 1))
        else:
            self.site = np.nonzero(fn.mask)[0]
        self.B = np.zeros((fn.size, fn.n_seeds, fn.n_seeds))
        self.z_prev = None
        self.jac_prev = None

    def update(self, z_local, jac):
        if self.z_prev is not None:
            s = z_local - self.z_prev
            y = jac - self.jac_prev
            r = y - np.einsum("eij,ej->ei", self.B, s)
            denom = np.einsum("ei,ei->e", r, s)
            scale = np.linalg.norm(r, axis=1) * np.linalg.norm(s, axis=1)
            ok = np.abs(denom) > 1e-8 * scale
            ok &= scale > 0
            if np.any(ok):
                rr = r[ok]
                self.B[ok] += rr[:, :, None] * rr[:, None, :] / denom[ok, None, None]
        self.z_prev = z_local.copy()
        self.jac_prev = jac.copy()

    def assemble(self, weights, cols_site):
        """COO triplets of ``sum_e weights_e B_e`` aggregated per site."""
        if self.B.shape[0] == 0:
            return None
        weighted = self.B * weights[:, None, None]
        starts = np.flatnonzero(np.r_[True, np.diff(self.site) != 0])
        per_site = np.add.reduceat(weighted, starts, axis=0)
        cols = cols_site[starts]
        ns = self.fn.n_seeds
        rows = np.broadcast_to(cols[:, :, None], (len(starts), ns, ns))
        colm = np.broadcast_to(cols[:, None, :], (len(starts), ns, ns))
        return rows.ravel(), colm.ravel(), per_site.ravel()


class _Evaluation:
    __slots__ = ("z", "f", "g", "c", "Jc", "h", "Jh", "parts")


def _evaluate(problem, z, mode):
    ev = _Evaluation()
    ev.z = z
    ev.parts = []
    n = problem.n
    f = 0.0
    g = np.zeros(n)
    for fn in problem.objective_terms:
        val, jac, cols = fn.emitted(z, mode)
        f += float(val.sum())
        g += np.bincount(cols.ravel(), weights=jac.ravel(), minlength=n)
        ev.parts.append(("objective", fn, val, jac, cols))
    ev.f, ev.g = f, g
    for kind, fns in (("equality", problem.equalities), ("inequality", problem.inequalities)):
        vals, rows, colss, datas = [], [], [], []
        offset = 0
        for fn in fns:
            val, jac, cols = fn.emitted(z, mode)
            vals.append(val)
            rows.append(np.repeat(np.arange(offset, offset + val.size), jac.shape[1]))
            colss.append(cols.ravel())
            datas.append(jac.ravel())
            offset += val.size
            ev.parts.append((kind, fn, val, jac, cols))
        if fns:
            value = np.concatenate(vals)
            J = sp.csr_matrix((np.concatenate(datas), (np.concatenate(rows), np.concatenate(colss))),
                              shape=(offset, n))
        else:
            value, J = np.zeros(0), sp.csr_matrix((0, n))
        if kind == "equality":
            ev.c, ev.Jc = value, J
        else:
            ev.h, ev.Jh = value, J
    finite = np.isfinite(ev.f) and np.all(np.isfinite(ev.g))
    finite = finite and np.all(np.isfinite(ev.c)) and np.all(np.isfinite(ev.h))
    finite = finite and np.all(np.isfinite(ev.Jc.data)) and np.all(np.isfinite(ev.Jh.data))
    if not finite:
        raise NumericalFailure("non-finite objective or constraint evaluation")
    return ev


def _violation(c, h):
    eq = float(np.abs(c).max()) if c.size else 0.0
    ineq = float(np.maximum(h, 0.0).max()) if h.size else 0.0
    return max(eq, ineq)


class _AugmentedLagrangian:
    def __init__(self, problem, config):
        self.problem = problem
        self.config = config
        self.mu = np.zeros(problem.n_eq)
        self.nu = np.zeros(problem.n_ineq)
        self.rho = config.initial_penalty
        self.elements = {}
        for fn in problem.objective_terms + problem.equalities + problem.inequalities:
            self.elements[id(fn)] = _Elements(fn)
        self.fixed = problem.lower == problem.upper
        self.delta = 1e-6

    def value(self, z):
        p = self.problem
        try:
            f = p.objective(z)
            c = p.equality(z)
            h = p.inequality(z)
        except (FloatingPointError, ArithmeticError):
            return np.inf
        if not (np.isfinite(f) and np.all(np.isfinite(c)) and np.all(np.isfinite(h))):
            return np.inf
        q = np.maximum(0.0, self.nu + self.rho * h)
        return f + self.mu @ c + 0.5 * self.rho * (c @ c) + (q @ q - self.nu @ self.nu) / (2 * self.rho)

    def derivatives(self, ev):
        w = self.mu + self.rho * ev.c
        q = np.maximum(0.0, self.nu + self.rho * ev.h)
        val = ev.f + self.mu @ ev.c + 0.5 * self.rho * (ev.c @ ev.c)
        val += (q @ q - self.nu @ self.nu) / (2 * self.rho)
        grad = ev.g + ev.Jc.T @ w + ev.Jh.T @ q
        return val, grad, w, q

    def update_curvature(self, ev):
        for _, fn, _, jac, cols in ev.parts:
            self.elements[id(fn)].update(ev.z[cols], jac)

    def model_hessian(self, ev, w, q):
        n = self.problem.n
        rows, cols, data = [], [], []
        weights = {"equality": iter(np.split(w, np.cumsum([f.size for f in self.problem.equalities])[:-1]) if self.problem.equalities else []),
                   "inequality": iter(np.split(q, np.cumsum([f.size for f in self.problem.inequalities])[:-1]) if self.problem.inequalities else [])}
        for kind, fn, val, _, site_cols in ev.parts:
            if kind == "objective":
                wt = np.ones(val.size)
            else:
                wt = next(weights[kind])
            trip = self.elements[id(fn)].assemble(wt, site_cols)
            if trip is not None:
                rows.append(trip[0])
                cols.append(trip[1])
                data.append(trip[2])
        H = sp.csr_matrix((np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(n, n)) if data else sp.csr_matrix((n, n))
        H = 0.5 * (H + H.T)
        H = H + self.rho * (ev.Jc.T @ ev.Jc)
        active = q > 0
        if np.any(active):
            Ja = ev.Jh[active]
            H = H + self.rho * (Ja.T @ Ja)
        return H

    def projected_gradient(self, z, grad):
        p = self.problem
        return np.clip(z - grad, p.lower, p.upper) - z

    def direction(self, z, grad, H, pg_norm):
        p = self.problem
        eps = min(1e-3, pg_norm)
        at_bound = self.fixed | ((z <= p.lower + eps) & (grad > 0)) | ((z >= p.upper - eps) & (grad < 0))
        free = ~at_bound
        d = np.zeros_like(z)
        movable = at_bound & ~self.fixed
        d[movable] = -grad[movable]
        if not np.any(free):
            return d
        Hff = H[free][:, free].tocsc()
        gf = grad[free]
        eye = sp.identity(int(free.sum()), format="csc")
        for _ in range(40):
            try:
                lu = spla.splu(Hff + self.delta * eye)
                df = lu.solve(-gf)
            except RuntimeError:
                df = None
            if df is not None and np.all(np.isfinite(df)):
                slope = gf @ df
                if slope < -1e-10 * np.linalg.norm(gf) * np.linalg.norm(df):
                    d[free] = df
                    return d
            self.delta = max(10.0 * self.delta, 1e-8)
        d[free] = -gf
        return d

    def minimize(self, z, tol, max_iter, mode, deadline):
        """Inner loop; returns ``(z, evaluation, projected-gradient norm, iterations)``."""
        p = self.problem
        cfg = self.config
        ev = _evaluate(p, z, mode)
        self.update_curvature(ev)
        it = 0
        while True:
            val, grad, w, q = self.derivatives(ev)
            pg = float(np.abs(self.projected_gradient(z, grad)).max(initial=0.0))
            if pg <= tol or it >= max_iter or (deadline is not None and time.perf_counter() > deadline):
                return z, ev, pg, it
            H = self.model_hessian(ev, w, q)
            d = self.direction(z, grad, H, pg)
            step = 1.0
            while True:
                z_new = np.clip(z + step * d, p.lower, p.upper)
                v_new = self.value(z_new)
                if v_new <= val + cfg.armijo * (grad @ (z_new - z)):
                    break
                step *= 0.5
                if step < cfg.min_step:
                    break
            if step < cfg.min_step:
                # no progress along the model direction; fall back to projected steepest descent once
                self.delta = max(100.0 * self.delta, 1e-4)
                d = -grad
                step = 1.0 / max(1.0, float(np.abs(grad).max()))
                while step >= cfg.min_step:
                    z_new = np.clip(z + step * d, p.lower, p.upper)
                    v_new = self.value(z_new)
                    if v_new <= val + cfg.armijo * (grad @ (z_new - z)):
                        break
                    step *= 0.5
                if step < cfg.min_step:
                    return z, ev, pg, it
            self.delta = max(self.delta * 0.3, 1e-10) if step == 1.0 else min(self.delta * 3.0, 1e8)
            z = z_new
            ev = _evaluate(p, z, mode)
            self.update_curvature(ev)
            it += 1


def solve(problem, guess, config=None, callback=None):
    """Minimize ``problem`` from ``guess``.

    Parameters
    ----------
    problem : NlpProblem
    guess : array_like
        Starting point; clipped into the bounds if needed (recorded in the report).
    config : SolverConfig, optional
    callback : callable, optional
        Called with ``(outer_iteration, z, history_entry)`` after each outer iteration.

    Returns
    -------
    z : ndarray
        Final iterate (the last accepted one).
    report : SolveReport
    """
    cfg = SolverConfig() if config is None else config
    t0 = time.perf_counter()
    deadline = None if cfg.time_limit is None else t0 + cfg.time_limit
    z = np.asarray(guess, dtype=float).copy()
    if z.shape != (problem.n,):
        raise ConfigurationError(f"guess has shape {z.shape}, expected ({problem.n},)")
    clipped = np.clip(z, problem.lower, problem.upper)
    report = SolveReport(status=Status.MAX_ITERATIONS, guess_clipped=bool(np.any(clipped != z)))
    z = clipped

    al = _AugmentedLagrangian(problem, cfg)
    eta = 1.0 / al.rho**0.1
    omega = 1.0 / al.rho
    accepted = None
    total_inner = 0
    try:
        for outer in range(1, cfg.max_outer_iterations + 1):
            z_try, ev, pg, n_inner = al.minimize(z, max(omega, 0.5 * cfg.optimality_tolerance),
                                                 cfg.max_inner_iterations, cfg.gradient_mode, deadline)
            total_inner += n_inner
            viol = max(_violation(ev.c, ev.h), 0.0)
            entry = {
                "outer": outer, "inner": n_inner, "penalty": al.rho, "objective": ev.f,
                "violation": viol, "optimality": pg, "accepted": True,
            }
            # keep accepted violations monotone: a worse iterate is discarded and the penalty raised
            if accepted is not None and viol > accepted["violation"] and outer > 1:
                entry["accepted"] = False
                report.history.append(entry)
                if callback is not None:
                    callback(outer, z_try, entry)
                if al.rho >= cfg.max_penalty:
                    report.status = Status.INFEASIBLE
                    report.message = "penalty limit reached without reducing infeasibility"
                    break
                al.rho = min(al.rho * cfg.penalty_growth_factor, cfg.max_penalty)
                eta = 1.0 / al.rho**0.1
                omega = 1.0 / al.rho
                if deadline is not None and time.perf_counter() > deadline:
                    report.message = "time limit reached"
                    break
                continue

            z = z_try
            accepted = entry
            report.history.append(entry)
            report.iterations = outer
            report.objective = ev.f
            report.max_violation = viol
            report.optimality = pg
            if callback is not None:
                callback(outer, z, entry)
            logger.debug("outer %d: f=%.6g viol=%.2e pg=%.2e rho=%.1e inner=%d",
                         outer, ev.f, viol, pg, al.rho, n_inner)

            if viol <= cfg.constraint_tolerance and pg <= cfg.optimality_tolerance:
                report.status = Status.CONVERGED
                report.message = "constraint and optimality tolerances met"
                break
            if deadline is not None and time.perf_counter() > deadline:
                report.message = "time limit reached"
                break
            if viol <= eta:
                al.mu = al.mu + al.rho * ev.c
                al.nu = np.maximum(0.0, al.nu + al.rho * ev.h)
                eta = max(eta / al.rho**0.9, 0.1 * cfg.constraint_tolerance)
                omega = max(omega / al.rho, 0.5 * cfg.optimality_tolerance)
            else:
                if al.rho >= cfg.max_penalty:
                    report.status = Status.INFEASIBLE
                    report.message = "penalty limit reached without reaching feasibility"
                    break
                al.rho = min(al.rho * cfg.penalty_growth_factor, cfg.max_penalty)
                eta = 1.0 / al.rho**0.1
                omega = 1.0 / al.rho
        else:
            report.message = "outer iteration budget exhausted"
        if report.status is Status.MAX_ITERATIONS and not report.message:
            report.message = "iteration budget exhausted"
    except NumericalFailure as exc:
        report.status = Status.NUMERICAL_FAILURE
        report.message = str(exc)

    report.inner_iterations = total_inner
    if accepted is None:
        report.objective = problem.objective(z)
        report.max_violation = problem.max_violation(z)
    breakdown = problem.breakdown(z)
    report.cost_breakdown = None if breakdown is None else breakdown.as_dict()
    report.wall_time = time.perf_counter() - t0
    return z, report
