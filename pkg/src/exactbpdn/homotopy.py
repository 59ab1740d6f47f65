"""Exact solution path in ``t`` from ``||A^T b||_inf`` down to ``0``.

Between breakpoints the primal solution is affine in ``t`` and the dual
solution affine in ``1/t``.  Each segment's direction comes from an NNLS
subproblem; the next breakpoint is where a new column reaches the face
(``T_plus``) or a support coordinate reaches zero (``T_minus``).
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError, NonConvergenceError, PathStallError
from .linalg import as_design_matrix
from .nnls import FREE, NONNEG, ZERO, NnlsProblem, solve_nnls
from .results import PrimalDualPair, SolverReport
from .slow import SolverOptions, make_dual_point, max_descent_time

# relative size below which the subproblem residual counts as zero
XI_ZERO_TOL = 1e-11
# slack in the departure test v_j <= -|x_j|
DEPART_SLACK = 1e-12
# departure ratios this close to 1 mean the coordinate vanishes exactly at t = 0
RATIO_SNAP = 1e-10
STALL_TOL = 1e-14


@dataclass
class HomotopyState:
    t: float
    x: np.ndarray
    p: object
    v_hat: np.ndarray | None = None
    xi: np.ndarray | None = None
    T_plus: float | None = None
    T_minus: float | None = None
    C: float | None = None
    active: np.ndarray | None = None
    # ||b||; t p = A x - b cancels terms of this size, so p carries round-off relative to it
    b_norm: float = 0.0


@dataclass(frozen=True)
class PathBreakpoint:
    t: float
    x: np.ndarray
    p: np.ndarray


class SolutionPath:
    """Breakpoints ``(t_k, x_k, p_k)`` with ``t`` strictly decreasing to ``0``."""

    def __init__(self, breakpoints, b, meta=None, report=None):
        if not breakpoints:
            raise InvalidArgumentError("a path needs at least one breakpoint")
        ts = [bp.t for bp in breakpoints]
        if any(a <= c for a, c in zip(ts, ts[1:])):
            raise InvalidArgumentError("breakpoint t values must be strictly decreasing")
        self.breakpoints = list(breakpoints)
        self.b = np.asarray(b, dtype=np.float64)
        self.meta = dict(meta or {})
        self.report = report

    @property
    def ts(self):
        return np.array([bp.t for bp in self.breakpoints])

    def __len__(self):
        return len(self.breakpoints)

    def __eq__(self, other):
        if not isinstance(other, SolutionPath) or len(self) != len(other):
            return NotImplemented if not isinstance(other, SolutionPath) else False
        same = all(a.t == c.t and np.array_equal(a.x, c.x) and np.array_equal(a.p, c.p)
                   for a, c in zip(self.breakpoints, other.breakpoints))
        return same and np.array_equal(self.b, other.b) and self.meta == other.meta

    __hash__ = None

    def __repr__(self):
        return f"SolutionPath({len(self)} breakpoints, t0={self.breakpoints[0].t!r})"


def _subproblem(A, state, tol_kkt=None):
    A = as_design_matrix(A)
    pt = state.p
    tags = np.full(A.n, ZERO, dtype=np.int8)
    tags[pt.equicorrelation] = NONNEG
    tags[state.x != 0] = FREE
    sol = solve_nnls(NnlsProblem(A, pt.signs, tags, -state.t * pt.p),
                     warm_start=state.active, tol_kkt=tol_kkt)
    return sol


def homotopy_subproblem(A, state, tol_kkt=None):
    """Direction ``v_hat`` and residual ``xi = A D v_hat + t p`` at an optimal state.

    ``v_j`` is free where ``x_j != 0``, nonnegative on the rest of the
    equicorrelation set and zero elsewhere.
    """
    sol = _subproblem(A, state, tol_kkt)
    return sol.u, sol.residual


def _xi_is_zero(xi, t, p, b_norm=0.0):
    # xi = A D v + t p; round-off follows the larger term, or ||b|| through p itself
    tp = t * np.asarray(p)
    scale = max(t, b_norm, float(np.linalg.norm(tp)), float(np.linalg.norm(xi - tp)))
    return float(np.linalg.norm(xi)) <= XI_ZERO_TOL * scale


def _departure_ratios(x, v):
    """``|x_j| / |v_j|`` for support coordinates driven to zero, ``inf`` elsewhere."""
    absx = np.abs(x)
    dep = (absx > 0) & (v <= -absx + DEPART_SLACK * np.maximum(1.0, absx))
    ratio = np.full(x.size, np.inf)
    ratio[dep] = absx[dep] / np.abs(v[dep])
    return ratio


def _vanish_at_zero(x, v, ratio):
    """Departing coordinates whose value at ``t = 0`` is round-off.

    The endpoint ``|x_j| + v_j`` is compared with the size of the whole
    solution, so small coordinates of a high-dynamic-range solution are not
    given spurious departures just above ``t = 0``.
    """
    dep = np.isfinite(ratio)
    absx = np.abs(x)
    end = absx + v
    scale = max(float(np.max(absx, initial=0.0)), float(np.max(np.abs(end), initial=0.0)))
    return dep & ((np.abs(ratio - 1.0) <= RATIO_SNAP) | (np.abs(end) <= RATIO_SNAP * scale))


def breakpoints(A, state, tol_dir=1e-12):
    """Candidate next breakpoints ``(T_minus, T_plus)``; also stores ``C`` on ``state``.

    ``T_plus = t / (1 + t C)`` where ``C`` is the first value of ``1/t - 1/t0``
    at which a correlation reaches a face (``T_plus = 0`` if it never does).
    ``T_minus`` is the largest ``t`` at which a support coordinate hits zero,
    ``-inf`` if none does.
    """
    A = as_design_matrix(A)
    t, x, v, xi = state.t, state.x, state.v_hat, state.xi
    if _xi_is_zero(xi, t, state.p.p, state.b_norm):
        C = math.inf
        state.xi = np.zeros_like(xi)
    else:
        C = max_descent_time(state.p, xi, A, tol_dir)
    T_plus = 0.0 if math.isinf(C) else t / (1.0 + t * C)
    ratio = _departure_ratios(x, v)
    live = np.where(_vanish_at_zero(x, v, ratio), np.inf, ratio)
    r = float(live.min()) if live.size else math.inf
    if not math.isinf(r):
        T_minus = t * (1.0 - r)
    elif np.isfinite(ratio).any():
        T_minus = 0.0
    else:
        T_minus = -math.inf
    state.C, state.T_plus, state.T_minus = C, T_plus, T_minus
    return T_minus, T_plus


def solution_path(A, b, opts=None, max_breakpoints=None):
    """Compute the full piecewise-linear solution path.

    Returns
    -------
    SolutionPath
        Starts at ``(||A^T b||_inf, 0, -b / ||A^T b||_inf)`` and ends at ``t = 0``.
        ``path.report`` is a :class:`SolverReport`.

    Raises
    ------
    PathStallError
        If a step fails to decrease ``t``.
    NonConvergenceError
        If more than ``max_breakpoints`` (default ``50 n``) breakpoints are needed.
    """
    start = time.perf_counter()
    opts = opts or SolverOptions()
    A = as_design_matrix(A)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if b.shape != (A.m,) or not b.any():
        raise InvalidArgumentError("b must be a nonzero vector of length m")
    if max_breakpoints is None:
        max_breakpoints = opts.max_outer if opts.max_outer is not None else 50 * A.n
    t = float(np.max(np.abs(A.rmatvec(b))))
    x = np.zeros(A.n)
    pt = make_dual_point(A, -b / t, opts.tol_eq)
    bps = [PathBreakpoint(t, x.copy(), pt.p.copy())]
    report = SolverReport()
    b_norm = float(np.linalg.norm(b))
    state = HomotopyState(t, x, pt, b_norm=b_norm)
    for k in range(max_breakpoints):
        sol = _subproblem(A, state, opts.tol_kkt)
        report.nnls_iterations += sol.iterations
        state.v_hat, state.xi, state.active = sol.u, sol.residual, sol.active_set
        T_minus, T_plus = breakpoints(A, state, opts.tol_dir)
        t1 = max(T_minus, T_plus, 0.0)
        if t1 >= t * (1.0 - STALL_TOL):
            raise PathStallError(
                f"breakpoint {k}: t did not decrease (t={t!r}, T+={T_plus!r}, T-={T_minus!r}); "
                f"subproblem active set {sol.active_set.tolist()}")
        step = pt.signs * state.v_hat
        x_new = state.x + (1.0 - t1 / t) * step
        if T_minus >= T_plus:
            ratio = _departure_ratios(state.x, state.v_hat)
            vanish = _vanish_at_zero(state.x, state.v_hat, ratio)
            if t1 > 0:
                live = np.where(vanish, np.inf, ratio)
                x_new[live <= live.min() * (1.0 + 1e-12)] = 0.0
            else:
                x_new[vanish] = 0.0
        if t1 == 0.0:
            p_new = pt.p.copy()
        else:
            p_new = pt.p + (1.0 / t1 - 1.0 / t) * state.xi
        report.iterations = k + 1
        report.final_descent_norm = float(np.linalg.norm(state.xi))
        bps.append(PathBreakpoint(t1, x_new, p_new))
        if t1 == 0.0:
            report.wall_time = time.perf_counter() - start
            return SolutionPath(bps, b, {}, report)
        pt = make_dual_point(A, p_new, opts.tol_eq)
        state = HomotopyState(t1, x_new, pt, active=sol.active_set, b_norm=b_norm)
        t = t1
    raise NonConvergenceError(f"path needs more than {max_breakpoints} breakpoints",
                              best=SolutionPath(bps, b, {}, report), report=report)


def path_query(path, t):
    """Primal/dual pair on the path at hyperparameter ``t``.

    ``x`` is interpolated linearly in ``t`` and ``p`` linearly in ``1/t``.
    Above the first breakpoint the answer is ``(0, -b/t)``.
    """
    t = float(t)
    if t < 0:
        raise InvalidArgumentError("t must be nonnegative")
    bps = path.breakpoints
    if t >= bps[0].t:
        if t == bps[0].t:
            return PrimalDualPair(bps[0].x.copy(), bps[0].p.copy(), t)
        return PrimalDualPair(np.zeros_like(bps[0].x), -path.b / t, t)
    ts = path.ts
    # ts is decreasing; find k with ts[k] > t >= ts[k+1]
    k = int(np.searchsorted(-ts, -t, side="right")) - 1
    k = min(k, len(bps) - 1)
    if ts[k] == t or k == len(bps) - 1:
        return PrimalDualPair(bps[k].x.copy(), bps[k].p.copy(), t)
    a, c = bps[k], bps[k + 1]
    if t == c.t:
        return PrimalDualPair(c.x.copy(), c.p.copy(), t)
    lam = (a.t - t) / (a.t - c.t)
    x = a.x + lam * (c.x - a.x)
    if c.t == 0.0:
        p = a.p.copy()
    else:
        mu = (a.t - t) * c.t / (t * (a.t - c.t))
        p = a.p + mu * (c.p - a.p)
    return PrimalDualPair(x, p, t)
