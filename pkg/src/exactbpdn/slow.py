"""Exact integration of the dual slow system.

The dual trajectory ``p(tau)`` is piecewise smooth: on each piece it moves
along a fixed direction ``d`` with speed ``f(tau, t) = (1 - exp(-t tau)) / t``
and the direction is recomputed by a cone projection (an NNLS solve) whenever
``p`` reaches a new face of ``{p : ||A^T p||_inf <= 1}``.  Stepping from face
to face reaches an exact primal/dual solution after finitely many steps.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import (DomainError, InfeasibleError, InternalConsistencyError, InvalidArgumentError,
                     NonConvergenceError)
from .linalg import GRAM_SOLVE_METHOD, as_design_matrix, sign_vector
from .nnls import cone_projection_direction
from .results import PrimalDualPair, SolverReport
from .verify import kkt_check


@dataclass(frozen=True)
class DualPoint:
    """Dual vector ``p`` with its correlation ``c = -A^T p``, equicorrelation set and signs."""

    p: np.ndarray
    correlation: np.ndarray
    equicorrelation: np.ndarray
    signs: np.ndarray
    tol_eq: float


def make_dual_point(A, p, tol_eq=1e-8):
    """Build a :class:`DualPoint`.

    Raises
    ------
    DomainError
        If ``||A^T p||_inf > 1 + tol_eq``.
    """
    A = as_design_matrix(A)
    p = np.array(p, dtype=np.float64).reshape(-1)
    if p.shape != (A.m,):
        raise InvalidArgumentError(f"p has length {p.size}, expected {A.m}")
    c = -A.rmatvec(p)
    absc = np.abs(c)
    worst = float(absc.max())
    if worst > 1.0 + tol_eq:
        raise DomainError(f"p is dual infeasible: ||A^T p||_inf = {worst!r}", violation=worst - 1.0)
    E = np.flatnonzero(absc >= 1.0 - tol_eq)
    p.flags.writeable = False
    return DualPoint(p, c, E, sign_vector(c), tol_eq)


def _zero_slope_tol(A, d, tol_dir):
    # relative to ||d||: an absolute floor discards real slopes once d is small
    return tol_dir * np.linalg.norm(d) * A.column_norms()


def max_descent_time(pt, d, A, tol_dir=1e-12):
    """Largest step ``Delta`` keeping ``p + Delta d`` dual feasible.

    Slopes ``s = D A^T d`` smaller than ``tol_dir * ||d|| * ||a_j||`` count
    as zero.  Nonpositive slopes on the equicorrelation set are round-off (the
    cone projection makes them nonnegative) and are skipped.

    Returns
    -------
    float
        A positive number or ``inf``.
    """
    A = as_design_matrix(A)
    s = pt.signs * A.rmatvec(d)
    absc = np.abs(pt.correlation)
    tol = _zero_slope_tol(A, d, tol_dir)
    inE = np.zeros(A.n, dtype=bool)
    inE[pt.equicorrelation] = True
    use = (np.abs(s) > tol) & ~(inE & (s <= 0))
    if not use.any():
        return math.inf
    su = s[use]
    # D A^T p = -|c|, so the numerator is sgn(s) + |c|
    ratios = (np.sign(su) + absc[use]) / su
    delta = float(ratios.min())
    if not delta > 0:
        raise InternalConsistencyError(f"maximal descent time {delta!r} is not positive")
    return delta


def evolve_f(tau, t):
    """``f(tau, t) = (1 - exp(-t tau)) / t``, with ``f(tau, 0) = tau``."""
    if tau < 0 or t < 0:
        raise InvalidArgumentError("tau and t must be nonnegative")
    if t == 0:
        return float(tau)
    if math.isinf(tau):
        return 1.0 / t
    return -math.expm1(-t * tau) / t


def descent_to_time(delta, t):
    """Time ``tau`` at which ``f(tau, t) = delta`` (``inf`` if ``t delta >= 1``)."""
    if t == 0:
        return float(delta)
    if t * delta >= 1.0:
        return math.inf
    return -math.log1p(-t * delta) / t


class StepKind(Enum):
    INTERIOR = "interior"
    CONVERGED_T_POSITIVE = "converged_t_positive"
    CONVERGED_T_ZERO = "converged_t_zero"
    DRIFT = "drift"


@dataclass(frozen=True)
class SlowStep:
    d: np.ndarray
    delta_star: float
    u_hat: object
    step_kind: StepKind


@dataclass
class SolverOptions:
    """Tolerances and caps for the exact solvers.

    ``tol_conv=None`` means ``1e-10 * (1 + ||b||_2)``; ``max_outer=None`` means ``50 n``.
    """

    tol_eq: float = 1e-8
    tol_conv: float | None = None
    tol_dir: float = 1e-12
    tol_kkt: float | None = None
    max_outer: int | None = None
    verify: bool = True


def slow_step(A, pt, t, b, warm_start=None, opts=None, tol_conv=None):
    """One direction computation and classification at ``pt``."""
    opts = opts or SolverOptions()
    A = as_design_matrix(A)
    d, sol = cone_projection_direction(A, pt, t, b, warm_start, tol_kkt=opts.tol_kkt)
    if tol_conv is None:
        tol_conv = opts.tol_conv if opts.tol_conv is not None else 1e-10 * (1.0 + np.linalg.norm(b))
    if t == 0 and np.linalg.norm(d) <= tol_conv:
        return SlowStep(d, math.inf, sol, StepKind.CONVERGED_T_ZERO)
    delta = max_descent_time(pt, d, A, opts.tol_dir)
    if math.isinf(delta) and t == 0:
        kind = StepKind.DRIFT
    elif t > 0 and t * delta >= 1.0:
        kind = StepKind.CONVERGED_T_POSITIVE
    else:
        kind = StepKind.INTERIOR
    return SlowStep(d, delta, sol, kind)


@dataclass(frozen=True)
class Trajectory:
    """Piecewise description of the dual trajectory.

    ``taus[k]``, ``points[k]`` and ``directions[k]`` describe node ``k``; on
    ``[taus[k], taus[k+1])`` the trajectory is ``p_k + f(tau - taus[k], t) d_k``.
    ``deltas[k]`` is the descent time used from node ``k`` (``inf`` for the
    final node).  When ``t > 0`` the last node sits at ``tau = inf``.
    """

    taus: list
    points: list
    directions: list
    deltas: list
    t: float
    converged_index: int | None = None


def eval_trajectory(traj, tau):
    """Dual point ``p(tau)`` on a computed trajectory."""
    if tau < 0:
        raise InvalidArgumentError("tau must be nonnegative")
    taus = traj.taus
    K = len(taus) - 1
    if tau >= taus[K]:
        return traj.points[K].p.copy()
    k = int(np.searchsorted(taus, tau, side="right")) - 1
    return traj.points[k].p + evolve_f(tau - taus[k], traj.t) * traj.directions[k]


def _check_b(A, b):
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if b.shape != (A.m,):
        raise InvalidArgumentError(f"b has length {b.size}, expected {A.m}")
    if not np.all(np.isfinite(b)):
        raise InvalidArgumentError("b has non-finite entries")
    if not b.any():
        raise InvalidArgumentError("b must be nonzero")
    return b


def solve_bpdn(A, b, t, p0=None, opts=None, warm_start=None):
    """Exact BPDN (``t > 0``) or BP (``t = 0``) solution by face-to-face stepping.

    Parameters
    ----------
    A : DesignMatrix or array_like
    b : array_like, shape (m,)
        Nonzero data vector; for ``t = 0`` it must lie in the range of ``A``.
    t : float
        Hyperparameter, ``t >= 0``.
    p0 : array_like, optional
        Dual feasible starting point, default ``-b / ||A^T b||_inf``.
    opts : SolverOptions, optional
    warm_start : array_like of int, optional
        Initial NNLS passive set.

    Returns
    -------
    pair : PrimalDualPair
    trajectory : Trajectory
    report : SolverReport

    Raises
    ------
    InfeasibleError
        At ``t = 0`` when the trajectory drifts off (``b`` outside the range of ``A``).
    NonConvergenceError
        When ``opts.max_outer`` steps do not suffice.
    """
    start = time.perf_counter()
    opts = opts or SolverOptions()
    A = as_design_matrix(A)
    b = _check_b(A, b)
    t = float(t)
    if not t >= 0 or math.isinf(t):
        raise InvalidArgumentError("t must be finite and nonnegative")
    tol_conv = opts.tol_conv if opts.tol_conv is not None else 1e-10 * (1.0 + np.linalg.norm(b))
    max_outer = opts.max_outer if opts.max_outer is not None else 50 * A.n
    t0 = float(np.max(np.abs(A.rmatvec(b))))
    report = SolverReport(gram_method=GRAM_SOLVE_METHOD)

    if p0 is None and t >= t0:
        # zero is optimal above the largest correlation
        x, p = np.zeros(A.n), -b / t
        pt = make_dual_point(A, p, opts.tol_eq)
        traj = Trajectory([0.0], [pt], [np.zeros(A.m)], [math.inf], t, 0)
        report.final_descent_norm = 0.0
        return _finish(A, b, t, x, p, traj, report, opts, start)

    pt = make_dual_point(A, -b / t0 if p0 is None else p0, opts.tol_eq)
    taus, points, directions, deltas = [0.0], [pt], [], []
    active = warm_start
    for k in range(max_outer):
        step = slow_step(A, pt, t, b, active, opts, tol_conv)
        report.nnls_iterations += step.u_hat.iterations
        report.iterations = k + 1
        report.final_descent_norm = float(np.linalg.norm(step.d))
        active = step.u_hat.active_set
        directions.append(step.d)
        deltas.append(step.delta_star)
        kind = step.step_kind
        if kind is StepKind.DRIFT:
            raise InfeasibleError(
                "descent direction is orthogonal to every column while nonzero: "
                "b is not in the range of A")
        if kind in (StepKind.CONVERGED_T_POSITIVE, StepKind.CONVERGED_T_ZERO):
            x = pt.signs * step.u_hat.u
            if kind is StepKind.CONVERGED_T_POSITIVE:
                p = pt.p + step.d / t
                tau_end = math.inf
            else:
                p = pt.p.copy()
                tau_end = taus[-1]
            last = make_dual_point(A, p, max(opts.tol_eq, 1e-6))
            if kind is StepKind.CONVERGED_T_POSITIVE:
                taus.append(tau_end)
                points.append(last)
                directions.append(np.zeros(A.m))
                deltas.append(math.inf)
            traj = Trajectory(taus, points, directions, deltas, t, len(taus) - 1)
            report.extra["active_set"] = active
            return _finish(A, b, t, x, p, traj, report, opts, start)
        tau_next = taus[-1] + descent_to_time(step.delta_star, t)
        pt = make_dual_point(A, pt.p + step.delta_star * step.d, opts.tol_eq)
        taus.append(tau_next)
        points.append(pt)
    report.wall_time = time.perf_counter() - start
    raise NonConvergenceError(f"no convergence after {max_outer} steps", best=pt.p, report=report)


def _finish(A, b, t, x, p, traj, report, opts, start):
    if opts.verify:
        report.kkt = kkt_check(A, b, t, x, p)
    report.wall_time = time.perf_counter() - start
    return PrimalDualPair(x, p, t), traj, report


def regularization_path(A, b, ts, opts=None):
    """Solve at each hyperparameter of the decreasing sequence ``ts``, warm-starting each solve.

    Returns
    -------
    list of PrimalDualPair
        One pair per entry of ``ts``.  The reports are available as the
        ``reports`` attribute of the returned list.
    """
    A = as_design_matrix(A)
    ts = [float(v) for v in ts]
    if any(v < 0 for v in ts) or any(a <= c for a, c in zip(ts, ts[1:])):
        raise InvalidArgumentError("ts must be nonnegative and strictly decreasing")
    out = _PathList()
    p0, active = None, None
    for i, t in enumerate(ts):
        try:
            pair, _, rep = solve_bpdn(A, b, t, p0=p0, opts=opts, warm_start=active)
        except Exception as exc:
            exc.args = (f"solve at index {i} (t={t!r}) failed: {exc.args[0] if exc.args else exc}",)
            exc.index = i
            raise
        out.append(pair)
        out.reports.append(rep)
        p0 = pair.p
        active = rep.extra.get("active_set")
    return out


class _PathList(list):
    def __init__(self):
        super().__init__()
        self.reports = []
