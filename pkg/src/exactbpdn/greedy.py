"""Greedy continuation to a feasible basis pursuit pair in at most ``rank(A)`` steps.

The homotopy in ``t`` is run on perturbed data.  The perturbation is chosen
so that no index ever leaves the equicorrelation set and every new index
brings a column independent of those already selected.  The selected set
``M`` therefore grows by one or more each step until it spans the range of
``A``.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .errors import InfeasibleError, InternalConsistencyError, InvalidArgumentError
from .linalg import GRAM_SOLVE_METHOD, as_design_matrix, gram_solve, max_independent_subset
from .nnls import NONNEG, ZERO, NnlsProblem, shift_lower_bounds, solve_nnls
from .results import SolverReport
from .slow import SolverOptions, make_dual_point

XI_ZERO_TOL = 1e-11


@dataclass(frozen=True)
class FeasiblePair:
    """``A x_f = b`` and ``||A^T p_f||_inf <= 1``, reached in ``iterations`` steps."""

    x_f: np.ndarray
    p_f: np.ndarray
    iterations: int


@dataclass
class GreedyState:
    t: float
    b_current: np.ndarray
    x: np.ndarray
    p: object
    M: np.ndarray
    w_total: np.ndarray


def v_lsq(A, pt, M, t):
    """Unconstrained least-squares direction on ``M``.

    ``v_M = t (D_M A_M^T A_M D_M)^{-1} 1``, zero off ``M``.
    """
    A = as_design_matrix(A)
    M = np.asarray(M, dtype=np.intp)
    v = np.zeros(A.n)
    if M.size:
        B = A.dense_columns(M) * pt.signs[M]
        v[M] = t * gram_solve(B, np.ones(M.size))
    return v


def _lsq_step(A, pt, M, t):
    """Least-squares coefficients and residual of ``min ||A_M D_M v + t p||``.

    On the faces ``D_M A_M^T p = -1`` this ``v`` equals :func:`v_lsq`; the QR
    form keeps ``xi`` orthogonal to ``A_M`` even when ``p`` is off the faces by
    round-off, which stops those errors from compounding across iterations.
    """
    v = np.zeros(A.n)
    if M.size == 0:
        return v, t * pt.p.copy()
    B = A.dense_columns(M) * pt.signs[M]
    Q, R = np.linalg.qr(B, mode="complete")
    k = M.size
    if np.min(np.abs(np.diag(R[:k, :k]))) <= 1e-10 * np.linalg.norm(B):
        raise InternalConsistencyError("selected columns are numerically dependent")
    tp = t * pt.p
    v[M] = -solve_triangular(R[:k, :k], Q[:, :k].T @ tp)
    Qc = Q[:, k:]
    return v, Qc @ (Qc.T @ tp)


def w_min(pt, M, x, v_lsq_vec):
    """Least-norm correction keeping the selected coordinates sign consistent.

    On ``M``: ``w_j = max(0, -D_j x_j - v_j)``; elsewhere ``w_j = -D_j x_j``.
    """
    Dx = pt.signs * np.asarray(x, dtype=np.float64)
    w = -Dx
    M = np.asarray(M, dtype=np.intp)
    w[M] = np.maximum(0.0, -Dx[M] - v_lsq_vec[M])
    return w


def _first_face_hit(pt, xi, A, among, tol_dir=1e-12):
    """``min_j (sgn(s_j) + |c_j|) / s_j`` over ``among`` with ``s = D A^T xi``."""
    s = pt.signs[among] * A.rmatvec(xi)[among]
    tol = tol_dir * np.linalg.norm(xi) * A.column_norms()[among]
    use = np.abs(s) > tol
    if not use.any():
        return math.inf
    su = s[use]
    return float(((np.sign(su) + np.abs(pt.correlation[among][use])) / su).min())


def greedy_feasible(A, b, opts=None):
    """Feasible primal/dual basis pursuit pair by greedy continuation.

    Returns
    -------
    pair : FeasiblePair
    report : SolverReport
        ``report.extra`` records per-iteration ``t``, ``|M|`` and ``T_minus``.

    Raises
    ------
    InfeasibleError
        If ``b`` is not in the range of ``A``.
    InternalConsistencyError
        If more than ``m + 1`` iterations are needed.
    """
    start = time.perf_counter()
    opts = opts or SolverOptions()
    A = as_design_matrix(A)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if b.shape != (A.m,) or not b.any():
        raise InvalidArgumentError("b must be a nonzero vector of length m")
    t = float(np.max(np.abs(A.rmatvec(b))))
    b_norm = float(np.linalg.norm(b))
    state = GreedyState(t, b.copy(), np.zeros(A.n), make_dual_point(A, -b / t, opts.tol_eq),
                        np.zeros(0, dtype=np.intp), np.zeros(A.n))
    report = SolverReport(gram_method=GRAM_SOLVE_METHOD)
    history = {"t": [t], "M_size": [], "T_minus": [], "V": []}
    for k in range(1, A.m + 2):
        pt = state.p
        E = pt.equicorrelation
        M = max_independent_subset(A, E, seed=state.M)
        if not np.all(np.isin(state.M, M)):
            raise InternalConsistencyError("selected set lost an index")
        v_l, xi = _lsq_step(A, pt, M, t)
        w = w_min(pt, M, state.x, v_l)
        v_hat = v_l + w
        # p carries round-off relative to ||b|| (t p = A x - b cancels terms of that size)
        xi_scale = max(t * max(1.0, np.linalg.norm(pt.p)), b_norm)
        if M.size == A.m or np.linalg.norm(xi) <= XI_ZERO_TOL * xi_scale:
            xi = np.zeros(A.m)
        notE = np.setdiff1d(np.arange(A.n), E)
        C = _first_face_hit(pt, xi, A, notE, opts.tol_dir) if xi.any() and notE.size else math.inf
        t_new = 0.0 if math.isinf(C) else t / (1.0 + t * C)
        if not t_new < t:
            raise InternalConsistencyError(f"greedy step {k} did not decrease t")
        s = 1.0 - t_new / t
        Dw = pt.signs * w
        state.b_current = state.b_current + s * A.matvec(Dw)
        x_new = state.x + s * (pt.signs * v_hat)
        state.w_total = state.w_total + s * Dw
        history["M_size"].append(int(M.size))
        history["T_minus"].append(_t_minus(state.x, v_hat, t))
        history["V"].append(0.5 * t * float(pt.p @ pt.p) + float(pt.p @ state.b_current))
        history["t"].append(t_new)
        report.iterations = k
        report.final_descent_norm = float(np.linalg.norm(xi))
        if t_new == 0.0:
            x_f = x_new - state.w_total
            p_f = pt.p.copy()
            resid = float(np.max(np.abs(A.matvec(x_f) - b)))
            report.extra.update(history)
            report.extra["residual"] = resid
            report.wall_time = time.perf_counter() - start
            if resid > 1e-9 * (1.0 + float(np.max(np.abs(b)))):
                raise InfeasibleError(
                    f"b is not in the range of A (residual {resid:.3e} after {k} steps)")
            return FeasiblePair(x_f, p_f, k), report
        p_new = pt.p + (1.0 / t_new - 1.0 / t) * xi
        state = GreedyState(t_new, state.b_current, x_new, make_dual_point(A, p_new, opts.tol_eq),
                            M, state.w_total)
        t = t_new
    raise InternalConsistencyError(f"greedy continuation exceeded {A.m + 1} iterations")


def _t_minus(x, v, t):
    absx = np.abs(x)
    dep = (absx > 0) & (v <= -absx)
    if not dep.any():
        return -math.inf
    return t * (1.0 - float(np.min(absx[dep] / np.abs(v[dep]))))


def perturbed_direction(A, pt, t0, t, b, q, u_hat_prev):
    """Descent direction after moving ``t0 -> t`` and ``b -> b - (t0 - t) q``.

    Requires the direction at ``(pt, t0, b)`` to vanish, with ``u_hat_prev``
    (an NNLS solution or vector) its minimiser.  The result equals
    ``(1 - t/t0) (A D v + t0 (p + q))`` with ``v`` solving the NNLS problem
    with lower bounds ``-u_hat_prev / (1 - t/t0)`` on the equicorrelation set.
    """
    A = as_design_matrix(A)
    if not 0 <= t <= t0:
        raise InvalidArgumentError("need 0 <= t <= t0")
    if t == t0:
        return np.zeros(A.m)
    u_prev = getattr(u_hat_prev, "u", u_hat_prev)
    u_prev = np.asarray(u_prev, dtype=np.float64)
    scale = 1.0 - t / t0
    tags = np.full(A.n, ZERO, dtype=np.int8)
    tags[pt.equicorrelation] = NONNEG
    target = -t0 * (pt.p + np.asarray(q, dtype=np.float64))
    prob, lower = shift_lower_bounds(NnlsProblem(A, pt.signs, tags, target), -u_prev / scale)
    sol = solve_nnls(prob)
    # residual of the shifted problem is the residual of the original one
    return scale * sol.residual
