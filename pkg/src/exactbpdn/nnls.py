"""Active-set nonnegative least squares with warm starts.

Solves

    min_u || A diag(signs) u - target ||^2

with ``u_j >= 0`` (NONNEG), ``u_j = 0`` (ZERO) or ``u_j`` unconstrained (FREE)
per coordinate.  The iteration is Lawson-Hanson, generalised to start from an
arbitrary passive set; the passive columns are kept in an updated QR
factorisation so each add/drop costs O(m^2).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np
from scipy.linalg import qr_delete, qr_insert, solve_triangular

from .errors import InvalidArgumentError, NonConvergenceError
from .linalg import as_design_matrix


class Tag(IntEnum):
    NONNEG = 0
    ZERO = 1
    FREE = 2


NONNEG, ZERO, FREE = Tag.NONNEG, Tag.ZERO, Tag.FREE


@dataclass(frozen=True)
class NnlsProblem:
    A: object
    signs: np.ndarray
    tags: np.ndarray
    target: np.ndarray

    def __post_init__(self):
        A = as_design_matrix(self.A)
        object.__setattr__(self, "A", A)
        signs = np.asarray(self.signs, dtype=np.float64).reshape(-1)
        tags = np.asarray(self.tags, dtype=np.int8).reshape(-1)
        target = np.asarray(self.target, dtype=np.float64).reshape(-1)
        if signs.shape != (A.n,) or tags.shape != (A.n,):
            raise InvalidArgumentError("signs and tags must have length n")
        if target.shape != (A.m,):
            raise InvalidArgumentError("target must have length m")
        if not np.all(np.abs(signs) == 1.0):
            raise InvalidArgumentError("signs must be +1 or -1")
        if np.any((tags < 0) | (tags > 2)):
            raise InvalidArgumentError("unknown tag")
        object.__setattr__(self, "signs", signs)
        object.__setattr__(self, "tags", tags)
        object.__setattr__(self, "target", target)


@dataclass(frozen=True)
class NnlsSolution:
    u: np.ndarray
    residual: np.ndarray
    active_set: np.ndarray
    iterations: int


class _ColumnQR:
    """Full QR of a growing/shrinking set of columns of ``B``."""

    def __init__(self, B, tol):
        self.B = B
        self.m = B.shape[0]
        self.Q = np.eye(self.m)
        self.R = np.zeros((self.m, 0))
        self.cols = []
        self.tol = tol

    def add(self, j):
        k = len(self.cols)
        if k == self.m:
            return False
        b = self.B[:, j]
        if np.linalg.norm(self.Q[:, k:].T @ b) <= self.tol[j]:
            return False
        self.Q, self.R = qr_insert(self.Q, self.R, b, k, which="col", check_finite=False)
        self.cols.append(j)
        return True

    def remove(self, pos):
        self.Q, self.R = qr_delete(self.Q, self.R, pos, 1, which="col", overwrite_qr=True,
                                   check_finite=False)
        del self.cols[pos]

    def projection_residual(self, target):
        # -(I - Q_P Q_P^T) target; its correlation with the passive columns is
        # round-off relative to the residual itself, not to the target
        Qp = self.Q[:, len(self.cols):]
        return -(Qp @ (Qp.T @ target))

    def solve(self, target):
        k = len(self.cols)
        if k == 0:
            return np.zeros(0)
        Rk = self.R[:k, :k]
        z = solve_triangular(Rk, self.Q[:, :k].T @ target, check_finite=False)
        # one step of iterative refinement
        r = target - self.B[:, self.cols] @ z
        z += solve_triangular(Rk, self.Q[:, :k].T @ r, check_finite=False)
        return z


def solve_nnls(prob, warm_start=None, tol_kkt=None, max_iter=None):
    """Solve the sign-tagged NNLS problem ``prob``.

    Parameters
    ----------
    prob : NnlsProblem
    warm_start : array_like of int, optional
        Initial passive set.  Indices tagged ZERO are ignored.
    tol_kkt : float, optional
        Dual-feasibility tolerance, scaled per column by its norm.  Defaults to
        ``1e-12 * ||target||``.
    max_iter : int, optional
        Cap on add/drop steps, default ``10 * n``.

    Returns
    -------
    NnlsSolution
        ``residual`` is ``A diag(signs) u - target``; it is unique even when
        ``u`` is not.
    """
    A = prob.A
    n = A.n
    target = prob.target
    if tol_kkt is None:
        tol_kkt = 1e-12 * np.linalg.norm(target)
    if max_iter is None:
        max_iter = 10 * n

    cand = np.flatnonzero(prob.tags != ZERO)
    u_full = np.zeros(n)
    if cand.size == 0:
        return NnlsSolution(u_full, -target.copy(), cand, 0)

    B = A.dense_columns(cand) * prob.signs[cand]
    colnorm = np.linalg.norm(B, axis=0)
    is_free = prob.tags[cand] == FREE
    tol_col = tol_kkt * np.maximum(colnorm, 1e-300)
    dep_tol = 1e-10 * np.maximum(colnorm, 1e-300)

    qr = _ColumnQR(B, dep_tol)
    local = {int(g): i for i, g in enumerate(cand)}
    start = list(np.flatnonzero(is_free))
    if warm_start is not None:
        start += [local[int(g)] for g in np.asarray(warm_start).reshape(-1)
                  if int(g) in local and not is_free[local[int(g)]]]
    for j in start:
        qr.add(j)

    u = np.zeros(cand.size)
    iterations = 0
    excluded = set()
    quick_drops = 0

    class _Cap(Exception):
        pass

    def make_feasible(z):
        # Lawson-Hanson inner loop: walk from u towards z, dropping blocking columns
        nonlocal iterations
        while True:
            P = np.array(qr.cols, dtype=np.intp)
            bad = np.flatnonzero((~is_free[P]) & (z <= 0))
            if bad.size == 0:
                u[:] = 0.0
                u[P] = z
                return
            iterations += 1
            if iterations > max_iter:
                raise _Cap()
            uP = u[P]
            ratios = uP[bad] / (uP[bad] - z[bad])
            k = int(np.argmin(ratios))
            u[P] = uP + ratios[k] * (z - uP)
            u[P[bad[k]]] = 0.0
            drop = np.flatnonzero((~is_free[P]) & (u[P] <= 0))
            for pos in drop[::-1]:
                u[P[pos]] = 0.0
                qr.remove(int(pos))
            z = qr.solve(target)

    try:
        make_feasible(qr.solve(target))
        while True:
            P = qr.cols
            w = -(B.T @ qr.projection_residual(target))
            elig = w > tol_col
            elig[is_free] = False
            elig[P] = False
            if excluded:
                elig[list(excluded)] = False
            if not elig.any():
                break
            iterations += 1
            if iterations > max_iter:
                raise _Cap()
            idx = np.flatnonzero(elig)
            j = int(idx[0]) if quick_drops >= 2 else int(idx[np.argmax(w[idx])])
            if not qr.add(j):
                excluded.add(j)
                continue
            z = qr.solve(target)
            if z[-1] <= 0:
                # column cannot enter with a positive weight (round-off); bar it this round
                qr.remove(len(qr.cols) - 1)
                excluded.add(j)
                quick_drops += 1
                continue
            excluded.clear()
            make_feasible(z)
    except _Cap:
        u_full[cand] = u
        res = B @ u - target
        best = NnlsSolution(u_full, res, cand[np.sort(np.array(qr.cols, dtype=np.intp))], iterations)
        raise NonConvergenceError(f"NNLS exceeded {max_iter} iterations", best=best) from None

    P = np.array(qr.cols, dtype=np.intp)
    if P.size:
        u[:] = 0.0
        u[P] = qr.solve(target)
        u[P[(~is_free[P]) & (u[P] < 0)]] = 0.0
    u_full[cand] = u
    residual = qr.projection_residual(target)
    return NnlsSolution(u_full, residual, np.sort(cand[P]), iterations)


def shift_lower_bounds(prob, lower):
    """Rewrite ``u_j >= lower_j`` (on NONNEG coordinates) as ``u'_j = u_j - lower_j >= 0``.

    Returns the shifted problem; map a solution back with ``u = u' + lower``.
    """
    lower = np.where(prob.tags == NONNEG, np.asarray(lower, dtype=np.float64), 0.0)
    shift = prob.A.matvec(prob.signs * lower)
    return NnlsProblem(prob.A, prob.signs, prob.tags, prob.target - shift), lower


def cone_projection_direction(A, p0, t, b, warm_start=None, tol_kkt=None):
    """Descent direction at the dual point ``p0`` via the cone-projection NNLS.

    ``p0`` is any object exposing ``p``, ``equicorrelation`` and ``signs``
    (see :class:`exactbpdn.slow.DualPoint`).

    Returns
    -------
    d : ndarray, shape (m,)
        ``A D u_hat - (b + t p0)``.
    u_hat : NnlsSolution
    """
    A = as_design_matrix(A)
    tags = np.full(A.n, ZERO, dtype=np.int8)
    tags[p0.equicorrelation] = NONNEG
    target = np.asarray(b, dtype=np.float64) + t * p0.p
    sol = solve_nnls(NnlsProblem(A, p0.signs, tags, target), warm_start=warm_start, tol_kkt=tol_kkt)
    return sol.residual, sol
