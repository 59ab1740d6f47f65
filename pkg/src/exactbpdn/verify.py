"""Independent checks: KKT residuals, a support-enumeration oracle and a FISTA baseline.

Nothing here calls the exact solvers, so these routines can be used to test them.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import InfeasibleError, InvalidArgumentError
from .linalg import as_design_matrix

ORACLE_MAX_N = 12


def primal_objective(A, b, t, x):
    """``||x||_1 + ||Ax - b||^2 / (2t)``; for ``t = 0`` just ``||x||_1``."""
    A = as_design_matrix(A)
    x = np.asarray(x, dtype=np.float64)
    if t == 0:
        return float(np.abs(x).sum())
    r = A.matvec(x) - b
    return float(np.abs(x).sum() + r @ r / (2.0 * t))


def dual_objective(b, t, p):
    """``V(p) = (t/2) ||p||^2 + <p, b>`` (to be minimised over ``||A^T p||_inf <= 1``)."""
    p = np.asarray(p, dtype=np.float64)
    return float(0.5 * t * (p @ p) + p @ b)


@dataclass(frozen=True)
class KktReport:
    """Optimality residuals of a candidate pair.

    Attributes
    ----------
    stationarity : float
        ``||Ax - b - t p||_inf`` (``||Ax - b||_inf`` when ``t = 0``).
    dual_feasibility : float
        ``max(0, ||A^T p||_inf - 1)``.
    sign_consistency : float
        Largest ``|(-A^T p)_j - sgn(x_j)|`` over the support of ``x``.
    gap : float
        Primal objective plus ``V(p)``; nonnegative for dual-feasible ``p``.
    primal : float
        Primal objective at ``x``.
    bp_residual : float or None
        ``||Ax - b||_inf``, reported for ``t = 0`` only.
    """

    stationarity: float
    dual_feasibility: float
    sign_consistency: float
    gap: float
    primal: float
    bp_residual: float | None

    @property
    def relative_gap(self):
        return abs(self.gap) / (1.0 + abs(self.primal))

    def passes(self, b, tol=1e-9, tol_dual=1e-12):
        scale = 1.0 + float(np.max(np.abs(b)))
        return (self.stationarity <= tol * scale
                and self.sign_consistency <= tol * scale
                and self.dual_feasibility <= tol_dual
                and self.relative_gap <= tol)

    def to_dict(self):
        return {
            "stationarity": self.stationarity,
            "dual_feasibility": self.dual_feasibility,
            "sign_consistency": self.sign_consistency,
            "gap": self.gap,
            "bp_residual": self.bp_residual,
        }

    def to_json(self):
        return json.dumps(self.to_dict())


def kkt_check(A, b, t, x, p):
    """Evaluate the optimality residuals of ``(x, p)``; never raises on bad input values."""
    A = as_design_matrix(A)
    b = np.asarray(b, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    if t < 0:
        raise InvalidArgumentError("t must be nonnegative")
    r = A.matvec(x) - b
    c = -A.rmatvec(p)
    supp = x != 0
    sign_cons = float(np.max(np.abs(c[supp] - np.sign(x[supp])))) if supp.any() else 0.0
    dual_feas = max(0.0, float(np.max(np.abs(c))) - 1.0)
    l1 = float(np.abs(x).sum())
    if t > 0:
        stat = float(np.max(np.abs(r - t * p)))
        primal = l1 + float(r @ r) / (2.0 * t)
        bp_res = None
    else:
        stat = float(np.max(np.abs(r)))
        primal = l1
        bp_res = stat
    gap = primal + dual_objective(b, t, p)
    return KktReport(stat, dual_feas, sign_cons, gap, primal, bp_res)


@dataclass(frozen=True)
class OracleSolution:
    x_opt: np.ndarray
    objective: float
    support: np.ndarray
    method: str = "SUPPORT_ENUM"


_SIGNS = {}


def _sign_patterns(k):
    if k not in _SIGNS:
        _SIGNS[k] = np.array(list(itertools.product((1.0, -1.0), repeat=k))).reshape(-1, k)
    return _SIGNS[k]


def brute_force_bpdn(A, b, t, max_support=None, independent_only=True):
    """Global minimiser by enumerating supports and sign patterns.

    Parameters
    ----------
    A, b, t
        Problem data; ``t = 0`` selects basis pursuit.
    max_support : int, optional
        Largest support size tried, default ``m``.
    independent_only : bool
        Skip supports whose columns are dependent.  With ``False`` a
        pseudo-inverse is used instead, which gives an unpruned cross-check.

    Raises
    ------
    InvalidArgumentError
        If ``n > 12``.
    InfeasibleError
        For ``t = 0`` when no support reproduces ``b``.
    """
    A = as_design_matrix(A)
    m, n = A.shape
    if n > ORACLE_MAX_N:
        raise InvalidArgumentError(f"oracle enumeration refused for n={n} > {ORACLE_MAX_N}")
    Ad = A.toarray()
    b = np.asarray(b, dtype=np.float64)
    kmax = m if max_support is None else min(max_support, n)
    feas_tol = 1e-9 * (1.0 + np.linalg.norm(b))

    best_obj = primal_objective(Ad, b, t, np.zeros(n)) if t > 0 else np.inf
    best_x = np.zeros(n) if t > 0 else None
    if t == 0 and not b.any():
        best_obj, best_x = 0.0, np.zeros(n)
    Atb = Ad.T @ b

    for k in range(1, kmax + 1):
        sig = _sign_patterns(k)
        for S in itertools.combinations(range(n), k):
            S = list(S)
            AS = Ad[:, S]
            sv = np.linalg.svd(AS, compute_uv=False)
            independent = sv[-1] > 1e-10 * sv[0] and k <= m
            if independent_only and not independent:
                continue
            G = AS.T @ AS
            if t > 0:
                Ginv = np.linalg.inv(G) if independent else np.linalg.pinv(G)
                X = (Atb[S][None, :] - t * sig) @ Ginv
                if not independent:
                    # keep only patterns whose normal equations are actually solved
                    ok = np.all(np.abs(X @ G - (Atb[S] - t * sig)) <= 1e-9 * (1 + np.abs(Atb[S])), axis=1)
                    X, s_ok = X[ok], sig[ok]
                else:
                    s_ok = sig
                cons = np.all(s_ok * X > 0, axis=1)
                if not cons.any():
                    continue
                X = X[cons]
                R = X @ AS.T - b[None, :]
                obj = np.abs(X).sum(axis=1) + np.einsum("ij,ij->i", R, R) / (2.0 * t)
                i = int(np.argmin(obj))
                if obj[i] < best_obj:
                    best_obj = float(obj[i])
                    best_x = np.zeros(n)
                    best_x[S] = X[i]
            else:
                xS = np.linalg.lstsq(AS, b, rcond=None)[0]
                if np.linalg.norm(AS @ xS - b) > feas_tol:
                    continue
                obj = float(np.abs(xS).sum())
                if obj < best_obj:
                    best_obj = obj
                    best_x = np.zeros(n)
                    best_x[S] = xS
    if best_x is None:
        raise InfeasibleError("b is not in the range of A")
    return OracleSolution(best_x, primal_objective(Ad, b, t, best_x), np.flatnonzero(best_x))


class FistaResult(NamedTuple):
    x: np.ndarray
    p: np.ndarray
    iterations: int
    converged: bool


def lipschitz_constant(A, rel_tol=1e-6, max_iter=10000, seed=0):
    """Largest eigenvalue of ``A^T A`` by power iteration."""
    A = as_design_matrix(A)
    v = np.random.default_rng(seed).standard_normal(A.n)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iter):
        w = A.rmatvec(A.matvec(v))
        lam_new = float(np.linalg.norm(w))
        if lam_new == 0.0:
            return 0.0
        v = w / lam_new
        if abs(lam_new - lam) <= rel_tol * lam_new:
            return lam_new
        lam = lam_new
    return lam


def soft_threshold(z, thresh):
    return np.sign(z) * np.maximum(np.abs(z) - thresh, 0.0)


def fista_baseline(A, b, t, rel_tol=1e-8, max_iter=100000, x0=None, L=None):
    """Accelerated proximal gradient for ``min ||x||_1 + ||Ax - b||^2 / (2t)``.

    Stops when the relative sup-norm change of the dual estimate
    ``p = (Ax - b) / t`` drops below ``rel_tol``.  ``x0`` warm-starts the
    iteration and ``L`` overrides the power-iteration estimate of
    ``||A||_2^2``.

    Returns
    -------
    FistaResult
        ``converged`` is False when ``max_iter`` was hit; ``x`` and ``p`` are
        then the last iterate.
    """
    if not t > 0:
        raise InvalidArgumentError("FISTA baseline needs t > 0")
    A = as_design_matrix(A)
    b = np.asarray(b, dtype=np.float64)
    if L is None:
        # small inflation covers the power-iteration error
        L = lipschitz_constant(A) * (1.0 + 1e-5)
    if L == 0.0:
        return FistaResult(np.zeros(A.n), -b / t, 0, True)
    x = np.zeros(A.n) if x0 is None else np.array(x0, dtype=np.float64)
    y = x.copy()
    theta = 1.0
    p_old = (A.matvec(x) - b) / t
    for it in range(1, max_iter + 1):
        x_new = soft_threshold(y - A.rmatvec(A.matvec(y) - b) / L, t / L)
        theta_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * theta * theta))
        y = x_new + ((theta - 1.0) / theta_new) * (x_new - x)
        x, theta = x_new, theta_new
        p = (A.matvec(x) - b) / t
        scale = max(float(np.max(np.abs(p))), np.finfo(float).tiny)
        if float(np.max(np.abs(p - p_old))) <= rel_tol * scale:
            return FistaResult(x, p, it, True)
        p_old = p
    return FistaResult(x, p_old, max_iter, False)


def feasible_rescale(A, p):
    """Scale ``p`` into the dual feasible set ``||A^T p||_inf <= 1``."""
    A = as_design_matrix(A)
    return p / max(1.0, float(np.max(np.abs(A.rmatvec(p)))))
