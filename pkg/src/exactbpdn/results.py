"""Result containers shared by the solvers."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class PrimalDualPair:
    """Candidate primal/dual solution ``(x, p)`` at hyperparameter ``t``."""

    x: np.ndarray
    p: np.ndarray
    t: float


@dataclass
class SolverReport:
    """Diagnostics attached to a solve.

    Attributes
    ----------
    iterations : int
        Outer iterations performed.
    final_descent_norm : float
        ``||d||_2`` (or ``||xi||_2``) at the last iteration.
    kkt : KktReport or None
        Residuals of the returned pair, when verification was requested.
    wall_time : float
        Seconds spent in the solver.
    nnls_iterations : int
        Total active-set steps across all NNLS calls.
    gram_method : str
        Factorisation used for Gram systems.
    """

    iterations: int = 0
    final_descent_norm: float = float("nan")
    kkt: object = None
    wall_time: float = 0.0
    nnls_iterations: int = 0
    gram_method: str = "householder-qr"
    extra: dict = field(default_factory=dict)
