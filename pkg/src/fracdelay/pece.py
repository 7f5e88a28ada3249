"""Fractional Adams-Bashforth-Moulton (PECE) marching for delay problems.

Predictor: product-rectangle sum over the stored rhs samples.  Corrector:
product-trapezoid sum with the predicted endpoint, repeated ``corrector_sweeps``
times.  The delayed state at node ``j`` is the stored node ``j - m``, which is
strictly in the past, so the delay term is never implicit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BlowUpError, RhsEvaluationError
from .fracquad import pr_weights, pt_weights
from .model import DelayProblem, Trajectory, build_grid, history_values, validate_problem

__all__ = ["PeceConfig", "solve_pece", "BLOWUP_THRESHOLD"]

BLOWUP_THRESHOLD = 1e300


@dataclass(frozen=True)
class PeceConfig:
    corrector_sweeps: int = 1

    def __post_init__(self):
        if self.corrector_sweeps < 1:
            raise ValueError("corrector_sweeps must be >= 1")


def solve_pece(p: DelayProblem, m: int, cfg: PeceConfig | None = None) -> Trajectory:
    cfg = cfg or PeceConfig()
    validate_problem(p)
    grid = build_grid(p.r, p.T, m)
    N, h = grid.n_total, grid.h
    times = grid.times()[m:]
    corr = pt_weights(p.alpha, h, N)
    pred = pr_weights(p.alpha, h, N)
    a, c0 = corr.lags, corr.first
    b = pred.lags

    X = np.empty((grid.size, p.dim))
    X[: m + 1] = history_values(p, grid)
    phi0 = X[m].copy()
    F = np.empty((N + 1, p.dim))

    def rhs(j, x):
        try:
            v = p.rhs_at(times[j], x, X[j])  # row j holds node j - m
        except (ArithmeticError, ValueError) as exc:
            raise RhsEvaluationError(j, float(times[j]), str(exc)) from exc
        if not np.all(np.isfinite(v)):
            raise BlowUpError(j, float(times[j]), "non-finite rhs value")
        return v

    F[0] = rhs(0, phi0)
    for n in range(1, N + 1):
        # history sums over nodes 0..n-1
        pred_sum = b[n:0:-1] @ F[:n]
        corr_sum = c0[n] * F[0] + (a[n - 1 : 0 : -1] @ F[1:n] if n > 1 else 0.0)
        x = phi0 + pred_sum
        for _ in range(cfg.corrector_sweeps):
            x = phi0 + corr_sum + a[0] * rhs(n, x)
        if not np.all(np.isfinite(x)) or np.max(np.abs(x)) > BLOWUP_THRESHOLD:
            raise BlowUpError(n, float(times[n]), "state exceeds 1e300")
        X[m + n] = x
        F[n] = rhs(n, x)
    return Trajectory(grid, X)
