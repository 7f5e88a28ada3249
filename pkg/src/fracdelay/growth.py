"""Growth certificates ``|x(t)| <= C E_alpha(beta t^alpha)`` and exponential probes.

Everything runs in log space: ``E_alpha(beta t^alpha)`` and the ``exp(t^2)``
counterexample leave double range long before the horizons of interest.
Results over a finite horizon are evidence, not proof; verdicts say so.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np
from scipy.special import logsumexp

from .fracquad import pt_weights, rl_integral_grid
from .mlf import ml_log_eval_many
from .model import ConstantHistory, DelayProblem, Trajectory, UniformGrid, build_grid, row_norms

__all__ = [
    "BOUNDED",
    "INCONCLUSIVE",
    "UNBOUNDED",
    "LogTrajectory",
    "GrowthCertificate",
    "ProbeResult",
    "certify_growth",
    "check_h2",
    "counterexample_problem",
    "counterexample_solution",
    "counterexample_log_solution",
    "exponential_bound_probe",
]

BOUNDED = "bounded-evidence"
INCONCLUSIVE = "inconclusive"
UNBOUNDED = "unbounded-evidence"

TREND_BOUNDED = 1e-3
TREND_UNBOUNDED = 0.1
TAIL_FRACTION = 0.25


class LogTrajectory(NamedTuple):
    """``ln |x(t)|`` at nodes ``t >= 0``; the representation for overflowing solutions."""

    times: np.ndarray
    log_norm: np.ndarray


def _log_series(traj) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(traj, LogTrajectory):
        t, ln = np.asarray(traj.times, float), np.asarray(traj.log_norm, float)
    else:
        t, x = traj.solution()
        with np.errstate(divide="ignore"):
            ln = np.log(row_norms(x))
    if t.size == 0:
        raise ValueError("empty trajectory")
    if np.any(np.isnan(ln)) or np.any(ln == np.inf):
        raise ValueError("trajectory is not finite in log space")
    return t, ln


def _tail_trend(t: np.ndarray, s: np.ndarray, fraction: float = TAIL_FRACTION) -> float:
    """Least-squares slope of ``s`` against ``t`` over the final ``fraction`` of nodes."""
    n = max(2, int(math.ceil(fraction * t.size)))
    tt, ss = t[-n:], s[-n:]
    keep = np.isfinite(ss)
    if keep.sum() < 2:
        return 0.0
    slope, _ = np.polyfit(tt[keep], ss[keep], 1)
    return float(slope)


def _verdict(trend: float) -> str:
    if trend <= TREND_BOUNDED:
        return BOUNDED
    if trend >= TREND_UNBOUNDED:
        return UNBOUNDED
    return INCONCLUSIVE


@dataclass
class GrowthCertificate:
    alpha: float
    beta: float
    horizon: float
    C: float
    log_C: float
    ratio_tail_trend: float
    verdict: str
    h2_witness: float | None = None
    h2_pass: bool | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def certify_growth(traj, alpha: float, beta: float) -> GrowthCertificate:
    """Smallest ``C`` with ``|x_j| <= C E_alpha(beta t_j^alpha)`` at the nodes, plus tail trend."""
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta}")
    t, ln = _log_series(traj)
    log_ratio = ln - ml_log_eval_many(alpha, beta * t**alpha)
    log_C = float(np.max(log_ratio))
    trend = _tail_trend(t, log_ratio)
    return GrowthCertificate(
        alpha=alpha,
        beta=beta,
        horizon=float(t[-1]),
        C=math.exp(log_C) if log_C < 709.0 else math.inf,
        log_C=log_C,
        ratio_tail_trend=trend,
        verdict=_verdict(trend),
    )


@dataclass
class ProbeResult:
    lam: float
    log_C: float
    tail_trend: float
    verdict: str

    @property
    def C(self) -> float:
        return math.exp(self.log_C) if self.log_C < 709.0 else math.inf


def exponential_bound_probe(traj, lambdas: Iterable[float]) -> list[ProbeResult]:
    """For each rate ``lam``: ``sup_t (ln|x(t)| - lam t)`` and its tail trend."""
    lams = [float(v) for v in lambdas]
    if not lams:
        raise ValueError("need at least one rate")
    t, ln = _log_series(traj)
    out = []
    for lam in lams:
        s = ln - lam * t
        trend = _tail_trend(t, s)
        out.append(ProbeResult(lam, float(np.max(s)), trend, _verdict(trend)))
    return out


def check_h2(p: DelayProblem, beta: float, horizon: float, m: int) -> tuple[float, bool]:
    """Finite-horizon evidence for the forcing condition at rate ``beta``.

    Evaluates ``q(t) = int_0^t (t - s)^(alpha-1) |f(s,0,0)| ds / E_alpha(beta t^alpha)``
    on the grid nodes up to ``horizon``.  Returns ``(max q, passed)`` where
    ``passed`` means ``q`` is non-increasing (to 1e-3 in log terms) over the
    final quarter.
    """
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta}")
    L = p.lipschitz
    if isinstance(L, (int, float)) and not isinstance(L, bool) and beta <= 2 * L:
        warnings.warn(f"beta = {beta} does not exceed 2L = {2 * L}", stacklevel=2)
    grid = build_grid(p.r, horizon, m)
    t = grid.times()[grid.m :]
    zero = np.zeros((t.size, p.dim))
    g = row_norms(p.rhs_many(t, zero, zero))
    if not np.all(np.isfinite(g)):
        raise ArithmeticError("f(t, 0, 0) is not finite on the horizon")
    integral = rl_integral_grid(p.alpha, g, grid.h) * math.gamma(p.alpha)
    with np.errstate(divide="ignore"):
        log_q = np.log(np.maximum(integral, 0.0)) - ml_log_eval_many(p.alpha, beta * t**p.alpha)
    if not np.any(np.isfinite(log_q)):
        return 0.0, True
    witness = float(np.exp(np.max(log_q[np.isfinite(log_q)])))
    n = max(2, int(math.ceil(TAIL_FRACTION * t.size)))
    tail = log_q[-n:]
    tail = tail[np.isfinite(tail)]
    passed = bool(tail.size < 2 or np.all(np.diff(tail) <= 1e-3))
    return witness, passed


# -- counterexample: D^alpha x = exp(t^2) -----------------------------------


def counterexample_problem(alpha: float, x0: float, horizon: float, r: float = 1.0) -> DelayProblem:
    """``D^alpha x = exp(t^2)``, ``x = x0`` on ``[-r, 0]``; f is independent of x."""
    def rhs(t, x, y):
        with np.errstate(over="ignore"):
            return np.exp(np.square(t))[..., None] * np.ones_like(x)

    return DelayProblem(
        alpha=alpha, r=r, T=horizon, dim=1, history=ConstantHistory(x0),
        rhs=rhs, lipschitz=0.0, vectorized=True, name="exp(t^2) forcing",
    )


def _check_counterexample_args(alpha, x0):
    if not 0 < alpha < 1:
        raise ValueError(f"order must lie in (0,1), got {alpha}")
    if not x0 >= 0:
        raise ValueError(f"x0 must be >= 0, got {x0}")


def counterexample_solution(
    alpha: float, x0: float, horizon: float, m: int, r: float = 1.0
) -> Trajectory:
    """``x(t) = x0 + I^alpha[exp(tau^2)](t)`` at the grid nodes; no ODE solve.

    Raises :class:`OverflowError` naming the first node where the value leaves
    double range; :func:`counterexample_log_solution` has no such limit.
    """
    _check_counterexample_args(alpha, x0)
    if horizon == 0:
        grid = UniformGrid(r=float(r), m=int(m), n_total=0)
        return Trajectory(grid, np.full((grid.size, 1), float(x0)))
    grid = build_grid(r, horizon, m)
    t = grid.times()[grid.m :]
    with np.errstate(over="ignore"):
        g = np.exp(t**2)
        x = x0 + rl_integral_grid(alpha, g, grid.h)
    bad = ~np.isfinite(x) | (np.abs(x) > 1e300)
    if bad.any():
        j = int(np.argmax(bad))
        raise OverflowError(f"counterexample solution overflows at node {j} (t = {t[j]:.6g})")
    vals = np.concatenate([np.full(grid.m, float(x0)), x])[:, None]
    return Trajectory(grid, vals)


def counterexample_log_solution(
    alpha: float, x0: float, horizon: float, m: int, r: float = 1.0
) -> LogTrajectory:
    """``ln x(t)`` for the counterexample, via log-sum-exp of the same weights."""
    _check_counterexample_args(alpha, x0)
    grid = build_grid(r, horizon, m)
    t = grid.times()[grid.m :]
    N = t.size - 1
    w = pt_weights(alpha, grid.h, N)
    log_g = t**2
    out = np.empty(N + 1)
    lx0 = math.log(x0) if x0 > 0 else -math.inf
    out[0] = lx0
    for n in range(1, N + 1):
        log_w = np.log(w.row(n))
        out[n] = np.logaddexp(lx0, logsumexp(log_w + log_g[: n + 1]))
    return LogTrajectory(t, out)
