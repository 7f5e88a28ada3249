"""Method of steps with Picard iteration in a Mittag-Leffler weighted metric.

On the delay segment ``[k r, (k+1) r]`` the solution is the fixed point of

    (T xi)(t) = phi(0) + I^alpha[f(., x_known, x_known(. - r))] over [0, k r]
                       + I^alpha[f(., xi, x_known(. - r))]      over [k r, t]

which contracts with factor ``max L / beta`` in the distance
``sup |xi - xi'|(t) / E_alpha(beta t^alpha)`` once ``beta > 2 max L``.  Both
integrals use the product-trapezoid weights on the delay-aligned grid, so the
discrete operator inherits the same structure: the history part is fixed per
segment and only the live part changes between iterations.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, replace

import numpy as np

from .errors import BetaSelectionError, BlowUpError, CoincidenceError, NonConvergenceError, RhsEvaluationError
from .fracquad import pt_weights
from .mlf import ml_log_eval_many
from .model import (
    DelayProblem,
    Trajectory,
    UniformGrid,
    build_grid,
    estimate_lipschitz,
    history_values,
    row_norms,
    validate_problem,
)

__all__ = [
    "WeightedNorm",
    "SegmentReport",
    "choose_beta",
    "apply_operator",
    "solve_segment",
    "solve_picard",
    "extend_horizon",
    "coincidence_defect",
]


class WeightedNorm:
    """``sup_t |xi(t) - xi'(t)| / E_alpha(beta t^alpha)`` over the given nodes.

    Evaluated as ``max exp(ln|diff| - ln E_alpha(beta t^alpha))`` so that large
    weights never overflow.
    """

    def __init__(self, alpha: float, beta: float, times):
        if not beta > 0:
            raise ValueError(f"beta must be positive, got {beta}")
        self.alpha = alpha
        self.beta = beta
        self.times = np.asarray(times, dtype=float)
        if np.any(self.times < 0):
            raise ValueError("weighted norm is defined for t >= 0")
        self.log_weights = ml_log_eval_many(alpha, beta * self.times**alpha)

    @property
    def segment(self) -> tuple[float, float]:
        return float(self.times[0]), float(self.times[-1])

    def norm(self, xi) -> float:
        a = np.asarray(xi, dtype=float).reshape(self.times.size, -1)
        with np.errstate(over="ignore", divide="ignore"):
            mag = row_norms(a)
            return float(np.max(np.exp(np.log(mag) - self.log_weights)))

    def distance(self, xi, xi_hat) -> float:
        return self.norm(np.asarray(xi, dtype=float) - np.asarray(xi_hat, dtype=float))


@dataclass
class SegmentReport:
    k: int
    beta_k: float
    max_L: float
    iterations: int
    final_distance: float
    contraction_estimate: float
    initial_distance: float
    max_L_estimated: bool = False
    # first iteration with weighted distance <= tol; the rest is the sup-norm guard
    weighted_iterations: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def choose_beta(max_L: float, margin: float = 0.25) -> float:
    """A weight rate strictly above ``2 max_L``: ``2 max_L (1 + margin)``."""
    if not margin > 0:
        raise ValueError("margin must be positive")
    if not max_L >= 0:
        raise ValueError(f"max_L must be >= 0, got {max_L}")
    if max_L == 0:
        return float(margin)
    return 2.0 * max_L * (1.0 + margin)


def _eval_rhs(p: DelayProblem, grid: UniformGrid, j_first: int, t, X, Y) -> np.ndarray:
    try:
        F = p.rhs_many(t, X, Y)
    except (ArithmeticError, ValueError) as exc:
        raise RhsEvaluationError(j_first, float(t[0]), f"in nodes {j_first}..: {exc}") from exc
    bad = ~np.all(np.isfinite(F), axis=1)
    if bad.any():
        i = int(np.argmax(bad))
        raise BlowUpError(j_first + i, float(t[i]), "non-finite rhs value")
    return F


class _SegmentOperator:
    """Discrete ``T_{(k+1)r}`` on the nodes ``j0..j1`` of segment ``k``.

    ``values`` holds the trajectory rows ``-m..n_total``; rows up to ``j0`` must
    be known.  The history integral is assembled once at construction.
    """

    def __init__(self, p: DelayProblem, grid: UniformGrid, values: np.ndarray, k: int):
        segs = grid.segments()
        if not 0 <= k < len(segs):
            raise IndexError(f"segment {k} outside 0..{len(segs) - 1}")
        _, j0, j1 = segs[k]
        m = grid.m
        self.p, self.grid, self.k, self.j0, self.j1 = p, grid, k, j0, j1
        times = grid.times()
        self.t_seg = times[m + j0 : m + j1 + 1]
        weights = pt_weights(p.alpha, grid.h, grid.n_total)
        self.lags = weights.lags
        self.phi0 = values[m]
        # delayed argument of every segment node is a known node (j - m <= j0)
        self.delayed = values[j0 : j1 + 1].copy()
        F_known = _eval_rhs(p, grid, 0, times[m : m + j0 + 1], values[m : m + j0 + 1], values[: j0 + 1])
        L = j1 - j0
        hist = np.zeros((L + 1, p.dim))
        rows = np.arange(j0, j1 + 1)
        hist[rows > 0] = np.outer(weights.first[rows[rows > 0]], F_known[0])
        if j0 >= 1:
            for c in range(p.dim):
                conv = np.convolve(F_known[1:, c], self.lags[:j1])
                hist[:, c] += conv[rows - 1]
        self.hist = hist

    def __call__(self, candidate) -> np.ndarray:
        cand = np.asarray(candidate, dtype=float).reshape(self.j1 - self.j0 + 1, self.p.dim)
        L = self.j1 - self.j0
        F = _eval_rhs(self.p, self.grid, self.j0 + 1, self.t_seg[1:], cand[1:], self.delayed[1:])
        image = self.phi0 + self.hist.copy()
        for c in range(self.p.dim):
            image[1:, c] += np.convolve(F[:, c], self.lags[:L])[:L]
        return image


def _segment_max_L(p: DelayProblem, op: _SegmentOperator, values: np.ndarray) -> tuple[float, bool]:
    L = p.lipschitz
    if isinstance(L, str):
        known = values[: op.grid.m + op.j0 + 1]
        centre = 0.5 * (known.max(axis=0) + known.min(axis=0))
        radius = np.maximum(0.5 * (known.max(axis=0) - known.min(axis=0)), 1.0)
        ys = op.delayed[:: max(1, len(op.delayed) // 20)]
        warnings.warn(
            f"segment {op.k}: using a sampled Lipschitz estimate, not a certified bound",
            stacklevel=3,
        )
        est = estimate_lipschitz(
            p, (centre - 2 * radius, centre + 2 * radius), (op.t_seg[0], op.t_seg[-1]), ys
        )
        return est, True
    if callable(L):
        return max(p.lipschitz_at(float(t), y) for t, y in zip(op.t_seg, op.delayed)), False
    return float(L), False


def _known_values(known: Trajectory, k: int) -> np.ndarray:
    return np.array(known.values, dtype=float)


def apply_operator(p: DelayProblem, known: Trajectory, k: int, candidate) -> np.ndarray:
    """Image of ``candidate`` (values on the nodes of segment ``k``) under the operator.

    ``known`` must hold the solution on ``[-r, k r]``; its later rows are ignored.
    """
    op = _SegmentOperator(p, known.grid, _known_values(known, k), k)
    return op(candidate)


def _iterate(p, op, values, tol, max_iter, margin, init):
    max_L, estimated = _segment_max_L(p, op, values)
    if not math.isfinite(max_L):
        raise BetaSelectionError(f"segment {op.k}: max L is not finite ({max_L})")
    beta = choose_beta(max_L, margin)
    norm = WeightedNorm(p.alpha, beta, op.t_seg)
    start = values[op.grid.m + op.j0]
    if init == "constant":
        cand = np.tile(start, (op.j1 - op.j0 + 1, 1))
    elif init == "zero":
        cand = np.zeros((op.j1 - op.j0 + 1, p.dim))
        cand[0] = start
    else:
        raise ValueError(f"unknown initial iterate {init!r}")

    dists: list[float] = []
    ratios: list[float] = []
    weighted_it = 0
    for it in range(1, max_iter + 1):
        new = op(cand)
        d = norm.distance(new, cand)
        change = float(np.max(np.abs(new - cand)))
        scale = max(1.0, float(np.max(np.abs(new))))
        # ratios below the round-off floor carry no information
        floor = max(tol, 64 * np.finfo(float).eps * norm.norm(new))
        if dists and dists[-1] > floor:
            ratios.append(d / dists[-1])
        dists.append(d)
        cand = new
        if d <= tol and not weighted_it:
            weighted_it = it
        if d <= tol and change <= tol * scale:
            report = SegmentReport(
                k=op.k,
                beta_k=beta,
                max_L=max_L,
                iterations=it,
                final_distance=d,
                contraction_estimate=max(ratios, default=0.0),
                initial_distance=dists[0],
                max_L_estimated=estimated,
                weighted_iterations=weighted_it,
            )
            return cand, report
    raise NonConvergenceError(op.k, max_iter, dists[-1])


def solve_segment(
    p: DelayProblem,
    known: Trajectory,
    k: int,
    tol: float = 1e-10,
    max_iter: int = 200,
    margin: float = 0.25,
    init: str = "constant",
) -> tuple[np.ndarray, SegmentReport]:
    """Fixed point of the segment-``k`` operator by successive approximation.

    Stops once the weighted distance between successive iterates is at most
    ``tol`` and their largest nodal change is at most ``tol * max(1, |x|)``.
    """
    values = _known_values(known, k)
    op = _SegmentOperator(p, known.grid, values, k)
    return _iterate(p, op, values, tol, max_iter, margin, init)


def solve_picard(
    p: DelayProblem,
    m: int,
    tol: float = 1e-10,
    max_iter: int = 200,
    margin: float = 0.25,
    init: str = "constant",
) -> tuple[Trajectory, list[SegmentReport]]:
    """Solve on ``[-r, T_grid]`` segment by segment; returns trajectory and reports."""
    validate_problem(p)
    grid = build_grid(p.r, p.T, m)
    values = np.full((grid.size, p.dim), np.nan)
    values[: grid.m + 1] = history_values(p, grid)
    reports = []
    for k, j0, j1 in grid.segments():
        op = _SegmentOperator(p, grid, values, k)
        seg, report = _iterate(p, op, values, tol, max_iter, margin, init)
        values[grid.m + j0 + 1 : grid.m + j1 + 1] = seg[1:]
        reports.append(report)
    return Trajectory(grid, values), reports


def coincidence_defect(short: Trajectory, long: Trajectory) -> float:
    """Sup-norm difference of two trajectories on the shorter one's nodes."""
    if short.grid.m != long.grid.m or short.grid.r != long.grid.r:
        raise ValueError("trajectories live on different grids")
    n = short.grid.size
    if long.grid.size < n:
        raise ValueError("second trajectory is shorter than the first")
    return float(np.max(np.abs(long.values[:n] - short.values)))


def extend_horizon(
    p: DelayProblem,
    traj: Trajectory,
    T_new: float,
    tol: float = 1e-10,
    max_iter: int = 200,
    margin: float = 0.25,
) -> Trajectory:
    """Re-solve on ``[-r, T_new]`` and check it coincides with ``traj`` on ``[-r, T]``.

    The allowed defect is ``10 tol`` relative to ``max(1, sup |traj|)``.
    """
    if not T_new > p.T:
        raise ValueError(f"new horizon {T_new} must exceed {p.T}")
    longer, _ = solve_picard(replace(p, T=T_new), traj.grid.m, tol, max_iter, margin)
    defect = coincidence_defect(traj, longer)
    scale = max(1.0, float(np.max(np.abs(traj.values))))
    if defect > 10 * tol * scale:
        raise CoincidenceError(
            f"restriction to [-r, {p.T}] differs by {defect:.3e} (> {10 * tol * scale:.3e})"
        )
    return longer
