"""Product quadrature for the Riemann-Liouville integral on a uniform grid.

``I^alpha g (t_n) = 1/Gamma(alpha) int_0^{t_n} (t_n - tau)^(alpha-1) g(tau) dtau``
is approximated by ``sum_j w[n][j] g(t_j)``.  The kernel moments are exact; the
only approximation is the piecewise-linear (trapezoid) or piecewise-constant
(rectangle) interpolation of ``g``.

On a uniform grid every interior weight depends on ``n - j`` alone, so a
weight table is stored as one lag vector plus the boundary column ``j = 0``.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from scipy.interpolate import CubicSpline

__all__ = [
    "ConvolutionWeights",
    "pt_weights",
    "pr_weights",
    "rl_integral_grid",
    "caputo_residual",
]

# second differences of k^p lose about log10(k) digits when taken directly
_SERIES_FROM = 8
_SERIES_TERMS = 24


def _binomials(p: float, count: int) -> np.ndarray:
    c = np.empty(count)
    c[0] = 1.0
    for i in range(1, count):
        c[i] = c[i - 1] * (p - (i - 1)) / i
    return c


def _trap_lags(alpha: float, n: int) -> np.ndarray:
    """Raw trapezoid lag weights a_k, k = 0..n: a_0 = 1, a_k = Δ²(k^(alpha+1))."""
    p = alpha + 1.0
    k = np.arange(n + 1, dtype=float)
    out = np.empty(n + 1)
    out[0] = 1.0
    direct = (k >= 1) & (k < _SERIES_FROM)
    kd = k[direct]
    out[direct] = (kd + 1) ** p - 2 * kd**p + (kd - 1) ** p
    big = k >= _SERIES_FROM
    if big.any():
        kb = k[big]
        x2 = (1.0 / kb) ** 2
        c = _binomials(p, 2 * _SERIES_TERMS + 1)
        acc = np.zeros_like(kb)
        for i in range(_SERIES_TERMS, 0, -1):
            acc = (acc + c[2 * i]) * x2
        out[big] = 2.0 * kb**p * acc
    return out


def _trap_first(alpha: float, n: int) -> np.ndarray:
    """Raw trapezoid weights of node j = 0 for rows 0..n."""
    p = alpha + 1.0
    m = np.arange(n + 1, dtype=float)
    out = np.zeros(n + 1)
    direct = (m >= 1) & (m < _SERIES_FROM)
    md = m[direct]
    out[direct] = (md - 1) ** p - (md - 1 - alpha) * md**alpha
    big = m >= _SERIES_FROM
    if big.any():
        mb = m[big]
        x = -1.0 / mb
        c = _binomials(p, 2 * _SERIES_TERMS + 2)
        acc = np.zeros_like(mb)
        for i in range(2 * _SERIES_TERMS + 1, 1, -1):
            acc = (acc + c[i]) * x
        out[big] = mb**p * acc * x
    return out


def _rect_lags(alpha: float, n: int) -> np.ndarray:
    """Raw rectangle lag weights k^alpha - (k-1)^alpha, k = 0..n (k = 0 unused)."""
    out = np.zeros(n + 1)
    if n >= 1:
        out[1] = 1.0
    if n >= 2:
        k = np.arange(2, n + 1, dtype=float)
        out[2:] = -(k**alpha) * np.expm1(alpha * np.log1p(-1.0 / k))
    return out


class ConvolutionWeights:
    """Lower-triangular product-quadrature weights for ``I^alpha`` on ``t_j = j h``.

    ``rule="trapezoid"``: row ``n`` uses nodes ``0..n``.
    ``rule="rectangle"``: row ``n`` uses nodes ``0..n-1`` (left-point values).
    """

    def __init__(self, alpha: float, h: float, n: int, rule: str = "trapezoid"):
        if not 0.0 < alpha < 1.0:
            raise ValueError(f"order must lie in (0,1), got {alpha}")
        if not h > 0.0:
            raise ValueError(f"step must be positive, got {h}")
        if n < 1:
            raise ValueError(f"need at least one step, got n={n}")
        self.alpha = float(alpha)
        self.h = float(h)
        self.n = int(n)
        self.rule = rule
        if rule == "trapezoid":
            self.scale = h**alpha / math.gamma(alpha + 2.0)
            self.lags = _trap_lags(alpha, n) * self.scale
            self.first = _trap_first(alpha, n) * self.scale
        elif rule == "rectangle":
            self.scale = h**alpha / math.gamma(alpha + 1.0)
            self.lags = _rect_lags(alpha, n) * self.scale
            self.first = self.lags.copy()
            self.first[0] = 0.0
        else:
            raise ValueError(f"unknown rule {rule!r}")
        self.lags.setflags(write=False)
        self.first.setflags(write=False)

    def row(self, n: int) -> np.ndarray:
        """Weights w[n][0..n]."""
        if not 0 <= n <= self.n:
            raise IndexError(n)
        w = np.zeros(n + 1)
        if n == 0:
            return w
        if self.rule == "trapezoid":
            w[1:] = self.lags[n - 1 :: -1][:n]
            w[0] = self.first[n]
        else:
            w[:n] = self.lags[n:0:-1]
        return w

    def table(self) -> np.ndarray:
        """Full ``(n+1, n+1)`` lower-triangular table (O(n^2) memory)."""
        t = np.zeros((self.n + 1, self.n + 1))
        for i in range(1, self.n + 1):
            t[i, : i + 1] = self.row(i)
        return t

    def apply(self, samples) -> np.ndarray:
        """All rows applied to ``samples`` of shape (n+1,) or (n+1, d)."""
        g = np.asarray(samples, dtype=float)
        squeeze = g.ndim == 1
        if squeeze:
            g = g[:, None]
        if g.shape[0] - 1 > self.n:
            raise ValueError(
                f"{g.shape[0]} samples but weights only cover {self.n} steps"
            )
        N = g.shape[0] - 1
        out = np.zeros(g.shape)
        if N >= 1:
            for c in range(g.shape[1]):
                if self.rule == "trapezoid":
                    conv = np.convolve(g[1:, c], self.lags[:N])[:N]
                    out[1:, c] = self.first[1 : N + 1] * g[0, c] + conv
                else:
                    out[1:, c] = np.convolve(g[:-1, c], self.lags[1 : N + 1])[:N]
        return out[:, 0] if squeeze else out


@lru_cache(maxsize=32)
def pt_weights(alpha: float, h: float, n: int) -> ConvolutionWeights:
    """Product-trapezoid weights, cached per ``(alpha, h, n)``."""
    return ConvolutionWeights(alpha, h, n, "trapezoid")


@lru_cache(maxsize=32)
def pr_weights(alpha: float, h: float, n: int) -> ConvolutionWeights:
    """Product-rectangle weights (left point), cached per ``(alpha, h, n)``."""
    return ConvolutionWeights(alpha, h, n, "rectangle")


def rl_integral_grid(alpha: float, samples, h: float, rule: str = "trapezoid") -> np.ndarray:
    """``(I^alpha g)(t_j)`` for every node, componentwise for vector samples."""
    g = np.asarray(samples, dtype=float)
    if g.ndim not in (1, 2):
        raise ValueError(f"samples must be 1-D or 2-D, got shape {g.shape}")
    n = g.shape[0] - 1
    if n < 1:
        return np.zeros_like(g)
    w = pt_weights(alpha, h, n) if rule == "trapezoid" else pr_weights(alpha, h, n)
    return w.apply(g)


def _dense_trajectory(problem, traj, refine: int):
    """Trajectory sampled on a grid ``refine`` times finer, t in [-r, T_grid].

    History nodes come from the history function itself; solution nodes from a
    cubic spline fitted separately on each delay segment, since the solution has
    a fractional-power kink at every multiple of r.
    """
    grid = traj.grid
    m, N = grid.m, grid.n_total
    mf = m * refine
    fine = type(grid)(r=grid.r, m=mf, n_total=N * refine)
    tf = fine.times()
    xs = np.empty((mf + N * refine + 1, traj.dim))
    for i in range(mf + 1):
        xs[i] = problem.history_at(tf[i])
    times = grid.times()
    vals = traj.values
    for k0 in range(0, N, m):
        k1 = min(k0 + m, N)
        seg = slice(m + k0, m + k1 + 1)
        lo, hi = mf + k0 * refine, mf + k1 * refine
        if k1 - k0 == 1:
            frac = np.linspace(0.0, 1.0, refine + 1)[:, None]
            xs[lo : hi + 1] = vals[m + k0] * (1 - frac) + vals[m + k1] * frac
        elif k0 == 0:
            # x(t) ~ phi(0) + c t^alpha near 0: smooth in s = t^alpha
            a = problem.alpha
            spline = CubicSpline(times[seg] ** a, vals[seg], axis=0)
            xs[lo : hi + 1] = spline(tf[lo : hi + 1] ** a)
        else:
            spline = CubicSpline(times[seg], vals[seg], axis=0)
            xs[lo : hi + 1] = spline(tf[lo : hi + 1])
        xs[lo] = vals[m + k0]
        xs[hi] = vals[m + k1]
    return fine, xs


def caputo_residual(problem, traj, refine: int = 4) -> float:
    """Integral-equation defect of ``traj`` as a solution of ``problem``.

    Returns ``max_j || x(t_j) - phi(0) - I^alpha f(., x, x(. - r))(t_j) ||`` over
    the nodes ``t_j > 0``.  The trajectory is read as a continuous function
    (segment-wise cubic interpolation) and the integral is taken on a grid
    ``refine`` times finer than the trajectory's, so the defect reflects the
    discretization error of whichever solver produced ``traj``.
    """
    grid = traj.grid
    if traj.dim != problem.dim:
        raise ValueError(f"trajectory has dim {traj.dim}, problem has {problem.dim}")
    if not math.isclose(grid.r, problem.r, rel_tol=0, abs_tol=1e-14 * problem.r):
        raise ValueError("trajectory grid delay does not match the problem delay")
    if refine < 1:
        raise ValueError("refine must be >= 1")
    fine, xs = _dense_trajectory(problem, traj, refine)
    mf, Nf = fine.m, fine.n_total
    tpos = fine.times()[mf:]
    F = problem.rhs_many(tpos, xs[mf:], xs[: Nf + 1])
    integral = rl_integral_grid(problem.alpha, F, fine.h)
    phi0 = problem.history_at(0.0)
    vals = traj.values[grid.m + 1 :]
    defect = vals - phi0 - integral[refine::refine]
    if defect.size == 0:
        return 0.0
    return float(np.max(np.linalg.norm(defect, axis=1)))
