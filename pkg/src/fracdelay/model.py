"""Problem statement, delay-aligned grids, history functions and trajectories.

A delay problem is ``D^alpha x(t) = f(t, x(t), x(t - r))`` on ``[0, T]`` (Caputo,
``0 < alpha < 1``) with ``x = phi`` on ``[-r, 0]``.  Grids are built as
``h = r / m`` so that ``t - r`` is always a node.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

__all__ = [
    "ProblemValidationError",
    "ConstantHistory",
    "SampledHistory",
    "ExprHistory",
    "DelayProblem",
    "UniformGrid",
    "Trajectory",
    "build_grid",
    "validate_problem",
    "estimate_lipschitz",
    "row_norms",
]


class ProblemValidationError(ValueError):
    """Raised with every violation found, not just the first."""

    def __init__(self, errors: Sequence[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


# -- history functions -------------------------------------------------------


@dataclass(frozen=True)
class ConstantHistory:
    value: tuple[float, ...]

    def __init__(self, value):
        object.__setattr__(self, "value", tuple(float(v) for v in np.atleast_1d(value)))

    @property
    def dim(self) -> int:
        return len(self.value)

    def __call__(self, t: float) -> np.ndarray:
        return np.array(self.value)


@dataclass(frozen=True)
class SampledHistory:
    """Piecewise-linear interpolation of ``(t, value)`` samples on ``[-r, 0]``."""

    times: np.ndarray
    values: np.ndarray

    def __init__(self, times, values):
        t = np.asarray(times, dtype=float)
        v = np.asarray(values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if t.ndim != 1 or v.shape[0] != t.size or t.size < 2:
            raise ValueError("sampled history needs >= 2 nodes with one value row each")
        if np.any(np.diff(t) <= 0):
            raise ValueError("sampled history nodes must be strictly increasing")
        t.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def covers(self, r: float) -> bool:
        tol = 1e-12 * max(1.0, r)
        return abs(self.times[0] + r) <= tol and abs(self.times[-1]) <= tol

    def __call__(self, t: float) -> np.ndarray:
        return np.array([np.interp(t, self.times, self.values[:, c]) for c in range(self.dim)])


@dataclass(frozen=True)
class ExprHistory:
    """History given by expressions of ``t`` (one per component)."""

    exprs: tuple

    @property
    def dim(self) -> int:
        return len(self.exprs)

    def __call__(self, t: float) -> np.ndarray:
        return np.array([e.eval(t) for e in self.exprs])


# -- problem -----------------------------------------------------------------


Rhs = Callable[[float, np.ndarray, np.ndarray], Any]


@dataclass(frozen=True)
class DelayProblem:
    """``D^alpha x = rhs(t, x(t), x(t - r))``, ``x = history`` on ``[-r, 0]``.

    ``lipschitz`` is a constant ``L >= 0``, a callable ``L(t, y)``, or the string
    ``"estimate"`` to request a sampled estimate per segment.  With
    ``vectorized=True`` the rhs also accepts ``t`` of shape ``(n,)`` and
    ``x, y`` of shape ``(n, dim)``, returning ``(n, dim)``.
    """

    alpha: float
    r: float
    T: float
    dim: int
    history: Callable[[float], Any]
    rhs: Rhs
    lipschitz: float | Callable[[float, np.ndarray], float] | str | None = None
    vectorized: bool = False
    name: str = field(default="", compare=False)

    def history_at(self, t: float) -> np.ndarray:
        return np.asarray(self.history(t), dtype=float).reshape(self.dim)

    def rhs_at(self, t: float, x, y) -> np.ndarray:
        return np.asarray(self.rhs(t, x, y), dtype=float).reshape(self.dim)

    def rhs_many(self, t, X, Y) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        X = np.asarray(X, dtype=float).reshape(t.size, self.dim)
        Y = np.asarray(Y, dtype=float).reshape(t.size, self.dim)
        if self.vectorized:
            return np.asarray(self.rhs(t, X, Y), dtype=float).reshape(t.size, self.dim)
        out = np.empty((t.size, self.dim))
        for i in range(t.size):
            out[i] = self.rhs_at(float(t[i]), X[i], Y[i])
        return out

    def lipschitz_at(self, t: float, y) -> float:
        """``L(t, y)``; only for constant or callable Lipschitz data."""
        L = self.lipschitz
        if callable(L):
            return float(L(t, np.asarray(y, dtype=float)))
        if isinstance(L, (int, float)) and not isinstance(L, bool):
            return float(L)
        raise TypeError(f"lipschitz data {L!r} cannot be evaluated pointwise")


# -- grid & trajectory -------------------------------------------------------


@dataclass(frozen=True)
class UniformGrid:
    """Nodes ``t_j``, ``j = -m .. n_total``, with ``m`` steps per delay."""

    r: float
    m: int
    n_total: int

    @property
    def h(self) -> float:
        return self.r / self.m

    @property
    def T_grid(self) -> float:
        return self.t(self.n_total)

    @property
    def size(self) -> int:
        return self.m + self.n_total + 1

    def t(self, j: int) -> float:
        # split into whole delays so that t_{k m} == k r exactly
        k, rem = divmod(j, self.m)
        return k * self.r + rem * self.h

    def times(self) -> np.ndarray:
        j = np.arange(-self.m, self.n_total + 1)
        k, rem = np.divmod(j, self.m)
        return k * self.r + rem * self.h

    def index(self, j: int) -> int:
        """Row of node ``j`` in a trajectory value array."""
        return j + self.m

    def segments(self) -> list[tuple[int, int, int]]:
        """``(k, j_start, j_end)`` for each delay segment, last one possibly partial."""
        out = []
        k = 0
        while k * self.m < self.n_total:
            out.append((k, k * self.m, min((k + 1) * self.m, self.n_total)))
            k += 1
        return out


def build_grid(r: float, T: float, m: int) -> UniformGrid:
    """Grid with ``h = r/m`` whose last node is the first one at or past ``T``."""
    if not r > 0:
        raise ValueError(f"delay must be positive, got {r}")
    if not T > 0:
        raise ValueError(f"horizon must be positive, got {T}")
    if int(m) != m or m < 1:
        raise ValueError(f"steps per delay must be a positive integer, got {m}")
    m = int(m)
    h = r / m
    n = max(1, math.ceil(T / h))
    grid = UniformGrid(r=float(r), m=m, n_total=n)
    # ceil of a rounded quotient can overshoot by one node
    while n > 1 and grid.t(n - 1) >= T:
        n -= 1
        grid = UniformGrid(r=float(r), m=m, n_total=n)
    return grid


class Trajectory:
    """Node values ``x_j`` for ``j = -m .. n_total``; immutable."""

    def __init__(self, grid: UniformGrid, values):
        v = np.array(values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.shape[0] != grid.size:
            raise ValueError(f"expected {grid.size} rows for the grid, got {v.shape[0]}")
        v.setflags(write=False)
        self.grid = grid
        self.values = v

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def times(self) -> np.ndarray:
        return self.grid.times()

    def x(self, j: int) -> np.ndarray:
        return self.values[self.grid.index(j)]

    def solution(self) -> tuple[np.ndarray, np.ndarray]:
        """Times and values for ``t >= 0``."""
        m = self.grid.m
        return self.times[m:], self.values[m:]

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.values)))

    def __repr__(self):
        return f"Trajectory(m={self.grid.m}, n_total={self.grid.n_total}, dim={self.dim})"


def row_norms(a) -> np.ndarray:
    """Euclidean norm of each row without overflow for entries near the double limit."""
    a = np.asarray(a, dtype=float)
    scale = np.max(np.abs(a), axis=-1)
    safe = np.where((scale > 0) & np.isfinite(scale), scale, 1.0)
    out = safe * np.sqrt(np.sum((a / safe[..., None]) ** 2, axis=-1))
    return np.where(np.isfinite(scale), np.where(scale > 0, out, 0.0), scale)


def history_values(problem: DelayProblem, grid: UniformGrid) -> np.ndarray:
    """History evaluated at the nodes ``j = -m .. 0``."""
    times = grid.times()[: grid.m + 1]
    return np.array([problem.history_at(t) for t in times])


# -- validation --------------------------------------------------------------


def _finite_vector(v, dim) -> bool:
    a = np.asarray(v, dtype=float)
    return a.size == dim and bool(np.all(np.isfinite(a)))


def validate_problem(p: DelayProblem) -> DelayProblem:
    """Return ``p`` unchanged, or raise :class:`ProblemValidationError` listing all issues."""
    errors: list[str] = []

    def num(v):
        return isinstance(v, (int, float, np.floating, np.integer)) and not isinstance(v, bool)

    if not (num(p.alpha) and 0.0 < p.alpha < 1.0):
        errors.append("order must lie in (0,1)")
    r_ok = num(p.r) and math.isfinite(p.r) and p.r > 0.0
    if not r_ok:
        errors.append("delay must be positive")
    if not (num(p.T) and math.isfinite(p.T) and p.T > 0.0):
        errors.append("horizon must be positive")
    dim_ok = isinstance(p.dim, (int, np.integer)) and not isinstance(p.dim, bool) and p.dim >= 1
    if not dim_ok:
        errors.append("dimension must be a positive integer")

    hist_ok = False
    if r_ok and dim_ok:
        if isinstance(p.history, SampledHistory) and not p.history.covers(p.r):
            errors.append("sampled history must cover exactly [-r, 0]")
        bad = []
        for t in np.linspace(-p.r, 0.0, 9):
            try:
                if not _finite_vector(p.history(float(t)), p.dim):
                    bad.append(float(t))
            except Exception as exc:  # noqa: BLE001 - any failure is a violation
                errors.append(f"history evaluation failed at t={t:g}: {exc}")
                break
        if bad:
            errors.append(f"history is not a finite {p.dim}-vector at t={bad[0]:g}")
        hist_ok = not bad and not any(e.startswith("history evaluation") for e in errors)

    if hist_ok and num(p.T) and p.T > 0:
        x0, y0 = p.history_at(0.0), p.history_at(-p.r)
        # f must be finite at the start; later it may overflow, which the
        # solvers report as a blow-up rather than a malformed problem
        for t in (0.0, 0.5 * p.T, float(p.T)):
            try:
                v = np.asarray(p.rhs(t, x0, y0), dtype=float)
                if v.size != p.dim or np.any(np.isnan(v)) or (t == 0.0 and not np.all(np.isfinite(v))):
                    errors.append(f"rhs is not a finite {p.dim}-vector at t={t:g}")
                    break
            except Exception as exc:  # noqa: BLE001
                errors.append(f"rhs evaluation failed at t={t:g}: {exc}")
                break

    L = p.lipschitz
    if L is None:
        errors.append("lipschitz data required: a constant, a callable L(t, y), or 'estimate'")
    elif isinstance(L, str):
        if L != "estimate":
            errors.append(f"unknown lipschitz mode {L!r}")
    elif callable(L):
        if hist_ok and num(p.T) and p.T > 0:
            y0 = p.history_at(-p.r)
            for t in (0.0, 0.5 * p.T, float(p.T)):
                try:
                    v = float(L(t, y0))
                except Exception as exc:  # noqa: BLE001
                    errors.append(f"lipschitz evaluation failed at t={t:g}: {exc}")
                    break
                if not (math.isfinite(v) and v >= 0.0):
                    errors.append(f"lipschitz value must be finite and >= 0 at t={t:g}")
                    break
    elif not (num(L) and math.isfinite(L) and L >= 0.0):
        errors.append("lipschitz constant must be finite and >= 0")

    if errors:
        raise ProblemValidationError(errors)
    return p


# -- Lipschitz estimate ------------------------------------------------------


def estimate_lipschitz(
    p: DelayProblem,
    box,
    segment: tuple[float, float],
    y_samples,
    max_lattice: int = 500,
) -> float:
    """Sampled estimate of ``sup |f(t,x,y) - f(t,x',y)| / |x - x'|``.

    The lattice is fixed (no random draws): 5 times across ``segment``, an
    evenly spaced grid over ``box = (lo, hi)`` and every vector in
    ``y_samples``.  Both neighbouring-lattice quotients and central-difference
    Jacobian norms are taken.  This is an estimate, never a certificate.
    """
    lo, hi = (np.broadcast_to(np.asarray(b, dtype=float), (p.dim,)) for b in box)
    a, b = segment
    if not (np.all(hi > lo) and b > a):
        raise ValueError("box and segment must be non-degenerate")
    per_dim = int(max(3, min(41, math.floor(max_lattice ** (1.0 / p.dim)))))
    axes = [np.linspace(lo[i], hi[i], per_dim) for i in range(p.dim)]
    lattice = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, p.dim)
    shape = (per_dim,) * p.dim
    ys = np.asarray(y_samples, dtype=float).reshape(-1, p.dim)
    eps = 1e-6 * np.maximum(1.0, np.abs(hi - lo))
    best = 0.0
    for t in np.linspace(a, b, 5):
        for y in ys:
            vals = np.array([p.rhs_at(t, x, y) for x in lattice])
            grid_vals = vals.reshape(shape + (p.dim,))
            for ax in range(p.dim):
                df = np.diff(grid_vals, axis=ax)
                step = (hi[ax] - lo[ax]) / (per_dim - 1)
                best = max(best, float(np.max(np.linalg.norm(df, axis=-1))) / step)
            for x in lattice:
                J = np.empty((p.dim, p.dim))
                for i in range(p.dim):
                    e = np.zeros(p.dim)
                    e[i] = eps[i]
                    J[:, i] = (p.rhs_at(t, x + e, y) - p.rhs_at(t, x - e, y)) / (2 * eps[i])
                best = max(best, float(np.linalg.norm(J, 2)))
    return best
