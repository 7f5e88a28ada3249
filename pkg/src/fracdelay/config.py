"""Problem files (JSON) and trajectory files (CSV).

Problem JSON::

    {"alpha": 0.5, "delay": 1.0, "horizon": 2.0, "dim": 1, "steps_per_delay": 100,
     "history": {"constant": [1.0]} | {"expr": "1 + t"} | {"samples": [[t, v1, ...], ...]},
     "rhs": {"expr": ["-x1 + 0.5*y1"]},
     "lipschitz": {"constant": 1.5} | {"estimate": true}}

Trajectory CSV: header ``t,x_1,...,x_d``, one row per node from ``-r`` to
``T_grid``, every number printed with 17 significant digits.
"""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import numpy as np

from .model import (
    ConstantHistory,
    DelayProblem,
    ExprHistory,
    ProblemValidationError,
    SampledHistory,
    Trajectory,
    UniformGrid,
)
from .rhs_expr import ExprOverflowError, ExprSyntaxError, parse

__all__ = [
    "ExprRhs",
    "problem_from_dict",
    "load_problem",
    "trajectory_to_csv",
    "write_trajectory",
    "read_trajectory",
    "dump_json",
]


class ExprRhs:
    """``f(t, x, y)`` from one parsed expression per component.

    Accepts a single node (``t`` scalar, ``x, y`` of shape ``(dim,)``) or a batch
    (``t`` of shape ``(n,)``, ``x, y`` of shape ``(n, dim)``).  A component that
    overflows is returned as ``inf`` so the solvers report a blow-up at that node.
    """

    def __init__(self, exprs):
        self.exprs = tuple(exprs)
        self.dim = len(self.exprs)

    def _row(self, t, x, y):
        out = np.empty(self.dim)
        for i, e in enumerate(self.exprs):
            try:
                out[i] = e.eval(t, x, y)
            except ExprOverflowError:
                out[i] = math.inf
        return out

    def __call__(self, t, x, y):
        t_arr = np.asarray(t, dtype=float)
        if t_arr.ndim == 0:
            return self._row(float(t_arr), np.asarray(x, float).ravel(), np.asarray(y, float).ravel())
        X = np.asarray(x, dtype=float).reshape(t_arr.size, self.dim)
        Y = np.asarray(y, dtype=float).reshape(t_arr.size, self.dim)
        try:
            return np.column_stack([e.eval_array(t_arr, X, Y) for e in self.exprs])
        except ExprOverflowError:
            # locate the offending rows
            return np.array([self._row(float(t_arr[i]), X[i], Y[i]) for i in range(t_arr.size)])

    def __repr__(self):
        return f"ExprRhs({[e.src for e in self.exprs]!r})"


def _number(d, key, errors, kind=float):
    if key not in d:
        errors.append(f"missing field {key!r}")
        return None
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        errors.append(f"field {key!r} must be a number")
        return None
    if kind is int and int(v) != v:
        errors.append(f"field {key!r} must be an integer")
        return None
    return kind(v)


def problem_from_dict(cfg: dict) -> tuple[DelayProblem, int | None]:
    """Build the problem and the requested steps per delay (``None`` if absent).

    Structural problems in the file are collected and raised together as a
    :class:`ProblemValidationError`; value ranges are checked by
    :func:`~fracdelay.model.validate_problem` when a solver runs.
    """
    if not isinstance(cfg, dict):
        raise ProblemValidationError(["problem file must hold a JSON object"])
    errors: list[str] = []
    alpha = _number(cfg, "alpha", errors)
    r = _number(cfg, "delay", errors)
    T = _number(cfg, "horizon", errors)
    dim = _number(cfg, "dim", errors, int)
    m = None
    if "steps_per_delay" in cfg:
        m = _number(cfg, "steps_per_delay", errors, int)
        if m is not None and m < 1:
            errors.append("steps_per_delay must be >= 1")
    d = dim if dim is not None and dim >= 1 else None

    history = None
    h = cfg.get("history")
    if not isinstance(h, dict) or len(h) != 1:
        errors.append("history must be an object with one of 'constant', 'expr', 'samples'")
    elif "constant" in h:
        v = h["constant"]
        vals = v if isinstance(v, list) else [v]
        if not all(isinstance(a, (int, float)) and not isinstance(a, bool) for a in vals):
            errors.append("history.constant must be a number or a list of numbers")
        else:
            history = ConstantHistory(vals)
            if d is not None and history.dim != d:
                errors.append(f"history.constant has {history.dim} components, dim is {d}")
    elif "expr" in h:
        srcs = h["expr"] if isinstance(h["expr"], list) else [h["expr"]]
        try:
            history = ExprHistory(tuple(parse(s, allow_xy=False) for s in srcs))
        except ExprSyntaxError as exc:
            errors.append(f"history.expr: {exc}")
        else:
            if d is not None and history.dim not in (1, d):
                errors.append(f"history.expr has {history.dim} components, dim is {d}")
            elif d is not None and history.dim == 1 and d > 1:
                history = ExprHistory(history.exprs * d)
    elif "samples" in h:
        try:
            rows = np.asarray(h["samples"], dtype=float)
            if rows.ndim != 2 or rows.shape[1] < 2:
                raise ValueError("samples must be rows [t, v1, ..., vd]")
            history = SampledHistory(rows[:, 0], rows[:, 1:])
        except (ValueError, TypeError) as exc:
            errors.append(f"history.samples: {exc}")
        else:
            if d is not None and history.dim != d:
                errors.append(f"history.samples has {history.dim} components, dim is {d}")
    else:
        errors.append(f"unknown history kind {next(iter(h))!r}")

    rhs = None
    f = cfg.get("rhs")
    if not isinstance(f, dict) or not isinstance(f.get("expr"), list):
        errors.append("rhs must be an object {'expr': [one string per component]}")
    elif d is not None:
        if len(f["expr"]) != d:
            errors.append(f"rhs.expr has {len(f['expr'])} entries, dim is {d}")
        else:
            try:
                rhs = ExprRhs(parse(s, dim=d) for s in f["expr"])
            except ExprSyntaxError as exc:
                errors.append(f"rhs.expr: {exc}")

    lip = None
    L = cfg.get("lipschitz")
    if not isinstance(L, dict) or len(L) != 1:
        errors.append("lipschitz must be {'constant': L} or {'estimate': true}")
    elif "constant" in L:
        lip = _number(L, "constant", errors)
    elif L.get("estimate") is True:
        lip = "estimate"
    else:
        errors.append("lipschitz must be {'constant': L} or {'estimate': true}")

    if errors:
        raise ProblemValidationError(errors)
    p = DelayProblem(
        alpha=alpha, r=r, T=T, dim=d, history=history, rhs=rhs,
        lipschitz=lip, vectorized=True, name=str(cfg.get("name", "")),
    )
    return p, m


def load_problem(path) -> tuple[DelayProblem, int | None]:
    text = Path(path).read_text()
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProblemValidationError([f"{path}: not valid JSON ({exc})"]) from exc
    return problem_from_dict(cfg)


# -- trajectories --------------------------------------------------------------


def trajectory_to_csv(traj: Trajectory) -> str:
    buf = io.StringIO()
    buf.write(",".join(["t"] + [f"x_{i + 1}" for i in range(traj.dim)]) + "\n")
    for t, row in zip(traj.times, traj.values):
        buf.write(",".join("%.17g" % v for v in (t, *row)) + "\n")
    return buf.getvalue()


def write_trajectory(path, traj: Trajectory) -> None:
    Path(path).write_text(trajectory_to_csv(traj))


def read_trajectory(path) -> Trajectory:
    """Inverse of :func:`write_trajectory`; the grid is recovered from the times."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][:1] != ["t"]:
        raise ValueError(f"{path}: missing 't,x_1,...' header")
    data = np.array([[float(v) for v in row] for row in rows[1:] if row], dtype=float)
    if data.ndim != 2 or data.shape[0] < 3 or data.shape[1] != len(rows[0]):
        raise ValueError(f"{path}: malformed trajectory table")
    t = data[:, 0]
    m = int(np.count_nonzero(t < 0))
    r = -float(t[0])
    if m < 1 or t[m] != 0.0:
        raise ValueError(f"{path}: times must run from -r through 0")
    grid = UniformGrid(r=r, m=m, n_total=data.shape[0] - m - 1)
    if not np.allclose(grid.times(), t, rtol=0, atol=1e-12 * max(1.0, abs(t[-1]))):
        raise ValueError(f"{path}: times are not a uniform delay-aligned grid")
    return Trajectory(grid, data[:, 1:])


def dump_json(obj) -> str:
    """Stable JSON text (sorted keys, fixed indent) for byte-identical reruns."""
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"
