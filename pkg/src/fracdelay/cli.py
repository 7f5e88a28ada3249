"""Command-line interface: ``fracdelay <command> [flags]``.

Exit codes: 0 success, 2 invalid input or flags, 3 solver non-convergence,
4 blow-up, 5 analysis failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .config import dump_json, load_problem, read_trajectory, trajectory_to_csv
from .errors import BetaSelectionError, BlowUpError, CoincidenceError, NonConvergenceError, RhsEvaluationError
from .fracquad import caputo_residual
from .growth import (
    certify_growth,
    check_h2,
    counterexample_log_solution,
    counterexample_solution,
    exponential_bound_probe,
)
from .mlf import MlfDomainError, MlfNonConvergenceError, MlfOverflowError, ml_eval, ml_log_eval
from .model import ProblemValidationError
from .pece import PeceConfig, solve_pece
from .picard import solve_picard

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NONCONVERGENCE = 3
EXIT_BLOWUP = 4
EXIT_ANALYSIS = 5


class UsageError(Exception):
    """Bad flag values detected after argument parsing."""


class AnalysisError(Exception):
    """An analysis command could not produce its result."""


# -- output helpers ------------------------------------------------------------


class _Run:
    def __init__(self, args):
        self.args = args
        self.outputs: list[str] = []

    def say(self, text: str = ""):
        if not self.args.quiet:
            print(text)

    def write(self, path, text: str):
        Path(path).write_text(text)
        self.outputs.append(str(path))

    def manifest(self, command: str, params: dict):
        if not self.outputs:
            return
        h = hashlib.sha256()
        cfg = getattr(self.args, "config", None)
        if cfg:
            h.update(Path(cfg).read_bytes())
        h.update(json.dumps(params, sort_keys=True, default=str).encode())
        body = {
            "command": command,
            "config_digest": "sha256:" + h.hexdigest(),
            "tool_version": __version__,
            "parameters": params,
            "outputs": list(self.outputs),
            "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        }
        Path(self.outputs[0] + ".manifest.json").write_text(dump_json(body))


def _params(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "quiet")}


def _floats(text: str) -> list[float]:
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from exc
    if not vals:
        raise UsageError("empty number list")
    return vals


def _load(args):
    if not args.config:
        raise UsageError("--config is required")
    p, m_cfg = load_problem(args.config)
    m = getattr(args, "steps_per_delay", None) or m_cfg
    return p, m


def _solve(p, m, args):
    if m is None:
        raise UsageError("steps per delay missing: pass --steps-per-delay or set steps_per_delay")
    if args.method == "picard":
        return solve_picard(p, m, tol=args.tol, max_iter=args.max_iter, margin=args.margin, init=args.init)
    return solve_pece(p, m, PeceConfig(args.corrector_sweeps)), []


# -- commands ------------------------------------------------------------------


def cmd_solve(args, run: _Run) -> int:
    p, m = _load(args)
    traj, reports = _solve(p, m, args)
    csv_text = trajectory_to_csv(traj)
    if args.out:
        run.write(args.out, csv_text)
    elif not args.quiet:
        sys.stdout.write(csv_text)
    if args.report:
        report = {
            "method": args.method,
            "steps_per_delay": traj.grid.m,
            "h": traj.grid.h,
            "T_grid": traj.grid.T_grid,
            "segments": [r.to_dict() for r in reports],
        }
        run.write(args.report, dump_json(report))
    if args.out:
        run.say(f"solved {len(reports) or traj.grid.n_total} {'segments' if reports else 'steps'}; "
                f"{traj.grid.size} nodes written to {args.out}")
    run.manifest("solve", _params(args))
    return EXIT_OK


def cmd_residual(args, run: _Run) -> int:
    p, _ = _load(args)
    traj = _read_traj(args.traj)
    try:
        res = caputo_residual(p, traj, refine=args.refine)
    except ValueError as exc:
        raise AnalysisError(str(exc)) from exc
    run.say(f"residual {res:.6e}")
    if args.out:
        run.write(args.out, dump_json({"residual": res, "refine": args.refine,
                                       "steps_per_delay": traj.grid.m}))
    run.manifest("residual", _params(args))
    return EXIT_OK


def _read_traj(path):
    if not path:
        raise UsageError("--traj is required")
    try:
        return read_trajectory(path)
    except (OSError, ValueError) as exc:
        raise UsageError(str(exc)) from exc


def _probe_rows(probes):
    return [
        {"lambda": pr.lam, "log_C": pr.log_C, "C": pr.C, "tail_trend": pr.tail_trend, "verdict": pr.verdict}
        for pr in probes
    ]


def _print_probes(run, probes):
    run.say(f"{'lambda':>8} {'sup(ln|x| - lambda t)':>22} {'tail trend':>12}  verdict")
    for pr in probes:
        run.say(f"{pr.lam:8g} {pr.log_C:22.6g} {pr.tail_trend:12.4g}  {pr.verdict}")


def cmd_certify(args, run: _Run) -> int:
    traj = _read_traj(args.traj)
    if not args.beta > 0:
        raise UsageError("--beta must be positive")
    lambdas = _floats(args.lambdas)
    alpha = args.alpha
    p = None
    if args.config:
        p, _ = _load(args)
        alpha = p.alpha
    if alpha is None:
        raise UsageError("pass --config or --alpha")
    try:
        cert = certify_growth(traj, alpha, args.beta)
        probes = exponential_bound_probe(traj, lambdas)
        if p is not None:
            witness, passed = check_h2(p, args.beta, traj.grid.T_grid, traj.grid.m)
            cert = replace(cert, h2_witness=witness, h2_pass=passed)
    except (ValueError, ArithmeticError) as exc:
        raise AnalysisError(str(exc)) from exc
    body = cert.to_dict()
    body["probes"] = _probe_rows(probes)
    run.say(f"verdict {cert.verdict}: C = {cert.C:.6g}, beta = {cert.beta:g}, "
            f"horizon = {cert.horizon:g}, tail trend = {cert.ratio_tail_trend:.3g}")
    if cert.h2_witness is not None:
        run.say(f"forcing check: witness {cert.h2_witness:.6g}, {'pass' if cert.h2_pass else 'fail'}")
    _print_probes(run, probes)
    if args.out:
        run.write(args.out, dump_json(body))
    run.manifest("certify", _params(args))
    return EXIT_OK


def cmd_counterexample(args, run: _Run) -> int:
    if not 0 < args.alpha < 1:
        raise UsageError("--alpha must lie in (0,1)")
    if not args.x0 >= 0:
        raise UsageError("--x0 must be >= 0")
    if not (args.horizon > 0 and args.delay > 0 and args.steps_per_delay >= 1):
        raise UsageError("--horizon, --delay and --steps-per-delay must be positive")
    lambdas = _floats(args.lambdas)
    log_traj = counterexample_log_solution(args.alpha, args.x0, args.horizon, args.steps_per_delay, args.delay)
    probes = exponential_bound_probe(log_traj, lambdas)
    _print_probes(run, probes)
    if args.out:
        try:
            traj = counterexample_solution(args.alpha, args.x0, args.horizon, args.steps_per_delay, args.delay)
            run.write(args.out, trajectory_to_csv(traj))
        except OverflowError as exc:
            # values leave double range: store ln x instead
            print(f"note: {exc}; writing ln x", file=sys.stderr)
            lines = ["t,ln_x_1"] + ["%.17g,%.17g" % (t, v) for t, v in zip(*log_traj)]
            run.write(args.out, "\n".join(lines) + "\n")
    if args.report:
        run.write(args.report, dump_json({"alpha": args.alpha, "x0": args.x0, "horizon": args.horizon,
                                          "probes": _probe_rows(probes)}))
    run.manifest("counterexample", _params(args))
    return EXIT_OK


def cmd_mlf(args, run: _Run) -> int:
    try:
        if args.log:
            print("%.15g" % ml_log_eval(args.alpha, args.z))
        else:
            print("%.15g" % ml_eval(args.alpha, args.z))
    except MlfDomainError as exc:
        raise UsageError(str(exc)) from exc
    except (MlfOverflowError, MlfNonConvergenceError) as exc:
        raise AnalysisError(str(exc)) from exc
    return EXIT_OK


def _level_difference(coarse, fine) -> float:
    """Sup-norm difference at the coarse nodes ``t >= 0`` (fine node ``2j``)."""
    a = coarse.values[coarse.grid.m :]
    b = fine.values[fine.grid.m :: 2]
    n = min(len(a), len(b))
    return float(np.max(np.abs(a[:n] - b[:n])))


def cmd_convergence(args, run: _Run) -> int:
    if args.levels < 3:
        raise UsageError("--levels must be >= 3")
    p, m_cfg = _load(args)
    m0 = args.m_start or m_cfg
    if not m0 or m0 < 1:
        raise UsageError("pass --m-start or set steps_per_delay")
    ms = [m0 * 2**i for i in range(args.levels)]
    trajs = [_solve(p, m, args)[0] for m in ms]
    diffs = [_level_difference(trajs[i], trajs[i + 1]) for i in range(len(ms) - 1)]
    rows = []
    exact = all(d == 0.0 for d in diffs)
    for i, d in enumerate(diffs):
        row = {"m": ms[i], "m_next": ms[i + 1], "difference": d, "ratio": None, "order": None}
        if i > 0:
            prev = diffs[i - 1]
            if exact:
                row["order"] = "exact"
            elif d > 0:
                row["ratio"] = prev / d
                row["order"] = math.log2(prev / d) if prev > 0 else -math.inf
            else:
                row["ratio"] = row["order"] = math.inf
        rows.append(row)
    run.say(f"{'m':>8} {'2m':>8} {'sup |x_m - x_2m|':>18} {'ratio':>10} {'order':>8}")
    for row in rows:
        ratio = "" if row["ratio"] is None else f"{row['ratio']:.4g}"
        order = row["order"]
        order = "" if order is None else (order if isinstance(order, str) else f"{order:.3f}")
        run.say(f"{row['m']:8d} {row['m_next']:8d} {row['difference']:18.6e} {ratio:>10} {order:>8}")
    if exact:
        run.say("all levels agree exactly; order reported as exact")
    if args.out:
        lines = ["m,m_next,difference,ratio,order"]
        for row in rows:
            cells = [row["m"], row["m_next"], "%.17g" % row["difference"],
                     "" if row["ratio"] is None else "%.17g" % row["ratio"],
                     "" if row["order"] is None else (row["order"] if isinstance(row["order"], str)
                                                      else "%.17g" % row["order"])]
            lines.append(",".join(str(c) for c in cells))
        run.write(args.out, "\n".join(lines) + "\n")
    run.manifest("convergence", _params(args))
    orders = [r["order"] for r in rows if r["order"] not in (None, "exact")]
    if not all(math.isfinite(o) for o in orders):
        print("error: observed order is not finite", file=sys.stderr)
        return EXIT_ANALYSIS
    return EXIT_OK


# -- parser --------------------------------------------------------------------


def _solver_flags(sp):
    sp.add_argument("--method", choices=("picard", "pece"), default="picard")
    sp.add_argument("--steps-per-delay", type=int, default=None, help="grid steps per delay length")
    sp.add_argument("--tol", type=float, default=1e-10, help="Picard stopping tolerance")
    sp.add_argument("--max-iter", type=int, default=200, help="Picard iterations per segment")
    sp.add_argument("--margin", type=float, default=0.25, help="beta = 2 max_L (1 + margin)")
    sp.add_argument("--init", choices=("constant", "zero"), default="constant",
                    help="Picard starting iterate on each segment")
    sp.add_argument("--corrector-sweeps", type=int, default=1, help="PECE corrector repetitions")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="problem JSON file")
    common.add_argument("--out", default=None, help="output file")
    common.add_argument("--quiet", action="store_true", help="suppress tables on stdout")

    parser = argparse.ArgumentParser(prog="fracdelay", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("solve", parents=[common], help="solve a problem file")
    _solver_flags(sp)
    sp.add_argument("--report", default=None, help="per-segment report JSON")
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("residual", parents=[common], help="integral-equation defect of a trajectory")
    sp.add_argument("--traj", default=None, help="trajectory CSV")
    sp.add_argument("--refine", type=int, default=4)
    sp.set_defaults(func=cmd_residual)

    sp = sub.add_parser("certify", parents=[common], help="growth certificate for a trajectory")
    sp.add_argument("--traj", default=None, help="trajectory CSV")
    sp.add_argument("--beta", type=float, required=True)
    sp.add_argument("--alpha", type=float, default=None, help="order, when no --config is given")
    sp.add_argument("--lambdas", default="1,2,5,10", help="comma-separated exponential rates")
    sp.set_defaults(func=cmd_certify)

    sp = sub.add_parser("counterexample", parents=[common], help="exp(t^2) forcing, computed directly")
    sp.add_argument("--alpha", type=float, required=True)
    sp.add_argument("--x0", type=float, default=1.0)
    sp.add_argument("--horizon", type=float, required=True)
    sp.add_argument("--steps-per-delay", type=int, default=100)
    sp.add_argument("--delay", type=float, default=1.0)
    sp.add_argument("--lambdas", default=",".join(str(k) for k in range(1, 51)))
    sp.add_argument("--report", default=None, help="probe table JSON")
    sp.set_defaults(func=cmd_counterexample)

    sp = sub.add_parser("mlf", parents=[common], help="evaluate E_alpha(z)")
    sp.add_argument("--alpha", type=float, required=True)
    sp.add_argument("--z", type=float, required=True)
    sp.add_argument("--log", action="store_true", help="print ln E_alpha(z)")
    sp.set_defaults(func=cmd_mlf)

    sp = sub.add_parser("convergence", parents=[common], help="grid-refinement study")
    _solver_flags(sp)
    sp.add_argument("--m-start", type=int, default=None)
    sp.add_argument("--levels", type=int, default=3)
    sp.set_defaults(func=cmd_convergence)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    run = _Run(args)
    try:
        return args.func(args, run)
    except (UsageError, ProblemValidationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (NonConvergenceError, BetaSelectionError, RhsEvaluationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except BlowUpError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BLOWUP
    except (AnalysisError, CoincidenceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ANALYSIS


if __name__ == "__main__":
    sys.exit(main())
