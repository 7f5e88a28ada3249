"""Solver failure modes shared by the solvers and the CLI."""


class SolverError(RuntimeError):
    pass


class NonConvergenceError(SolverError):
    def __init__(self, segment: int, iterations: int, distance: float):
        self.segment = segment
        self.iterations = iterations
        self.distance = distance
        super().__init__(
            f"segment {segment}: no convergence after {iterations} iterations "
            f"(weighted distance {distance:.3e})"
        )


class BetaSelectionError(SolverError):
    pass


class BlowUpError(SolverError):
    def __init__(self, node: int, t: float, detail: str = ""):
        self.node = node
        self.t = t
        msg = f"solution blew up at node {node} (t = {t:.6g})"
        super().__init__(msg + (f": {detail}" if detail else ""))


class RhsEvaluationError(SolverError):
    def __init__(self, node: int, t: float, detail: str = ""):
        self.node = node
        self.t = t
        super().__init__(f"rhs evaluation failed at node {node} (t = {t:.6g}) {detail}".rstrip())


class CoincidenceError(SolverError):
    pass
