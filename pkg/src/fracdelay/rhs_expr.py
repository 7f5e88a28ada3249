"""Expression language for right-hand sides ``f(t, x, y)`` and histories ``phi(t)``.

Grammar (precedence low to high)::

    expr    := term (("+" | "-") term)*
    term    := unary (("*" | "/") unary)*
    unary   := "-" unary | "+" unary | power
    power   := primary ("^" unary)?          # right-associative, tighter than "-"
    primary := NUMBER | NAME | NAME "(" expr ("," expr)* ")" | "(" expr ")"

so ``-2^2 == -4`` and ``2^3^2 == 512``.  Variables are ``t``, ``x1..xd``,
``y1..yd`` (history expressions: ``t`` only); constant ``pi``; functions
``exp sin cos sqrt abs ln`` and ``pow(a, b)`` (same node as ``a^b``).
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Union

import numpy as np

__all__ = [
    "ExprSyntaxError",
    "ExprEvalError",
    "ExprOverflowError",
    "Num",
    "Var",
    "Neg",
    "BinOp",
    "Call",
    "RhsExpr",
    "parse",
    "to_source",
    "to_sexpr",
]

# bound on tree depth; keeps parsing and evaluation well inside the recursion limit
MAX_DEPTH = 100

FUNCTIONS = {"exp": 1, "sin": 1, "cos": 1, "sqrt": 1, "abs": 1, "ln": 1, "pow": 2}
CONSTANTS = {"pi": math.pi}


class ExprSyntaxError(ValueError):
    def __init__(self, message: str, pos: int, expected: tuple[str, ...] = ()):
        self.pos = pos
        self.expected = expected
        detail = f" (expected {', '.join(expected)})" if expected else ""
        super().__init__(f"{message} at offset {pos}{detail}")


class ExprEvalError(ArithmeticError):
    def __init__(self, message: str, pos: int):
        self.pos = pos
        super().__init__(f"{message} at offset {pos}")


class ExprOverflowError(ExprEvalError):
    """A finite input produced a value outside double range."""


# -- tree --------------------------------------------------------------------


@dataclass(frozen=True)
class Num:
    value: float
    pos: int = 0

    def __eq__(self, other):
        return isinstance(other, Num) and self.value == other.value

    def __hash__(self):
        return hash(("num", self.value))


@dataclass(frozen=True)
class Var:
    name: str
    pos: int = 0

    def __eq__(self, other):
        return isinstance(other, Var) and self.name == other.name

    def __hash__(self):
        return hash(("var", self.name))


@dataclass(frozen=True)
class Neg:
    operand: "Node"
    pos: int = 0

    def __eq__(self, other):
        return isinstance(other, Neg) and self.operand == other.operand

    def __hash__(self):
        return hash(("neg", self.operand))


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Node"
    right: "Node"
    pos: int = 0

    def __eq__(self, other):
        return (
            isinstance(other, BinOp)
            and self.op == other.op
            and self.left == other.left
            and self.right == other.right
        )

    def __hash__(self):
        return hash(("bin", self.op, self.left, self.right))


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple
    pos: int = 0

    def __eq__(self, other):
        return isinstance(other, Call) and self.name == other.name and self.args == other.args

    def __hash__(self):
        return hash(("call", self.name, self.args))


Node = Union[Num, Var, Neg, BinOp, Call]


# -- lexer -------------------------------------------------------------------

_TOKEN = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^(),])
    """,
    re.VERBOSE,
)


def _tokenize(src: str):
    pos = 0
    toks = []
    while pos < len(src):
        mt = _TOKEN.match(src, pos)
        if mt is None:
            raise ExprSyntaxError(f"unexpected character {src[pos]!r}", pos)
        kind = mt.lastgroup
        if kind != "ws":
            toks.append((kind, mt.group(), pos))
        pos = mt.end()
    toks.append(("end", "", len(src)))
    return toks


# -- parser ------------------------------------------------------------------


class _Parser:
    def __init__(self, src: str, variables: frozenset[str]):
        self.toks = _tokenize(src)
        self.i = 0
        self.variables = variables
        self.depth = 0

    @property
    def tok(self):
        return self.toks[self.i]

    def advance(self):
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect(self, text: str):
        kind, val, pos = self.tok
        if val != text or kind == "end":
            raise ExprSyntaxError(f"unexpected {val or 'end of input'!r}", pos, (repr(text),))
        return self.advance()

    def nest(self, pos):
        self.depth += 1
        if self.depth > MAX_DEPTH:
            raise ExprSyntaxError("expression nested too deeply", pos)

    def parse(self) -> Node:
        node = self.expr()
        kind, val, pos = self.tok
        if kind != "end":
            raise ExprSyntaxError(f"unexpected {val!r}", pos, ("operator", "end of input"))
        return node

    def chain(self, ops, operand) -> Node:
        node = operand()
        entered = self.depth
        while self.tok[1] in ops and self.tok[0] == "op":
            _, op, pos = self.advance()
            self.nest(pos)  # each link deepens the left spine
            node = BinOp(op, node, operand(), pos)
        self.depth = entered
        return node

    def expr(self) -> Node:
        return self.chain(("+", "-"), self.term)

    def term(self) -> Node:
        return self.chain(("*", "/"), self.unary)

    def unary(self) -> Node:
        kind, val, pos = self.tok
        if kind == "op" and val in ("-", "+"):
            self.advance()
            self.nest(pos)
            operand = self.unary()
            self.depth -= 1
            return Neg(operand, pos) if val == "-" else operand
        return self.power()

    def power(self) -> Node:
        base = self.primary()
        kind, val, pos = self.tok
        if kind == "op" and val == "^":
            self.advance()
            self.nest(pos)
            exponent = self.unary()
            self.depth -= 1
            return BinOp("^", base, exponent, pos)
        return base

    def primary(self) -> Node:
        kind, val, pos = self.tok
        if kind == "num":
            self.advance()
            v = float(val)
            if not math.isfinite(v):
                raise ExprSyntaxError(f"numeric literal {val!r} out of range", pos)
            return Num(v, pos)
        if kind == "name":
            self.advance()
            if self.tok[1] == "(" and self.tok[0] == "op":
                return self.call(val, pos)
            if val in CONSTANTS:
                return Num(CONSTANTS[val], pos)
            if val in self.variables:
                return Var(val, pos)
            if val in FUNCTIONS:
                raise ExprSyntaxError(f"function {val!r} needs arguments", pos + len(val), ("'('",))
            raise ExprSyntaxError(f"unknown identifier {val!r}", pos)
        if kind == "op" and val == "(":
            self.advance()
            self.nest(pos)
            node = self.expr()
            self.depth -= 1
            self.expect(")")
            return node
        raise ExprSyntaxError(
            f"unexpected {val or 'end of input'!r}", pos, ("number", "name", "'('", "'-'")
        )

    def call(self, name: str, pos: int) -> Node:
        if name not in FUNCTIONS:
            raise ExprSyntaxError(f"unknown function {name!r}", pos)
        self.advance()  # "("
        self.nest(pos)
        args = [self.expr()]
        while self.tok[1] == "," and self.tok[0] == "op":
            self.advance()
            args.append(self.expr())
        self.depth -= 1
        self.expect(")")
        if len(args) != FUNCTIONS[name]:
            raise ExprSyntaxError(
                f"{name} takes {FUNCTIONS[name]} argument(s), got {len(args)}", pos
            )
        if name == "pow":
            return BinOp("^", args[0], args[1], pos)
        return Call(name, tuple(args), pos)


# -- printing ----------------------------------------------------------------

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 4}
_NEG_PREC = 3


def _prec(node: Node) -> int:
    if isinstance(node, BinOp):
        return _PREC[node.op]
    if isinstance(node, Neg):
        return _NEG_PREC
    return 5


def _fmt_num(v: float) -> str:
    if v == math.pi:
        return "pi"
    if v.is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(float(v))


def to_source(node: Node) -> str:
    """Source text that parses back to an equal tree."""
    if isinstance(node, Num):
        return _fmt_num(node.value)
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Call):
        return f"{node.name}({', '.join(to_source(a) for a in node.args)})"
    if isinstance(node, Neg):
        inner = to_source(node.operand)
        # operand of unary minus is itself a unary: power, primary or another minus
        if _prec(node.operand) < _NEG_PREC:
            inner = f"({inner})"
        return f"-{inner}"
    p = _PREC[node.op]
    left, right = to_source(node.left), to_source(node.right)
    if node.op == "^":
        if _prec(node.left) <= p:
            left = f"({left})"
        if _prec(node.right) < _NEG_PREC:
            right = f"({right})"
        return f"{left}^{right}"
    if _prec(node.left) < p:
        left = f"({left})"
    if _prec(node.right) <= p and not isinstance(node.right, Neg):
        right = f"({right})"
    return f"{left} {node.op} {right}"


_SEXPR_NAMES = {"+": "add", "-": "sub", "*": "mul", "/": "div", "^": "pow"}


def to_sexpr(node: Node) -> str:
    """Prefix form, e.g. ``add(neg(x1), mul(0.5, y1))``."""
    if isinstance(node, Num):
        v = node.value
        return repr(int(v)) if v.is_integer() and abs(v) < 1e15 else repr(v)
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Neg):
        return f"neg({to_sexpr(node.operand)})"
    if isinstance(node, Call):
        return f"{node.name}({', '.join(to_sexpr(a) for a in node.args)})"
    return f"{_SEXPR_NAMES[node.op]}({to_sexpr(node.left)}, {to_sexpr(node.right)})"


# -- evaluation --------------------------------------------------------------


def _finite(v, pos):
    if not math.isfinite(v):
        raise ExprOverflowError("result leaves double range", pos)
    return v


def _pow(a, b, pos):
    if a < 0 and not float(b).is_integer():
        raise ExprEvalError("negative base with non-integer exponent", pos)
    if a == 0 and b < 0:
        raise ExprEvalError("zero raised to a negative power", pos)
    try:
        return _finite(math.pow(a, b), pos)
    except OverflowError:
        raise ExprOverflowError("result leaves double range", pos) from None


def _unary(name):
    def exp(v, pos):
        try:
            return math.exp(v)
        except OverflowError:
            raise ExprOverflowError("result leaves double range", pos) from None

    def sqrt(v, pos):
        if v < 0:
            raise ExprEvalError("sqrt of a negative number", pos)
        return math.sqrt(v)

    def ln(v, pos):
        if v <= 0:
            raise ExprEvalError("ln of a non-positive number", pos)
        return math.log(v)

    return {
        "exp": exp,
        "sin": lambda v, pos: math.sin(v),
        "cos": lambda v, pos: math.cos(v),
        "sqrt": sqrt,
        "abs": lambda v, pos: abs(v),
        "ln": ln,
    }[name]


def _names(node: Node):
    if isinstance(node, Var):
        yield node.name
    elif isinstance(node, Neg):
        yield from _names(node.operand)
    elif isinstance(node, BinOp):
        yield from _names(node.left)
        yield from _names(node.right)
    elif isinstance(node, Call):
        for a in node.args:
            yield from _names(a)


def _compile(node: Node):
    """Closure ``env -> float`` evaluating ``node`` with scalar math."""
    if isinstance(node, Num):
        v = node.value
        return lambda env: v
    if isinstance(node, Var):
        name = node.name
        return lambda env: env[name]
    if isinstance(node, Neg):
        f = _compile(node.operand)
        return lambda env: -f(env)
    if isinstance(node, Call):
        f = _compile(node.args[0])
        fn, pos = _unary(node.name), node.pos
        return lambda env: fn(f(env), pos)
    lf, rf, pos = _compile(node.left), _compile(node.right), node.pos
    if node.op == "+":
        return lambda env: _finite(lf(env) + rf(env), pos)
    if node.op == "-":
        return lambda env: _finite(lf(env) - rf(env), pos)
    if node.op == "*":
        return lambda env: _finite(lf(env) * rf(env), pos)
    if node.op == "/":
        def div(env):
            a, b = lf(env), rf(env)
            if b == 0:
                raise ExprEvalError("division by zero", pos)
            return _finite(a / b, pos)
        return div
    return lambda env: _pow(lf(env), rf(env), pos)


_NP_FUNCS = {"exp": np.exp, "sin": np.sin, "cos": np.cos, "sqrt": np.sqrt, "abs": np.abs, "ln": np.log}


def _eval_array(node: Node, env: dict):
    """Vectorised evaluation over numpy arrays; same error semantics as scalars."""
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        return env[node.name]
    if isinstance(node, Neg):
        return -_eval_array(node.operand, env)
    if isinstance(node, Call):
        v = np.asarray(_eval_array(node.args[0], env), dtype=float)
        if node.name == "sqrt" and np.any(v < 0):
            raise ExprEvalError("sqrt of a negative number", node.pos)
        if node.name == "ln" and np.any(v <= 0):
            raise ExprEvalError("ln of a non-positive number", node.pos)
        with np.errstate(over="ignore"):
            out = _NP_FUNCS[node.name](v)
    else:
        a = np.asarray(_eval_array(node.left, env), dtype=float)
        b = np.asarray(_eval_array(node.right, env), dtype=float)
        with np.errstate(over="ignore", invalid="ignore"):
            if node.op == "+":
                out = a + b
            elif node.op == "-":
                out = a - b
            elif node.op == "*":
                out = a * b
            elif node.op == "/":
                if np.any(b == 0):
                    raise ExprEvalError("division by zero", node.pos)
                out = a / b
            else:
                a, b = np.broadcast_arrays(a, b)
                if np.any((a < 0) & (b != np.floor(b))):
                    raise ExprEvalError("negative base with non-integer exponent", node.pos)
                if np.any((a == 0) & (b < 0)):
                    raise ExprEvalError("zero raised to a negative power", node.pos)
                out = np.power(a, b)
    if not np.all(np.isfinite(out)):
        raise ExprOverflowError("result leaves double range", node.pos)
    return out


class RhsExpr:
    """A parsed expression together with its variable context."""

    def __init__(self, src: str, tree: Node, dim: int, allow_xy: bool):
        self.src = src
        self.tree = tree
        self.dim = dim
        self.allow_xy = allow_xy
        self.variables = frozenset(_names(tree))
        self._fn = _compile(tree)

    def _bind(self, t, x, y, conv):
        env = {"t": conv(t)}
        for name in self.variables - {"t"}:
            src = x if name[0] == "x" else y
            if src is None:
                raise ValueError(f"{self.src!r} uses {name} but no {name[0]} values were given")
            env[name] = conv(src[..., int(name[1:]) - 1] if conv is np.asarray else src[int(name[1:]) - 1])
        return env

    def eval(self, t: float, x=None, y=None) -> float:
        return float(self._fn(self._bind(t, x, y, float)))

    def eval_array(self, t, X=None, Y=None) -> np.ndarray:
        """Evaluate at many points: ``t`` shape (n,), ``X``/``Y`` shape (n, dim)."""
        t = np.asarray(t, dtype=float)
        env = self._bind(t, X, Y, np.asarray)
        return np.broadcast_to(np.asarray(_eval_array(self.tree, env), dtype=float), t.shape).copy()

    def __repr__(self):
        return f"RhsExpr({self.src!r})"

    def __str__(self):
        return to_source(self.tree)


def variables_for(dim: int, allow_xy: bool) -> frozenset[str]:
    names = {"t"}
    if allow_xy:
        names |= {f"x{i}" for i in range(1, dim + 1)} | {f"y{i}" for i in range(1, dim + 1)}
    return frozenset(names)


def parse(src: str, dim: int = 1, allow_xy: bool = True) -> RhsExpr:
    """Parse ``src``; raises :class:`ExprSyntaxError` with offset and expected tokens."""
    if not isinstance(src, str):
        raise ExprSyntaxError(f"expression must be text, got {type(src).__name__}", 0)
    tree = _Parser(src, variables_for(dim, allow_xy)).parse()
    return RhsExpr(src, tree, dim, allow_xy)
