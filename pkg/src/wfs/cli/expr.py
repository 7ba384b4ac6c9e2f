"""Small arithmetic expression language for weights and test functions.

Grammar (Pratt parser)::

    expr    := sum
    sum     := product (('+' | '-') product)*
    product := unary (('*' | '/') unary)*
    unary   := '-' unary | power
    power   := atom ('^' unary)?          # right associative
    atom    := number | x<i> | name '(' expr ')' | '(' expr ')'

so ``-x0^2`` is ``-(x0^2)`` and ``2^-1`` is ``2^(-1)``.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Union

import numpy as np
import sympy as sp

from wfs.errors import ExpressionSyntaxError, UnknownIdentifier

FUNCTIONS = ("exp", "sin", "cos", "sqrt", "abs")


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    index: int


@dataclass(frozen=True)
class Unary:
    operand: "Expr"


@dataclass(frozen=True)
class Bin:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Call:
    name: str
    arg: "Expr"


Expr = Union[Num, Var, Unary, Bin, Call]

_TOKEN = re.compile(r"\s*(?:(?P<num>\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)"
                    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^()]))")


def tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            bad = pos + len(text[pos:]) - len(text[pos:].lstrip())
            raise ExpressionSyntaxError(f"unexpected character {text[bad]!r}", bad)
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str):
        kind, val, pos = self.take()
        if val != value:
            found = "end of input" if kind == "end" else repr(val)
            raise ExpressionSyntaxError(f"expected {value!r}, found {found}", pos)

    def parse(self) -> Expr:
        node = self.sum()
        kind, val, pos = self.peek()
        if kind != "end":
            raise ExpressionSyntaxError(f"unexpected {val!r}", pos)
        return node

    def sum(self) -> Expr:
        node = self.product()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            node = Bin(op, node, self.product())
        return node

    def product(self) -> Expr:
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            node = Bin(op, node, self.unary())
        return node

    def unary(self) -> Expr:
        if self.peek()[0] == "op" and self.peek()[1] == "-":
            self.take()
            return Unary(self.unary())
        if self.peek()[0] == "op" and self.peek()[1] == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.take()
            return Bin("^", base, self.unary())
        return base

    def atom(self) -> Expr:
        kind, val, pos = self.take()
        if kind == "num":
            return Num(float(val))
        if kind == "name":
            if re.fullmatch(r"x\d+", val):
                return Var(int(val[1:]))
            if val in FUNCTIONS:
                self.expect("(")
                arg = self.sum()
                self.expect(")")
                return Call(val, arg)
            raise UnknownIdentifier(f"unknown identifier {val!r}", pos)
        if val == "(":
            node = self.sum()
            self.expect(")")
            return node
        found = "end of input" if kind == "end" else repr(val)
        raise ExpressionSyntaxError(f"unexpected {found}", pos)


def parse_expression(text: str) -> Expr:
    """Parse ``text``; raises ExpressionSyntaxError (with .position) or UnknownIdentifier."""
    if not text or not text.strip():
        raise ExpressionSyntaxError("empty expression", 0)
    return _Parser(text).parse()


# -- printing ------------------------------------------------------------------------

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4}


def _fmt_num(v: float) -> str:
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def _prec(node: Expr) -> int:
    if isinstance(node, Bin):
        return _PREC[node.op]
    if isinstance(node, Unary):
        return _PREC["neg"]
    if isinstance(node, Num) and node.value < 0:
        return _PREC["neg"]
    return 5


def to_string(node: Expr) -> str:
    """Print with the fewest parentheses that re-parse to the same tree."""
    if isinstance(node, Num):
        return _fmt_num(node.value)
    if isinstance(node, Var):
        return f"x{node.index}"
    if isinstance(node, Call):
        return f"{node.name}({to_string(node.arg)})"
    if isinstance(node, Unary):
        inner = to_string(node.operand)
        # the operand of unary minus is a unary or a power; anything looser needs parentheses
        if _prec(node.operand) < _PREC["neg"]:
            inner = f"({inner})"
        return f"-{inner}"
    p = _PREC[node.op]
    left, right = to_string(node.left), to_string(node.right)
    if node.op == "^":
        if _prec(node.left) <= p:
            left = f"({left})"
        if _prec(node.right) < _PREC["neg"]:
            right = f"({right})"
        return f"{left}^{right}"
    if _prec(node.left) < p:
        left = f"({left})"
    if _prec(node.right) <= p:
        right = f"({right})"
    return f"{left} {node.op} {right}" if p == 1 else f"{left}*{right}" if node.op == "*" else f"{left}/{right}"


# -- evaluation ----------------------------------------------------------------------


def variables(node: Expr) -> set[int]:
    if isinstance(node, Var):
        return {node.index}
    if isinstance(node, Num):
        return set()
    if isinstance(node, (Unary, Call)):
        return variables(node.operand if isinstance(node, Unary) else node.arg)
    return variables(node.left) | variables(node.right)


def dimension_of(node: Expr) -> int:
    used = variables(node)
    return max(used) + 1 if used else 0


_NP = {"exp": np.exp, "sin": np.sin, "cos": np.cos, "sqrt": np.sqrt, "abs": np.abs}


def evaluate(node: Expr, points) -> np.ndarray:
    """Evaluate at ``points`` of shape (..., n), vectorized.

    Division by zero and square roots of negative numbers raise ValueError.
    """
    pts = np.asarray(points, dtype=float)

    def ev(e):
        if isinstance(e, Num):
            return np.full(pts.shape[:-1], e.value)
        if isinstance(e, Var):
            if e.index >= pts.shape[-1]:
                raise ValueError(f"x{e.index} used on {pts.shape[-1]}-D points")
            return pts[..., e.index]
        if isinstance(e, Unary):
            return -ev(e.operand)
        if isinstance(e, Call):
            a = ev(e.arg)
            if e.name == "sqrt" and np.any(a < 0):
                raise ValueError("sqrt of a negative number")
            return _NP[e.name](a)
        a, b = ev(e.left), ev(e.right)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        if e.op == "/":
            if np.any(b == 0):
                raise ValueError("division by zero")
            return a / b
        with np.errstate(invalid="raise"):
            try:
                return np.power(a, b)
            except FloatingPointError as exc:
                raise ValueError("power of a negative base with fractional exponent") from exc

    return ev(node)


def evaluate_at(node: Expr, *coords: float) -> float:
    return float(evaluate(node, np.array(coords, dtype=float)[None, :])[0])


def to_sympy(node: Expr, symbols=None) -> sp.Expr:
    n = max(dimension_of(node), 1)
    xs = symbols if symbols is not None else sp.symbols(f"x0:{n}", real=True)

    def conv(e):
        if isinstance(e, Num):
            return sp.Integer(int(e.value)) if e.value == int(e.value) else sp.Float(e.value)
        if isinstance(e, Var):
            return xs[e.index]
        if isinstance(e, Unary):
            return -conv(e.operand)
        if isinstance(e, Call):
            return getattr(sp, {"abs": "Abs"}.get(e.name, e.name))(conv(e.arg))
        a, b = conv(e.left), conv(e.right)
        return {"+": lambda: a + b, "-": lambda: a - b, "*": lambda: a * b,
                "/": lambda: a / b, "^": lambda: a ** b}[e.op]()

    return conv(node)


# -- symbolic derivative on the tree --------------------------------------------------


def _is(e: Expr, v: float) -> bool:
    return isinstance(e, Num) and e.value == v


def _add(a, b):
    if _is(a, 0):
        return b
    if _is(b, 0):
        return a
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value + b.value)
    return Bin("+", a, b)


def _sub(a, b):
    if _is(b, 0):
        return a
    if _is(a, 0):
        return _neg(b)
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value - b.value)
    return Bin("-", a, b)


def _neg(a):
    if isinstance(a, Num):
        return Num(-a.value)
    if isinstance(a, Unary):
        return a.operand
    return Unary(a)


def _mul(a, b):
    if _is(a, 0) or _is(b, 0):
        return Num(0.0)
    if _is(a, 1):
        return b
    if _is(b, 1):
        return a
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value * b.value)
    if isinstance(b, Num):
        a, b = b, a
    if isinstance(a, Num) and isinstance(b, Bin) and b.op == "*" and isinstance(b.left, Num):
        return _mul(Num(a.value * b.left.value), b.right)
    if isinstance(a, Num) and a.value < 0:
        return _neg(_mul(Num(-a.value), b))
    if isinstance(b, Unary):
        return _neg(_mul(a, b.operand))
    if isinstance(a, Unary):
        return _neg(_mul(a.operand, b))
    return Bin("*", a, b)


def _div(a, b):
    if _is(a, 0):
        return Num(0.0)
    if _is(b, 1):
        return a
    return Bin("/", a, b)


def _pow(a, b):
    if _is(b, 1):
        return a
    if _is(b, 0):
        return Num(1.0)
    return Bin("^", a, b)


def derivative(node: Expr, axis: int, order: int = 1) -> Expr:
    """d^order/dx_axis^order of the tree, with light algebraic simplification."""
    for _ in range(order):
        node = _d(node, axis)
    return node


def _d(e: Expr, i: int) -> Expr:
    if isinstance(e, Num):
        return Num(0.0)
    if isinstance(e, Var):
        return Num(1.0 if e.index == i else 0.0)
    if isinstance(e, Unary):
        return _neg(_d(e.operand, i))
    if isinstance(e, Call):
        du = _d(e.arg, i)
        if _is(du, 0):
            return Num(0.0)
        u = e.arg
        outer = {
            "exp": lambda: e,
            "sin": lambda: Call("cos", u),
            "cos": lambda: _neg(Call("sin", u)),
            "sqrt": lambda: _div(Num(1.0), _mul(Num(2.0), e)),
            "abs": lambda: _div(u, e),
        }[e.name]()
        return _mul(outer, du)
    a, b = e.left, e.right
    if e.op == "+":
        return _add(_d(a, i), _d(b, i))
    if e.op == "-":
        return _sub(_d(a, i), _d(b, i))
    if e.op == "*":
        return _add(_mul(_d(a, i), b), _mul(a, _d(b, i)))
    if e.op == "/":
        return _div(_sub(_mul(_d(a, i), b), _mul(a, _d(b, i))), _pow(b, Num(2.0)))
    # power
    db = _d(b, i)
    if isinstance(b, Num) or _is(db, 0):
        if _is(_d(a, i), 0):
            return Num(0.0)
        exp_minus = Num(b.value - 1.0) if isinstance(b, Num) else _sub(b, Num(1.0))
        return _mul(_mul(b, _pow(a, exp_minus)), _d(a, i))
    # a^b with b depending on x_i needs log, which is outside the grammar
    raise ValueError("derivative of a variable exponent is not supported")


def partial(node: Expr, alpha) -> Expr:
    """Mixed partial derivative for a multi-index ``alpha``."""
    for axis, order in enumerate(alpha):
        node = derivative(node, axis, int(order))
    return node
