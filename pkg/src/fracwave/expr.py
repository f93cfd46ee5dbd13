"""
Small arithmetic expression language for order fields and initial data.

Grammar (lowest to highest precedence)::

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := ('-' | '+') unary | power
    power   := primary ('^' unary)?          # right associative
    primary := NUMBER | NAME | NAME '(' expr ')' | '(' expr ')'

Evaluation is vectorized: bindings may be numpy arrays, in which case the
result is an array of the broadcast shape.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Mapping, Union

import numpy as np

from .errors import FracWaveError

VARIABLES = frozenset({"x", "y", "z", "t", "u"})
CONSTANTS = {"pi": np.pi}


def _sech(a):
    return 1.0 / np.cosh(a)


FUNCTIONS = {
    "sin": np.sin,
    "cos": np.cos,
    "tan": np.tan,
    "tanh": np.tanh,
    "exp": np.exp,
    "sech": _sech,
    "abs": np.abs,
    "sqrt": np.sqrt,
    "sinh": np.sinh,
    "cosh": np.cosh,
}


class ExprSyntaxError(FracWaveError, SyntaxError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class UnknownIdentifier(FracWaveError, NameError):
    pass


class UnboundVariable(FracWaveError, NameError):
    pass


class DomainError(FracWaveError, ArithmeticError):
    pass


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Const:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Expr"


Expr = Union[Num, Var, Const, Neg, BinOp, Call]

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_]\w*)|(?P<op>[-+*/^()]))"
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if m is None:
            off = pos + len(text[pos:]) - len(text[pos:].lstrip())
            raise ExprSyntaxError(f"unexpected character {text[off]!r}", off)
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str):
        kind, val, off = self.peek()
        if val != value or kind != "op":
            what = "end of input" if kind == "end" else repr(val)
            raise ExprSyntaxError(f"expected {value!r}, found {what}", off)
        self.take()

    def parse(self) -> Expr:
        node = self.expr()
        kind, val, off = self.peek()
        if kind != "end":
            raise ExprSyntaxError(f"unexpected {val!r}", off)
        return node

    def expr(self) -> Expr:
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Expr:
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self) -> Expr:
        kind, val, _ = self.peek()
        if kind == "op" and val == "-":
            self.take()
            return Neg(self.unary())
        if kind == "op" and val == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self) -> Expr:
        base = self.primary()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.take()
            return BinOp("^", base, self.unary())
        return base

    def primary(self) -> Expr:
        kind, val, off = self.take()
        if kind == "num":
            return Num(float(val))
        if kind == "name":
            if val in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Call(val, arg)
            if val in CONSTANTS:
                return Const(val)
            if val in VARIABLES:
                return Var(val)
            raise UnknownIdentifier(f"unknown identifier {val!r} at offset {off}")
        if kind == "op" and val == "(":
            node = self.expr()
            self.expect(")")
            return node
        what = "end of input" if kind == "end" else repr(val)
        raise ExprSyntaxError(f"unexpected {what}", off)


def parse(text: str) -> Expr:
    return _Parser(text).parse()


def free_variables(e: Expr) -> set[str]:
    if isinstance(e, Var):
        return {e.name}
    if isinstance(e, Neg):
        return free_variables(e.operand)
    if isinstance(e, BinOp):
        return free_variables(e.left) | free_variables(e.right)
    if isinstance(e, Call):
        return free_variables(e.arg)
    return set()


_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 4}


def to_string(e: Expr) -> str:
    """Print with the minimum parentheses needed to reparse the same tree."""
    return _fmt(e, 0)


def _fmt(e: Expr, ctx: int) -> str:
    if isinstance(e, Num):
        s = repr(e.value)
        return s
    if isinstance(e, (Var, Const)):
        return e.name
    if isinstance(e, Call):
        return f"{e.func}({_fmt(e.arg, 0)})"
    if isinstance(e, Neg):
        s = "-" + _fmt(e.operand, 3)
        return f"({s})" if ctx > 3 else s
    p = _PREC[e.op]
    if e.op == "^":
        # base binds tighter than unary minus; exponent may be a unary
        s = f"{_fmt(e.left, 5)}^{_fmt(e.right, 3)}"
    else:
        s = f"{_fmt(e.left, p)}{e.op}{_fmt(e.right, p + 1)}"
    return f"({s})" if ctx > p else s


def _pow(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    bad = (a < 0) & (b != np.round(b))
    if np.any(bad):
        raise DomainError("negative base raised to a non-integer power")
    if np.any((a == 0) & (b < 0)):
        raise DomainError("zero raised to a negative power")
    return np.power(a, b)


def evaluate(e: Expr, bindings: Mapping[str, object] | None = None):
    """Evaluate `e`; returns a float for scalar bindings, else an array."""
    bindings = bindings or {}
    missing = free_variables(e) - set(bindings)
    if missing:
        raise UnboundVariable(f"unbound variable(s): {', '.join(sorted(missing))}")
    with np.errstate(all="ignore"):
        out = _eval(e, bindings)
    if not np.all(np.isfinite(out)):
        raise DomainError("expression evaluated to a non-finite value")
    if np.ndim(out) == 0:
        return float(out)
    return out


def _eval(e: Expr, b):
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Const):
        return CONSTANTS[e.name]
    if isinstance(e, Var):
        return b[e.name]
    if isinstance(e, Neg):
        return -_eval(e.operand, b)
    if isinstance(e, Call):
        arg = _eval(e.arg, b)
        if e.func == "sqrt" and np.any(np.asarray(arg) < 0):
            raise DomainError("sqrt of a negative number")
        return FUNCTIONS[e.func](arg)
    lhs = _eval(e.left, b)
    rhs = _eval(e.right, b)
    if e.op == "+":
        return lhs + rhs
    if e.op == "-":
        return lhs - rhs
    if e.op == "*":
        return lhs * rhs
    if e.op == "/":
        if np.any(np.asarray(rhs) == 0):
            raise DomainError("division by zero")
        return lhs / rhs
    return _pow(lhs, rhs)


def compile_expr(text_or_expr):
    """Return a callable f(**bindings) for an expression string or AST."""
    e = parse(text_or_expr) if isinstance(text_or_expr, str) else text_or_expr

    def f(**bindings):
        return evaluate(e, bindings)

    f.expr = e
    return f
