"""Scalar expression trees over the chart coordinates ``(x1..xm, y1..ym)``.

Grammar accepted by :func:`parse`::

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := '-' unary | power
    power   := atom ('^' unary)?          # right associative, constant exponent
    atom    := NUMBER | 'pi' | VAR | FUNC '(' expr ')' | '(' expr ')'
    VAR     := 'x' INDEX | 'y' INDEX      # 1-based
    FUNC    := 'exp' | 'log' | 'sin' | 'cos' | 'sqrt'

Exponents must fold to a constant.  Integer exponents are evaluated by
repeated multiplication (valid at a zero base); other exponents need a
positive base.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from numbers import Real

import numpy as np

FUNCTIONS = ("exp", "log", "sin", "cos", "sqrt")


class ParseError(ValueError):
    def __init__(self, message: str, text: str, offset: int):
        line = text.count("\n", 0, offset) + 1
        col = offset - (text.rfind("\n", 0, offset) + 1) + 1
        self.line = line
        self.column = col
        super().__init__(f"{message} at line {line}, column {col}")


class DomainError(ArithmeticError):
    """Evaluation left the domain of a node (log of non-positive, 1/0, ...)."""

    def __init__(self, node: "ScalarExpr", detail: str):
        self.node = node
        super().__init__(f"{detail} in node `{node}`")


class ScalarExpr:
    """Immutable expression node.  Arithmetic operators build new trees."""

    __slots__ = ()

    def __add__(self, other):
        return _fold(Add(self, as_expr(other)))

    def __radd__(self, other):
        return _fold(Add(as_expr(other), self))

    def __sub__(self, other):
        return _fold(Sub(self, as_expr(other)))

    def __rsub__(self, other):
        return _fold(Sub(as_expr(other), self))

    def __mul__(self, other):
        return _fold(Mul(self, as_expr(other)))

    def __rmul__(self, other):
        return _fold(Mul(as_expr(other), self))

    def __truediv__(self, other):
        return _fold(Div(self, as_expr(other)))

    def __rtruediv__(self, other):
        return _fold(Div(as_expr(other), self))

    def __neg__(self):
        return _fold(Neg(self))

    def __pow__(self, exponent):
        if isinstance(exponent, Const):
            exponent = exponent.value
        return _fold(Pow(self, float(exponent)))

    def children(self) -> tuple["ScalarExpr", ...]:
        return ()

    def evaluate(self, point) -> float:
        return evaluate(self, point)


@dataclass(frozen=True, slots=True, eq=True)
class Var(ScalarExpr):
    kind: str  # "x" or "y"
    index: int  # 0-based

    def __str__(self):
        return f"{self.kind}{self.index + 1}"


@dataclass(frozen=True, slots=True, eq=True)
class Const(ScalarExpr):
    value: float

    def __str__(self):
        return repr(float(self.value))


@dataclass(frozen=True, slots=True, eq=True)
class Add(ScalarExpr):
    left: ScalarExpr
    right: ScalarExpr

    def children(self):
        return (self.left, self.right)

    def __str__(self):
        return f"({self.left} + {self.right})"


@dataclass(frozen=True, slots=True, eq=True)
class Sub(ScalarExpr):
    left: ScalarExpr
    right: ScalarExpr

    def children(self):
        return (self.left, self.right)

    def __str__(self):
        return f"({self.left} - {self.right})"


@dataclass(frozen=True, slots=True, eq=True)
class Mul(ScalarExpr):
    left: ScalarExpr
    right: ScalarExpr

    def children(self):
        return (self.left, self.right)

    def __str__(self):
        return f"({self.left} * {self.right})"


@dataclass(frozen=True, slots=True, eq=True)
class Div(ScalarExpr):
    left: ScalarExpr
    right: ScalarExpr

    def children(self):
        return (self.left, self.right)

    def __str__(self):
        return f"({self.left} / {self.right})"


@dataclass(frozen=True, slots=True, eq=True)
class Neg(ScalarExpr):
    arg: ScalarExpr

    def children(self):
        return (self.arg,)

    def __str__(self):
        return f"(-{self.arg})"


@dataclass(frozen=True, slots=True, eq=True)
class Pow(ScalarExpr):
    base: ScalarExpr
    exponent: float

    @property
    def is_integer(self) -> bool:
        return float(self.exponent).is_integer()

    def children(self):
        return (self.base,)

    def __str__(self):
        e = int(self.exponent) if self.is_integer else self.exponent
        return f"({self.base} ^ {e})"


@dataclass(frozen=True, slots=True, eq=True)
class Func(ScalarExpr):
    name: str
    arg: ScalarExpr

    def __post_init__(self):
        if self.name not in FUNCTIONS:
            raise ValueError(f"unknown function {self.name!r}")

    def children(self):
        return (self.arg,)

    def __str__(self):
        return f"{self.name}({self.arg})"


def as_expr(value) -> ScalarExpr:
    if isinstance(value, ScalarExpr):
        return value
    if isinstance(value, (Real, np.floating, np.integer)):
        return Const(float(value))
    if isinstance(value, str):
        raise TypeError("strings must go through parse(); refusing implicit parse")
    raise TypeError(f"cannot convert {type(value).__name__} to ScalarExpr")


def x(i: int) -> Var:
    """Base coordinate ``x^i`` (1-based, as written in formulas)."""
    return Var("x", i - 1)


def y(i: int) -> Var:
    """Velocity coordinate ``y^i`` (1-based)."""
    return Var("y", i - 1)


def exp(e) -> ScalarExpr:
    return _fold(Func("exp", as_expr(e)))


def log(e) -> ScalarExpr:
    return _fold(Func("log", as_expr(e)))


def sin(e) -> ScalarExpr:
    return _fold(Func("sin", as_expr(e)))


def cos(e) -> ScalarExpr:
    return _fold(Func("cos", as_expr(e)))


def sqrt(e) -> ScalarExpr:
    return _fold(Func("sqrt", as_expr(e)))


def _fold(node: ScalarExpr) -> ScalarExpr:
    # constant folding only; no algebraic rewriting
    kids = node.children()
    if kids and all(isinstance(k, Const) for k in kids):
        try:
            return Const(evaluate(node, ()))
        except DomainError:
            return node
    return node


def variables(expr: ScalarExpr) -> set[Var]:
    seen: set[Var] = set()
    stack = [expr]
    while stack:
        node = stack.pop()
        if isinstance(node, Var):
            seen.add(node)
        stack.extend(node.children())
    return seen


def check_dimension(expr: ScalarExpr, m: int) -> None:
    for v in variables(expr):
        if v.index >= m:
            raise ValueError(f"variable {v} exceeds chart dimension m={m}")


def _var_value(node: Var, point) -> float:
    m = len(point) // 2
    if node.index >= m:
        raise IndexError(f"variable {node} outside chart of dimension {m}")
    return float(point[node.index if node.kind == "x" else m + node.index])


def evaluate(expr: ScalarExpr, point) -> float:
    """Plain floating-point evaluation (no derivatives)."""
    if isinstance(expr, Const):
        return expr.value
    if isinstance(expr, Var):
        return _var_value(expr, point)
    if isinstance(expr, Add):
        return evaluate(expr.left, point) + evaluate(expr.right, point)
    if isinstance(expr, Sub):
        return evaluate(expr.left, point) - evaluate(expr.right, point)
    if isinstance(expr, Mul):
        return evaluate(expr.left, point) * evaluate(expr.right, point)
    if isinstance(expr, Neg):
        return -evaluate(expr.arg, point)
    if isinstance(expr, Div):
        den = evaluate(expr.right, point)
        if den == 0.0:
            raise DomainError(expr, "division by zero")
        return evaluate(expr.left, point) / den
    if isinstance(expr, Pow):
        base = evaluate(expr.base, point)
        if expr.is_integer:
            p = int(expr.exponent)
            if p < 0 and base == 0.0:
                raise DomainError(expr, "negative power of zero")
            return base**p
        if base <= 0.0:
            raise DomainError(expr, "non-integer power of a non-positive base")
        return base**expr.exponent
    if isinstance(expr, Func):
        a = evaluate(expr.arg, point)
        if expr.name == "log":
            if a <= 0.0:
                raise DomainError(expr, "log of a non-positive value")
            return math.log(a)
        if expr.name == "sqrt":
            if a <= 0.0:
                raise DomainError(expr, "sqrt of a non-positive value")
            return math.sqrt(a)
        return getattr(math, expr.name)(a)
    raise TypeError(f"unknown node {expr!r}")


# --------------------------------------------------------------------------
# parsing

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^(),]))"
)


def _tokenize(text: str):
    pos = 0
    tokens = []
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        mt = _TOKEN.match(text, pos)
        if mt is None or mt.end() == pos:
            at = pos + (len(text[pos:]) - len(text[pos:].lstrip()))
            raise ParseError(f"unexpected character {text[at]!r}", text, at)
        kind = mt.lastgroup
        start = mt.start(kind)
        tokens.append((kind, mt.group(kind), start))
        pos = mt.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str, m: int | None):
        self.text = text
        self.m = m
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def fail(self, msg, tok=None):
        tok = tok or self.peek()
        raise ParseError(msg, self.text, tok[2])

    def expect(self, value):
        tok = self.take()
        if tok[1] != value:
            self.fail(f"expected {value!r}, found {tok[1] or 'end of input'!r}", tok)
        return tok

    def parse(self):
        if self.peek()[0] == "end":
            self.fail("empty expression")
        node = self.expr()
        if self.peek()[0] != "end":
            self.fail(f"unexpected token {self.peek()[1]!r}")
        return node

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-"):
            op = self.take()[1]
            rhs = self.term()
            node = node + rhs if op == "+" else node - rhs
        return node

    def term(self):
        node = self.unary()
        while self.peek()[1] in ("*", "/"):
            op = self.take()[1]
            rhs = self.unary()
            node = node * rhs if op == "*" else node / rhs
        return node

    def unary(self):
        if self.peek()[1] == "-":
            self.take()
            return -self.unary()
        if self.peek()[1] == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[1] == "^":
            tok = self.take()
            exponent = self.unary()
            if not isinstance(exponent, Const):
                self.fail("exponent must be a constant expression", tok)
            return base**exponent.value
        return base

    def atom(self):
        tok = self.take()
        kind, text, _ = tok
        if kind == "num":
            return Const(float(text))
        if kind == "name":
            if text == "pi":
                return Const(math.pi)
            if text in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return _fold(Func(text, arg))
            mv = re.fullmatch(r"([xy])(\d+)", text)
            if mv:
                idx = int(mv.group(2))
                if idx < 1 or (self.m is not None and idx > self.m):
                    self.fail(f"variable {text} outside 1..{self.m}", tok)
                return Var(mv.group(1), idx - 1)
            self.fail(f"unknown name {text!r}", tok)
        if text == "(":
            node = self.expr()
            self.expect(")")
            return node
        self.fail(f"unexpected token {text or 'end of input'!r}", tok)


def parse(text: str, m: int | None = None) -> ScalarExpr:
    """Parse an infix string.  ``m`` bounds the variable indices when given."""
    return _Parser(str(text), m).parse()


def parse_grid(rows, m: int | None = None) -> np.ndarray:
    """Parse a nested list of strings/numbers into an object array of nodes."""
    arr = np.asarray(rows, dtype=object)
    out = np.empty(arr.shape, dtype=object)
    for idx, item in np.ndenumerate(arr):
        out[idx] = parse(item, m) if isinstance(item, str) else as_expr(item)
    return out
