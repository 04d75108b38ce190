"""A small expression language for scalar fields with exact symbolic derivatives.

Grammar (``^`` binds tighter than unary minus, which binds tighter than ``*``)::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | power
    power  := atom ('^' ['-'] INTEGER)?
    atom   := NUMBER | NAME | FUNC '(' expr (',' expr)* ')' | '(' expr ')'

Names are coordinates ``x1 .. xn`` (layer order) and, for user-defined
operators, ``r``, ``p1 .. pm`` and ``M11 .. Mmm``.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .errors import DomainError, ExprSyntaxError, NonsmoothError, UnknownIdentifierError

FUNCTIONS = {"exp": 1, "log": 1, "sqrt": 1, "abs": 1, "sin": 1, "cos": 1, "min": 2, "max": 2}
NONSMOOTH = {"abs", "min", "max"}
_NAME = re.compile(r"x[1-9]\d*|p[1-9]\d*|M[1-9][1-9]|r")


class Expr:
    """Base node.  Subclasses are frozen dataclasses, so ``==`` is structural."""

    precedence = 100

    def __str__(self):
        return to_string(self)

    # arithmetic sugar, handy when building derivatives and operators
    def __add__(self, other):
        return add(self, _lift(other))

    def __radd__(self, other):
        return add(_lift(other), self)

    def __sub__(self, other):
        return sub(self, _lift(other))

    def __rsub__(self, other):
        return sub(_lift(other), self)

    def __mul__(self, other):
        return mul(self, _lift(other))

    def __rmul__(self, other):
        return mul(_lift(other), self)

    def __truediv__(self, other):
        return div(self, _lift(other))

    def __neg__(self):
        return neg(self)


@dataclass(frozen=True)
class Num(Expr):
    value: float


@dataclass(frozen=True)
class Var(Expr):
    name: str


@dataclass(frozen=True)
class Neg(Expr):
    arg: Expr
    precedence = 3


@dataclass(frozen=True)
class BinOp(Expr):
    op: str
    left: Expr
    right: Expr

    @property
    def precedence(self):
        return {"+": 1, "-": 1, "*": 2, "/": 2}[self.op]


@dataclass(frozen=True)
class Pow(Expr):
    base: Expr
    exponent: int
    precedence = 4


@dataclass(frozen=True)
class Call(Expr):
    func: str
    args: tuple


def _lift(v):
    return v if isinstance(v, Expr) else Num(float(v))


def var(i: int) -> Var:
    return Var(f"x{i}")


# -- parsing --------------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_]\w*)|(?P<op>[-+*/^(),]))"
)


def _tokenize(text: str):
    tokens, pos = [], 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            offset = pos + len(text[pos:]) - len(text[pos:].lstrip())
            raise ExprSyntaxError(f"unexpected character {text[offset]!r}", offset)
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text):
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        kind, text, off = self.take()
        if text != value or kind == "end":
            raise ExprSyntaxError(f"expected {value!r}", off)

    def parse(self):
        e = self.expr()
        kind, text, off = self.peek()
        if kind != "end":
            raise ExprSyntaxError(f"unexpected {text!r}", off)
        return e

    def expr(self):
        e = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            e = BinOp(op, e, self.term())
        return e

    def term(self):
        e = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            e = BinOp(op, e, self.unary())
        return e

    def unary(self):
        if self.peek()[:2] == ("op", "-"):
            self.take()
            arg = self.unary()
            # negative literals are canonical numbers
            if isinstance(arg, Num):
                return Num(-arg.value)
            return Neg(arg)
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[:2] == ("op", "^"):
            self.take()
            sign = 1
            if self.peek()[:2] == ("op", "-"):
                self.take()
                sign = -1
            kind, text, off = self.take()
            if kind != "num" or not re.fullmatch(r"\d+", text):
                raise ExprSyntaxError("exponent must be an integer literal", off)
            return Pow(base, sign * int(text))
        return base

    def atom(self):
        kind, text, off = self.take()
        if kind == "num":
            return Num(float(text))
        if kind == "name":
            if text in FUNCTIONS:
                self.expect("(")
                args = [self.expr()]
                while self.peek()[:2] == ("op", ","):
                    self.take()
                    args.append(self.expr())
                self.expect(")")
                if len(args) != FUNCTIONS[text]:
                    raise ExprSyntaxError(f"{text} takes {FUNCTIONS[text]} argument(s)", off)
                return Call(text, tuple(args))
            if not _NAME.fullmatch(text):
                raise UnknownIdentifierError(f"unknown identifier {text!r}", off)
            return Var(text)
        if kind == "op" and text == "(":
            e = self.expr()
            self.expect(")")
            return e
        if kind == "end":
            raise ExprSyntaxError("unexpected end of input", off)
        raise ExprSyntaxError(f"unexpected {text!r}", off)


def parse(text: str) -> Expr:
    """Parse an expression string; raises :class:`ExprSyntaxError` with a byte offset."""
    return _Parser(text).parse()


# -- printing -------------------------------------------------------------

def _fmt_num(v: float) -> str:
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(float(v))


def _prec(e: Expr) -> int:
    if isinstance(e, Num) and e.value < 0:
        return Neg.precedence
    return e.precedence


def to_string(e: Expr) -> str:
    """Canonical text; ``parse(to_string(e)) == e`` for parsed expressions."""
    if isinstance(e, Num):
        return _fmt_num(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Call):
        return f"{e.func}({', '.join(to_string(a) for a in e.args)})"
    if isinstance(e, Neg):
        inner = to_string(e.arg)
        if _prec(e.arg) < Neg.precedence or isinstance(e.arg, Num):
            inner = f"({inner})"
        return "-" + inner
    if isinstance(e, Pow):
        base = to_string(e.base)
        if _prec(e.base) <= Pow.precedence:
            base = f"({base})"
        return f"{base}^{e.exponent}"
    if isinstance(e, BinOp):
        p = e.precedence
        left, right = to_string(e.left), to_string(e.right)
        if _prec(e.left) < p:
            left = f"({left})"
        if _prec(e.right) <= p:
            right = f"({right})"
        sep = f" {e.op} " if e.op in "+-" else e.op
        return left + sep + right
    raise TypeError(f"not an expression node: {e!r}")


# -- smart constructors (constant folding) --------------------------------

def _is(e, v):
    return isinstance(e, Num) and e.value == v


def add(a, b):
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value + b.value)
    if _is(a, 0):
        return b
    if _is(b, 0):
        return a
    return BinOp("+", a, b)


def sub(a, b):
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value - b.value)
    if _is(b, 0):
        return a
    if _is(a, 0):
        return neg(b)
    return BinOp("-", a, b)


def mul(a, b):
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value * b.value)
    if _is(a, 0) or _is(b, 0):
        return Num(0.0)
    if _is(a, 1):
        return b
    if _is(b, 1):
        return a
    if _is(a, -1):
        return neg(b)
    if _is(b, -1):
        return neg(a)
    return BinOp("*", a, b)


def div(a, b):
    if isinstance(a, Num) and isinstance(b, Num) and b.value != 0:
        return Num(a.value / b.value)
    if _is(a, 0):
        return Num(0.0)
    if _is(b, 1):
        return a
    return BinOp("/", a, b)


def neg(a):
    if isinstance(a, Num):
        return Num(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def power(a, k: int):
    if k == 0:
        return Num(1.0)
    if k == 1:
        return a
    if isinstance(a, Num) and a.value != 0:
        return Num(a.value ** k)
    return Pow(a, k)


def call(f, *args):
    return Call(f, tuple(args))


# -- inspection -----------------------------------------------------------

def variables(e: Expr) -> frozenset:
    if isinstance(e, Var):
        return frozenset([e.name])
    if isinstance(e, Num):
        return frozenset()
    return frozenset().union(*(variables(c) for c in _children(e)))


def _children(e):
    if isinstance(e, Neg):
        return (e.arg,)
    if isinstance(e, BinOp):
        return (e.left, e.right)
    if isinstance(e, Pow):
        return (e.base,)
    if isinstance(e, Call):
        return e.args
    return ()


def is_smooth(e: Expr) -> bool:
    if isinstance(e, Call) and e.func in NONSMOOTH:
        return False
    return all(is_smooth(c) for c in _children(e))


def max_coordinate(e: Expr) -> int:
    idx = [int(v[1:]) for v in variables(e) if v.startswith("x")]
    return max(idx, default=0)


# -- evaluation -----------------------------------------------------------

def coordinate_env(x) -> dict:
    """Environment binding ``x1..xn`` to the last axis of ``x``."""
    x = np.asarray(x, dtype=float)
    return {f"x{i + 1}": x[..., i] for i in range(x.shape[-1])}


def evaluate(e: Expr, x=None, env: Mapping | None = None):
    """Evaluate at a point (or stacked points ``(..., n)``), or against ``env``.

    Results broadcast to the batch shape of the inputs.
    """
    if env is None:
        env = coordinate_env(x) if x is not None else {}
    shape = np.broadcast_shapes(*(np.shape(v) for v in env.values())) if env else ()
    with np.errstate(all="ignore"):
        out = _eval(e, env)
    out = np.broadcast_to(np.asarray(out, dtype=float), shape)
    return float(out) if out.ndim == 0 else out.copy()


def _eval(e, env):
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Var):
        try:
            return env[e.name]
        except KeyError:
            raise DomainError(f"variable {e.name} is not bound (dimension too small?)") from None
    if isinstance(e, Neg):
        return -_eval(e.arg, env)
    if isinstance(e, BinOp):
        a, b = _eval(e.left, env), _eval(e.right, env)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        if np.any(np.asarray(b) == 0):
            raise DomainError("division by zero")
        return a / b
    if isinstance(e, Pow):
        b = _eval(e.base, env)
        if e.exponent < 0:
            if np.any(np.asarray(b) == 0):
                raise DomainError("negative power of zero")
            return 1.0 / np.asarray(b, dtype=float) ** (-e.exponent)
        return np.asarray(b, dtype=float) ** e.exponent
    if isinstance(e, Call):
        args = [_eval(a, env) for a in e.args]
        f = e.func
        if f == "log":
            if np.any(np.asarray(args[0]) <= 0):
                raise DomainError("log of a non-positive number")
            return np.log(args[0])
        if f == "sqrt":
            if np.any(np.asarray(args[0]) < 0):
                raise DomainError("sqrt of a negative number")
            return np.sqrt(args[0])
        if f == "min":
            return np.minimum(*args)
        if f == "max":
            return np.maximum(*args)
        return {"exp": np.exp, "abs": np.abs, "sin": np.sin, "cos": np.cos}[f](args[0])
    raise TypeError(f"not an expression node: {e!r}")


# -- differentiation ------------------------------------------------------

def differentiate(e: Expr, i) -> Expr:
    """Symbolic partial derivative with respect to ``x_i`` (or a variable name)."""
    name = i if isinstance(i, str) else f"x{int(i)}"
    return _d(e, name)


def _d(e, x):
    if x not in variables(e):
        return Num(0.0)
    if isinstance(e, Var):
        return Num(1.0)
    if isinstance(e, Neg):
        return neg(_d(e.arg, x))
    if isinstance(e, BinOp):
        a, b = e.left, e.right
        da, db = _d(a, x), _d(b, x)
        if e.op == "+":
            return add(da, db)
        if e.op == "-":
            return sub(da, db)
        if e.op == "*":
            return add(mul(da, b), mul(a, db))
        return div(sub(mul(da, b), mul(a, db)), power(b, 2))
    if isinstance(e, Pow):
        k = e.exponent
        return mul(mul(Num(float(k)), power(e.base, k - 1)), _d(e.base, x))
    if isinstance(e, Call):
        if e.func in NONSMOOTH:
            raise NonsmoothError(f"{e.func} is not differentiable; use finite differences")
        u = e.args[0]
        du = _d(u, x)
        if e.func == "exp":
            return mul(du, e)
        if e.func == "log":
            return div(du, u)
        if e.func == "sqrt":
            return div(du, mul(Num(2.0), e))
        if e.func == "sin":
            return mul(du, call("cos", u))
        return neg(mul(du, call("sin", u)))
    raise TypeError(f"not an expression node: {e!r}")


class Jet:
    """Cached symbolic gradient and Hessian of an expression in ``x1..xn``."""

    def __init__(self, e: Expr, n: int):
        self.expr, self.n = e, n
        self.grad = [differentiate(e, i + 1) for i in range(n)]
        self.hess = [[None] * n for _ in range(n)]
        for a in range(n):
            for b in range(a, n):
                self.hess[a][b] = self.hess[b][a] = differentiate(self.grad[a], b + 1)

    def __call__(self, x):
        """Return ``(value, grad, hess)`` with shapes ``(...)``, ``(..., n)``, ``(..., n, n)``."""
        x = np.asarray(x, dtype=float)
        env = coordinate_env(x)
        batch = x.shape[:-1]

        def ev(ex):
            return np.broadcast_to(evaluate(ex, env=env), batch)

        value = ev(self.expr)
        grad = np.stack([ev(g) for g in self.grad], axis=-1) if self.n else np.zeros(batch + (0,))
        hess = np.empty(batch + (self.n, self.n))
        for a in range(self.n):
            for b in range(self.n):
                hess[..., a, b] = ev(self.hess[a][b])
        return value, grad, hess
