"""Arithmetic expressions in one variable ``x`` for coefficient functions.

Grammar (whitespace is insignificant)::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | power
    power  := atom ('^' unary)?          # right-associative
    atom   := number | 'x' | func '(' expr ')' | '(' expr ')'
    func   := exp | log | sqrt | abs

Unary minus binds looser than ``^``, so ``-2^2 == -4`` while ``2^-1 == 0.5``.
Numbers are decimal or scientific (``1.5``, ``.5``, ``2e-3``).
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import DivisionByZero, ExprSyntaxError, NonFinite, UnknownIdentifier

__all__ = [
    "Num", "Var", "Neg", "BinOp", "Call", "Expr",
    "parse", "evaluate", "pretty_print", "compile_expr",
]

FUNCTIONS = ("exp", "log", "sqrt", "abs")


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    pass


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


Expr = Union[Num, Var, Neg, BinOp, Call]

_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^()−])
    """,
    re.VERBOSE,
)


def _tokenize(src):
    tokens = []
    pos = 0
    while pos < len(src):
        m = _TOKEN.match(src, pos)
        if m is None:
            raise ExprSyntaxError(f"unexpected character {src[pos]!r}", src, pos + 1)
        kind = m.lastgroup
        if kind != "ws":
            text = m.group()
            if text == "−":
                text = "-"
            tokens.append((kind, text, pos + 1))
        pos = m.end()
    tokens.append(("end", "", len(src) + 1))
    return tokens


class _Parser:
    def __init__(self, src):
        self.src = src
        self.tokens = _tokenize(src)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def fail(self, msg, tok=None):
        tok = tok or self.peek()
        found = "end of input" if tok[0] == "end" else repr(tok[1])
        raise ExprSyntaxError(f"{msg}, found {found}", self.src, tok[2])

    def expect(self, text):
        tok = self.peek()
        if tok[1] != text or tok[0] != "op":
            self.fail(f"expected {text!r}")
        return self.take()

    def parse(self):
        node = self.expr()
        if self.peek()[0] != "end":
            self.fail("unexpected trailing input")
        return node

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self):
        if self.peek()[1] == "-" and self.peek()[0] == "op":
            self.take()
            return Neg(self.unary())
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[1] == "^" and self.peek()[0] == "op":
            self.take()
            return BinOp("^", base, self.unary())
        return base

    def atom(self):
        tok = self.peek()
        kind, text, _ = tok
        if kind == "num":
            self.take()
            return Num(float(text))
        if kind == "name":
            self.take()
            if text == "x":
                return Var()
            if text in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Call(text, arg)
            raise UnknownIdentifier(f"unknown identifier {text!r}", self.src, tok[2])
        if kind == "op" and text == "(":
            self.take()
            node = self.expr()
            self.expect(")")
            return node
        self.fail("expected a number, 'x', a function or '('")


def parse(src: str) -> Expr:
    """Parse ``src`` into an immutable expression tree."""
    if not src or not src.strip():
        raise ExprSyntaxError("empty expression", src or "", 1)
    return _Parser(src).parse()


# precedence levels used by pretty_print
_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def pretty_print(e: Expr) -> str:
    """Render ``e`` with the minimal parentheses that parse back to ``e``."""
    return _pp(e, 0)


def _fmt(v):
    text = repr(float(v))
    if text in ("inf", "nan", "-inf"):
        raise ValueError(f"cannot print non-finite literal {text}")
    return text


def _pp(e, ctx):
    # ctx: 0 free, 1 right of +/-, 2 left of * /, 3 right of * /,
    # 4 operand of unary minus or exponent, 5 base of ^
    if isinstance(e, Num):
        s = _fmt(abs(e.value))
        if math.copysign(1.0, e.value) < 0:
            return _wrap(f"-{s}", ctx == 5)
        return s
    if isinstance(e, Var):
        return "x"
    if isinstance(e, Call):
        return f"{e.func}({_pp(e.arg, 0)})"
    if isinstance(e, Neg):
        return _wrap("-" + _pp(e.operand, 4), ctx == 5)
    if e.op == "^":
        return _wrap(f"{_pp(e.left, 5)}^{_pp(e.right, 4)}", ctx == 5)
    if _PREC[e.op] == 1:
        s = f"{_pp(e.left, 0)} {e.op} {_pp(e.right, 1)}"
        return _wrap(s, ctx != 0)
    s = f"{_pp(e.left, 2)} {e.op} {_pp(e.right, 3)}"
    return _wrap(s, ctx in (3, 4, 5))


def _wrap(s, cond):
    return f"({s})" if cond else s


def evaluate(e: Expr, x: float) -> float:
    """Evaluate ``e`` at a scalar ``x``.

    Domain errors (log or sqrt of a negative number, non-integer power of a
    negative base) and overflow raise NonFinite; division by zero raises
    DivisionByZero.
    """
    v = _eval(e, float(x))
    if not math.isfinite(v):
        raise NonFinite(f"expression evaluates to {v!r} at x={x!r}")
    return v


def _eval(e, x):
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Var):
        return x
    if isinstance(e, Neg):
        return -_eval(e.operand, x)
    if isinstance(e, Call):
        a = _eval(e.arg, x)
        try:
            if e.func == "exp":
                return math.exp(a)
            if e.func == "log":
                return math.log(a)
            if e.func == "sqrt":
                return math.sqrt(a)
            return abs(a)
        except (ValueError, OverflowError) as exc:
            raise NonFinite(f"{e.func}({a!r}) at x={x!r}: {exc}") from None
    a = _eval(e.left, x)
    b = _eval(e.right, x)
    op = e.op
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    if op == "/":
        if b == 0.0:
            raise DivisionByZero(f"division by zero at x={x!r}")
        return a / b
    if a < 0.0 and b != int(b):
        raise NonFinite(f"non-integer power {b!r} of negative base {a!r}")
    if a == 0.0 and b < 0.0:
        raise DivisionByZero(f"zero raised to negative power at x={x!r}")
    try:
        return math.pow(a, b)
    except OverflowError:
        raise NonFinite(f"overflow in {a!r}^{b!r}") from None


class compile_expr:
    """Vectorized evaluator for an expression over numpy arrays.

    Unlike :func:`evaluate` this reports failures only once, after the whole
    array is evaluated: any non-finite output raises NonFinite (with the first
    offending ``x``) unless ``strict=False``, in which case nan/inf are
    returned in place.
    """

    def __init__(self, e: Expr, strict: bool = True):
        self.expr = e
        self.strict = strict

    def __call__(self, x):
        arr = np.asarray(x, dtype=float)
        with np.errstate(all="ignore"):
            out = np.broadcast_to(_veval(self.expr, arr), arr.shape).astype(float)
        if self.strict and not np.all(np.isfinite(out)):
            bad = arr[~np.isfinite(out)] if arr.ndim else arr
            first = float(np.ravel(bad)[0])
            raise NonFinite(f"{pretty_print(self.expr)} is not finite at x={first!r}")
        return out if arr.ndim else float(out)

    def __repr__(self):
        return f"compile_expr({pretty_print(self.expr)!r})"


def _veval(e, x):
    if isinstance(e, Num):
        return np.float64(e.value)
    if isinstance(e, Var):
        return x
    if isinstance(e, Neg):
        return -_veval(e.operand, x)
    if isinstance(e, Call):
        a = _veval(e.arg, x)
        if e.func == "exp":
            return np.exp(a)
        if e.func == "log":
            return np.where(a > 0, np.log(np.where(a > 0, a, 1.0)), np.nan)
        if e.func == "sqrt":
            return np.sqrt(a)
        return np.abs(a)
    a = _veval(e.left, x)
    b = _veval(e.right, x)
    op = e.op
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    if op == "/":
        return np.where(b != 0, a / np.where(b != 0, b, 1.0), np.nan)
    # integral exponents of negative bases stay real under np.power
    return np.power(a, b)
