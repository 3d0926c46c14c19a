"""Small arithmetic language for scalar functions of time ``t`` and state ``x``.

Grammar::

    expr    := term (("+" | "-") term)*
    term    := unary (("*" | "/") unary)*
    unary   := "-" unary | primary
    primary := NUMBER | "t" | "x" | NAME "(" expr ("," expr)* ")" | "(" expr ")"

Functions: ``min(a,b)``, ``max(a,b)``, ``abs(a)``, ``exp(a)``, ``log(a)``,
``pow(a,b)``.  Evaluation broadcasts over numpy arrays, so a whole lattice
layer can be evaluated in one call.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import (
    DivisionByZero,
    EmptyInput,
    LogOfNonPositive,
    NonFiniteResult,
    UnbalancedParenthesis,
    UnexpectedToken,
    UnknownIdentifier,
)

VARIABLES = ("t", "x")
FUNCTIONS = {"min": 2, "max": 2, "abs": 1, "exp": 1, "log": 1, "pow": 2}
_PRECEDENCE = {"+": 1, "-": 1, "*": 2, "/": 2}


@dataclass(frozen=True)
class Num:
    value: float

    def __post_init__(self):
        if not math.isfinite(self.value) or self.value < 0:
            raise ValueError(f"literal must be finite and non-negative, got {self.value!r}")


@dataclass(frozen=True)
class Var:
    name: str

    def __post_init__(self):
        if self.name not in VARIABLES:
            raise ValueError(f"unknown variable {self.name!r}")


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"

    def __post_init__(self):
        if self.op not in _PRECEDENCE:
            raise ValueError(f"unknown operator {self.op!r}")


@dataclass(frozen=True)
class Neg:
    operand: "Expr"


@dataclass(frozen=True)
class Call:
    func: str
    args: tuple

    def __post_init__(self):
        if FUNCTIONS.get(self.func) != len(self.args):
            raise ValueError(f"{self.func} takes {FUNCTIONS.get(self.func)} arguments")


Expr = Union[Num, Var, BinOp, Neg, Call]


def const(value: float) -> Expr:
    """Literal for any finite float, negatives wrapped in ``Neg``."""
    value = float(value)
    if value < 0:
        return Neg(Num(-value))
    return Num(value)


# --------------------------------------------------------------------------
# parsing
# --------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/(),])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Token:
    kind: str  # num | name | op | end
    text: str
    offset: int


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise UnexpectedToken(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup
        if kind != "ws":
            tokens.append(_Token(kind, m.group(), pos))
        pos = m.end()
    tokens.append(_Token("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.i = 0
        self.depth = 0

    @property
    def tok(self) -> _Token:
        return self.tokens[self.i]

    def advance(self) -> _Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def unexpected(self, expecting: str):
        tok = self.tok
        if tok.kind == "end":
            if self.depth > 0:
                raise UnbalancedParenthesis("missing ')'", tok.offset)
            raise UnexpectedToken(f"unexpected end of input, expected {expecting}", tok.offset)
        if tok.text == ")" and self.depth == 0:
            raise UnbalancedParenthesis("unmatched ')'", tok.offset)
        raise UnexpectedToken(f"unexpected {tok.text!r}, expected {expecting}", tok.offset)

    def expect(self, text: str):
        if self.tok.text != text or self.tok.kind != "op":
            self.unexpected(repr(text))
        return self.advance()

    def parse(self) -> Expr:
        node = self.expr()
        if self.tok.kind != "end":
            self.unexpected("end of input")
        return node

    def expr(self) -> Expr:
        node = self.term()
        while self.tok.kind == "op" and self.tok.text in "+-":
            op = self.advance().text
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Expr:
        node = self.unary()
        while self.tok.kind == "op" and self.tok.text in "*/":
            op = self.advance().text
            node = BinOp(op, node, self.unary())
        return node

    def unary(self) -> Expr:
        if self.tok.kind == "op" and self.tok.text == "-":
            self.advance()
            return Neg(self.unary())
        return self.primary()

    def primary(self) -> Expr:
        tok = self.tok
        if tok.kind == "num":
            self.advance()
            return Num(float(tok.text))
        if tok.kind == "name":
            self.advance()
            if tok.text in VARIABLES:
                return Var(tok.text)
            if tok.text not in FUNCTIONS:
                raise UnknownIdentifier(f"unknown identifier {tok.text!r}", tok.offset)
            return self.call(tok.text)
        if tok.kind == "op" and tok.text == "(":
            self.advance()
            self.depth += 1
            node = self.expr()
            self.expect(")")
            self.depth -= 1
            return node
        self.unexpected("a number, variable, function or '('")

    def call(self, name: str) -> Expr:
        self.expect("(")
        self.depth += 1
        args = [self.expr()]
        for _ in range(FUNCTIONS[name] - 1):
            self.expect(",")
            args.append(self.expr())
        self.expect(")")
        self.depth -= 1
        return Call(name, tuple(args))


def parse(text: str) -> Expr:
    """Parse ``text`` into an expression tree.

    Raises one of ``EmptyInput``, ``UnbalancedParenthesis``,
    ``UnknownIdentifier`` or ``UnexpectedToken``; each has an ``offset``.
    """
    if not text or not text.strip():
        raise EmptyInput("empty expression", 0)
    return _Parser(text).parse()


# --------------------------------------------------------------------------
# printing
# --------------------------------------------------------------------------

def _prec(e: Expr) -> int:
    if isinstance(e, BinOp):
        return _PRECEDENCE[e.op]
    return 3


def to_string(e: Expr) -> str:
    """Render ``e`` with the minimal parentheses needed to re-parse it identically."""
    if isinstance(e, Num):
        return repr(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Neg):
        inner = to_string(e.operand)
        return f"-({inner})" if isinstance(e.operand, BinOp) else f"-{inner}"
    if isinstance(e, Call):
        return f"{e.func}({', '.join(to_string(a) for a in e.args)})"
    p = _PRECEDENCE[e.op]
    left = to_string(e.left)
    right = to_string(e.right)
    if _prec(e.left) < p:
        left = f"({left})"
    if _prec(e.right) <= p:
        right = f"({right})"
    return f"{left} {e.op} {right}"


# --------------------------------------------------------------------------
# evaluation
# --------------------------------------------------------------------------

def _first_bad(mask) -> str:
    if np.ndim(mask) == 0:
        return ""
    return f" at element {int(np.flatnonzero(mask)[0])}"


def _eval(e: Expr, t, x):
    if isinstance(e, Num):
        out = np.float64(e.value)
    elif isinstance(e, Var):
        out = t if e.name == "t" else x
    elif isinstance(e, Neg):
        out = -_eval(e.operand, t, x)
    elif isinstance(e, BinOp):
        a = _eval(e.left, t, x)
        b = _eval(e.right, t, x)
        if e.op == "+":
            out = a + b
        elif e.op == "-":
            out = a - b
        elif e.op == "*":
            out = a * b
        else:
            zero = np.asarray(b) == 0
            if np.any(zero):
                raise DivisionByZero(
                    f"division by zero in {to_string(e)!r}{_first_bad(zero)}", e)
            out = a / b
    else:
        args = [_eval(a, t, x) for a in e.args]
        if e.func == "min":
            out = np.minimum(*args)
        elif e.func == "max":
            out = np.maximum(*args)
        elif e.func == "abs":
            out = np.abs(args[0])
        elif e.func == "exp":
            out = np.exp(args[0])
        elif e.func == "log":
            bad = np.asarray(args[0]) <= 0
            if np.any(bad):
                raise LogOfNonPositive(
                    f"log of non-positive value in {to_string(e)!r}{_first_bad(bad)}", e)
            out = np.log(args[0])
        else:
            out = np.power(*args)
    bad = ~np.isfinite(out)
    if np.any(bad):
        raise NonFiniteResult(f"non-finite result in {to_string(e)!r}{_first_bad(bad)}", e)
    return out


def evaluate(e: Expr, t, x):
    """Evaluate ``e`` at time ``t`` and state ``x`` (scalars or broadcastable arrays).

    Returns a Python float for scalar inputs, otherwise an array of the
    broadcast shape.
    """
    t = np.asarray(t, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    with np.errstate(all="ignore"):
        out = _eval(e, t, x)
    shape = np.broadcast_shapes(t.shape, x.shape)
    if shape == ():
        return float(out)
    return np.broadcast_to(out, shape).astype(np.float64, copy=True)
