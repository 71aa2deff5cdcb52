"""Arithmetic expressions over the half-plane coordinates ``x`` and ``y``.

A small recursive-descent parser producing a tree that evaluates on numpy
arrays.  Grammar (usual precedence, ``^`` right-associative and binding
tighter than unary minus, so ``-x^2 == -(x^2)``)::

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := ('+' | '-') unary | power
    power   := primary ('^' unary)?
    primary := NUMBER | NAME | NAME '(' expr ')' | '(' expr ')'
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

FUNCTIONS = {
    "exp": np.exp,
    "ln": np.log,
    "sqrt": np.sqrt,
    "abs": np.abs,
    "cosh": np.cosh,
    "sinh": np.sinh,
}
CONSTANTS = {"pi": math.pi}
VARIABLES = ("x", "y")


class ExprSyntaxError(ValueError):
    """Malformed expression; carries a 1-based line and column."""

    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{message} at line {line}, column {column}")
        self.message = message
        self.line = line
        self.column = column


class ExprEvalError(ArithmeticError):
    """Evaluation produced a non-finite value (division by zero, overflow, domain)."""


# -- tree ------------------------------------------------------------------


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    arg: object


@dataclass(frozen=True)
class BinOp:
    op: str
    left: object
    right: object


@dataclass(frozen=True)
class Call:
    func: str
    arg: object


Node = Num | Var | Neg | BinOp | Call


def evaluate(node: Node, x, y):
    """Evaluate ``node`` elementwise; raises :class:`ExprEvalError` on non-finite output."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    with np.errstate(all="ignore"):
        out = _eval(node, x, y)
    out = np.broadcast_to(out, np.broadcast_shapes(np.shape(x), np.shape(y)))
    if not np.all(np.isfinite(out)):
        raise ExprEvalError(f"non-finite value evaluating {to_source(node)!r}")
    return out


def _eval(node, x, y):
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        return x if node.name == "x" else y
    if isinstance(node, Neg):
        return -_eval(node.arg, x, y)
    if isinstance(node, Call):
        return FUNCTIONS[node.func](_eval(node.arg, x, y))
    a = _eval(node.left, x, y)
    b = _eval(node.right, x, y)
    if node.op == "+":
        return a + b
    if node.op == "-":
        return a - b
    if node.op == "*":
        return a * b
    if node.op == "/":
        return np.divide(a, b)
    return np.power(a, b)


def to_source(node: Node) -> str:
    """Fully parenthesised source text that parses back to an equal tree."""
    if isinstance(node, Num):
        text = repr(float(node.value))
        return f"({text})" if node.value < 0 else text
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Neg):
        return f"(-{to_source(node.arg)})"
    if isinstance(node, Call):
        return f"{node.func}({to_source(node.arg)})"
    return f"({to_source(node.left)} {node.op} {to_source(node.right)})"


def variables(node: Node) -> set[str]:
    if isinstance(node, Var):
        return {node.name}
    if isinstance(node, Num):
        return set()
    if isinstance(node, (Neg, Call)):
        return variables(node.arg)
    return variables(node.left) | variables(node.right)


# -- lexer / parser ----------------------------------------------------------

_TOKEN = re.compile(
    r"(?P<ws>[ \t\r\n]+)"
    r"|(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>\*\*|[-+*/^()])"
)


@dataclass
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(src: str) -> list[_Tok]:
    toks = []
    pos, line, line_start = 0, 1, 0
    while pos < len(src):
        m = _TOKEN.match(src, pos)
        if m is None:
            raise ExprSyntaxError(f"unexpected character {src[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        if kind == "ws":
            for k, ch in enumerate(m.group(), start=pos):
                if ch == "\n":
                    line += 1
                    line_start = k + 1
        else:
            text = "^" if m.group() == "**" else m.group()
            toks.append(_Tok(kind, text, line, pos - line_start + 1))
        pos = m.end()
    toks.append(_Tok("eof", "", line, pos - line_start + 1))
    return toks


class _Parser:
    def __init__(self, src: str):
        self.toks = _tokenize(src)
        self.i = 0

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def fail(self, msg: str):
        t = self.tok
        raise ExprSyntaxError(msg, t.line, t.col)

    def eat(self, text: str):
        if self.tok.text != text or self.tok.kind == "eof":
            self.fail(f"expected {text!r}")
        self.i += 1

    def parse(self) -> Node:
        if self.tok.kind == "eof":
            self.fail("empty expression")
        node = self.expr()
        if self.tok.kind != "eof":
            self.fail(f"unexpected {self.tok.text!r}")
        return node

    def expr(self):
        node = self.term()
        while self.tok.kind == "op" and self.tok.text in "+-":
            op = self.tok.text
            self.i += 1
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.tok.kind == "op" and self.tok.text in "*/":
            op = self.tok.text
            self.i += 1
            node = BinOp(op, node, self.unary())
        return node

    def unary(self):
        if self.tok.kind == "op" and self.tok.text in "+-":
            op = self.tok.text
            self.i += 1
            arg = self.unary()
            return Neg(arg) if op == "-" else arg
        return self.power()

    def power(self):
        base = self.primary()
        if self.tok.kind == "op" and self.tok.text == "^":
            self.i += 1
            return BinOp("^", base, self.unary())
        return base

    def primary(self):
        t = self.tok
        if t.kind == "num":
            self.i += 1
            return Num(float(t.text))
        if t.kind == "name":
            self.i += 1
            if t.text in FUNCTIONS:
                self.eat("(")
                arg = self.expr()
                self.eat(")")
                return Call(t.text, arg)
            if t.text in VARIABLES:
                return Var(t.text)
            if t.text in CONSTANTS:
                return Num(CONSTANTS[t.text])
            raise ExprSyntaxError(f"unknown identifier {t.text!r}", t.line, t.col)
        if t.kind == "op" and t.text == "(":
            self.i += 1
            node = self.expr()
            self.eat(")")
            return node
        self.fail("unexpected end of input" if t.kind == "eof" else f"unexpected {t.text!r}")


def parse(source: str) -> Node:
    """Parse ``source`` into an expression tree."""
    return _Parser(source).parse()
