"""A small deterministic expression language.

Fields, densities, bounds and brackets are written as plain text such as
``"r*y1*(floor(y2)-y1)"`` and parsed into immutable ASTs.  The grammar is
the usual one: ``^`` (right-associative) binds tighter than unary minus,
which binds tighter than ``*``/``/``, which bind tighter than ``+``/``-``.
Supported functions: sin, cos, exp, log, floor, abs, max, min, sqrt, and
the constant pi.

Evaluation is pure and bit-deterministic; domain problems (division by
zero, log of a non-positive number, ...) raise instead of producing NaN so
solver diagnostics can point at the offending sub-expression.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Union

from .errors import (
    ArityMismatchError,
    ExprDomainError,
    ExprSyntaxError,
    UnboundVariableError,
    UnknownFunctionError,
)

__all__ = [
    "Expr",
    "Num",
    "Var",
    "Unary",
    "Binary",
    "Call",
    "parse",
    "evaluate",
    "to_string",
    "FUNCTIONS",
    "CONSTANTS",
]


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Unary:
    op: str  # only '-'
    operand: "Expr"


@dataclass(frozen=True)
class Binary:
    op: str  # one of + - * / ^
    lhs: "Expr"
    rhs: "Expr"


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple["Expr", ...]


Expr = Union[Num, Var, Unary, Binary, Call]

# name -> arity
FUNCTIONS: dict[str, int] = {
    "sin": 1,
    "cos": 1,
    "exp": 1,
    "log": 1,
    "floor": 1,
    "abs": 1,
    "sqrt": 1,
    "max": 2,
    "min": 2,
}

CONSTANTS: dict[str, float] = {"pi": math.pi}

_NAME_START = set("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ_")
_NAME_CHARS = _NAME_START | set("0123456789")


class _Parser:
    """Hand-rolled recursive descent over a character buffer."""

    def __init__(self, text: str):
        self.text = text
        self.i = 0

    # -- low-level helpers -------------------------------------------------

    def _byte_offset(self, i: int | None = None) -> int:
        i = self.i if i is None else i
        return len(self.text[:i].encode("utf-8"))

    def fail(self, expected: str) -> None:
        raise ExprSyntaxError(self._byte_offset(), expected)

    def skip_ws(self) -> None:
        while self.i < len(self.text) and self.text[self.i] in " \t\r\n":
            self.i += 1

    def peek(self) -> str:
        return self.text[self.i : self.i + 1]

    def accept(self, ch: str) -> bool:
        self.skip_ws()
        if self.peek() == ch:
            self.i += 1
            return True
        return False

    def expect(self, ch: str) -> None:
        if not self.accept(ch):
            self.fail(f"'{ch}'")

    # -- grammar -----------------------------------------------------------

    def parse(self) -> Expr:
        node = self.additive()
        self.skip_ws()
        if self.i < len(self.text):
            self.fail("end of input")
        return node

    def additive(self) -> Expr:
        node = self.multiplicative()
        while True:
            if self.accept("+"):
                node = Binary("+", node, self.multiplicative())
            elif self.accept("-"):
                node = Binary("-", node, self.multiplicative())
            else:
                return node

    def multiplicative(self) -> Expr:
        node = self.unary()
        while True:
            if self.accept("*"):
                node = Binary("*", node, self.unary())
            elif self.accept("/"):
                node = Binary("/", node, self.unary())
            else:
                return node

    def unary(self) -> Expr:
        if self.accept("-"):
            return Unary("-", self.unary())
        return self.power()

    def power(self) -> Expr:
        base = self.primary()
        if self.accept("^"):
            # right-associative; exponent may carry its own unary minus
            return Binary("^", base, self.unary())
        return base

    def primary(self) -> Expr:
        self.skip_ws()
        ch = self.peek()
        if ch == "(":
            self.i += 1
            node = self.additive()
            self.expect(")")
            return node
        if ch and (ch.isdigit() or ch == "."):
            return self.number()
        if ch in _NAME_START:
            return self.name()
        self.fail("a number, name or '('")
        raise AssertionError("unreachable")

    def number(self) -> Num:
        start = self.i
        seen_dot = False
        while self.i < len(self.text):
            ch = self.text[self.i]
            if ch.isdigit():
                self.i += 1
            elif ch == "." and not seen_dot:
                seen_dot = True
                self.i += 1
            elif ch in "eE":
                # exponent part: e[+-]digits
                j = self.i + 1
                if j < len(self.text) and self.text[j] in "+-":
                    j += 1
                if j < len(self.text) and self.text[j].isdigit():
                    self.i = j
                    while self.i < len(self.text) and self.text[self.i].isdigit():
                        self.i += 1
                break
            else:
                break
        lit = self.text[start : self.i]
        try:
            return Num(float(lit))
        except ValueError:
            self.i = start
            self.fail("a number")
            raise AssertionError("unreachable")

    def name(self) -> Expr:
        start = self.i
        while self.i < len(self.text) and self.text[self.i] in _NAME_CHARS:
            self.i += 1
        ident = self.text[start : self.i]
        if self.accept("("):
            if ident not in FUNCTIONS:
                raise UnknownFunctionError(ident, self._byte_offset(start))
            args = [self.additive()]
            while self.accept(","):
                args.append(self.additive())
            self.expect(")")
            arity = FUNCTIONS[ident]
            if len(args) != arity:
                raise ArityMismatchError(ident, arity, len(args))
            return Call(ident, tuple(args))
        return Var(ident)


def parse(text: str) -> Expr:
    """Parse expression text into an AST or raise ExprSyntaxError."""
    return _Parser(text).parse()


def _apply(name: str, args: tuple[float, ...]) -> float:
    if name == "sin":
        return math.sin(args[0])
    if name == "cos":
        return math.cos(args[0])
    if name == "exp":
        return math.exp(args[0])
    if name == "log":
        if args[0] <= 0.0:
            raise ExprDomainError(f"log of non-positive number {args[0]}")
        return math.log(args[0])
    if name == "floor":
        return float(math.floor(args[0]))
    if name == "abs":
        return abs(args[0])
    if name == "sqrt":
        if args[0] < 0.0:
            raise ExprDomainError(f"sqrt of negative number {args[0]}")
        return math.sqrt(args[0])
    if name == "max":
        return max(args[0], args[1])
    if name == "min":
        return min(args[0], args[1])
    raise UnknownFunctionError(name)


def evaluate(e: Expr, env: Mapping[str, float] | None = None) -> float:
    """Evaluate an AST under a variable binding.

    Builtin constants (pi) win over env entries of the same name.  Unbound
    variables and domain problems raise; the result is a plain IEEE double.
    """
    env = env or {}
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Var):
        if e.name in CONSTANTS:
            return CONSTANTS[e.name]
        try:
            return float(env[e.name])
        except KeyError:
            raise UnboundVariableError(e.name) from None
    if isinstance(e, Unary):
        return -evaluate(e.operand, env)
    if isinstance(e, Binary):
        a = evaluate(e.lhs, env)
        b = evaluate(e.rhs, env)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        if e.op == "/":
            if b == 0.0:
                raise ExprDomainError("division by zero")
            return a / b
        if e.op == "^":
            if a == 0.0 and b < 0.0:
                raise ExprDomainError("zero raised to a negative power")
            if a < 0.0 and b != math.floor(b):
                raise ExprDomainError(
                    f"negative base {a} raised to fractional power {b}"
                )
            return a**b
        raise AssertionError(f"bad operator {e.op}")
    if isinstance(e, Call):
        return _apply(e.name, tuple(evaluate(a, env) for a in e.args))
    raise TypeError(f"not an Expr node: {e!r}")


# precedence levels used by the printer
_LEVEL = {"+": 1, "-": 1, "*": 2, "/": 2, "unary": 3, "^": 4}


def to_string(e: Expr) -> str:
    """Render an AST; parse(to_string(e)) is structurally identical to e."""
    return _render(e, 0)


def _render(e: Expr, parent_level: int) -> str:
    if isinstance(e, Num):
        return repr(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Call):
        return f"{e.name}({', '.join(_render(a, 0) for a in e.args)})"
    if isinstance(e, Unary):
        s = "-" + _render(e.operand, _LEVEL["unary"])
        return f"({s})" if parent_level > _LEVEL["unary"] else s
    if isinstance(e, Binary):
        lvl = _LEVEL[e.op]
        if e.op == "^":
            # right-associative: parenthesise a left operand of equal level
            lhs = _render(e.lhs, lvl + 1)
            rhs = _render(e.rhs, lvl)
        else:
            lhs = _render(e.lhs, lvl)
            rhs = _render(e.rhs, lvl + 1)
        s = f"{lhs}{e.op}{rhs}"
        return f"({s})" if parent_level > lvl else s
    raise TypeError(f"not an Expr node: {e!r}")
