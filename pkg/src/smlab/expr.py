"""Small closed-form expressions in one variable ``x``.

The grammar is deliberately tiny::

    expr    := term (('+' | '-') term)*
    term    := unary ('*' unary)*
    unary   := '-' unary | '+' unary | primary
    primary := NUMBER | 'x' | 'pi' | FUNC '(' expr ')' | '(' expr ')'
    FUNC    := 'sin' | 'cos' | 'exp'

Expressions are parsed into immutable trees that can be evaluated on
scalars or numpy arrays and differentiated symbolically.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ParseError",
    "Node",
    "Const",
    "Var",
    "Neg",
    "BinOp",
    "Call",
    "Expr",
    "parse_expr",
]


class ParseError(ValueError):
    """Syntax error carrying the 0-based character offset of the problem."""

    def __init__(self, message: str, position: int, text: str = ""):
        self.position = position
        self.text = text
        super().__init__(f"{message} at position {position}")


_FUNCS = {"sin": (math.sin, np.sin), "cos": (math.cos, np.cos), "exp": (math.exp, np.exp)}

# precedence used when printing trees back to text
_PREC = {"+": 1, "-": 1, "*": 2}


class Node:
    """Base class of expression tree nodes."""

    prec = 4

    def to_text(self) -> str:
        raise NotImplementedError

    def derivative(self) -> "Node":
        raise NotImplementedError

    def code(self, mod: str) -> str:
        raise NotImplementedError

    def __str__(self) -> str:
        return self.to_text()


@dataclass(frozen=True)
class Const(Node):
    value: float

    def to_text(self) -> str:
        if self.value == math.pi:
            return "pi"
        return repr(float(self.value))

    @property
    def prec(self) -> int:  # type: ignore[override]
        # a negative literal prints with a leading minus
        return 3 if self.value < 0 else 4

    def derivative(self) -> Node:
        return Const(0.0)

    def code(self, mod: str) -> str:
        return f"({float(self.value)!r})"


@dataclass(frozen=True)
class Var(Node):
    def to_text(self) -> str:
        return "x"

    def derivative(self) -> Node:
        return Const(1.0)

    def code(self, mod: str) -> str:
        return "x"


@dataclass(frozen=True)
class Neg(Node):
    arg: Node
    prec = 3

    def to_text(self) -> str:
        inner = self.arg.to_text()
        if self.arg.prec < 3:
            inner = f"({inner})"
        return f"-{inner}"

    def derivative(self) -> Node:
        return _neg(self.arg.derivative())

    def code(self, mod: str) -> str:
        return f"(-{self.arg.code(mod)})"


@dataclass(frozen=True)
class BinOp(Node):
    op: str
    left: Node
    right: Node

    @property
    def prec(self) -> int:  # type: ignore[override]
        return _PREC[self.op]

    def to_text(self) -> str:
        p = self.prec
        lt = self.left.to_text()
        if self.left.prec < p:
            lt = f"({lt})"
        rt = self.right.to_text()
        # parens at equal precedence keep the tree shape on re-parsing
        if self.right.prec <= p:
            rt = f"({rt})"
        elif self.right.prec == 3 and self.op in "+-":
            rt = f"({rt})"
        return f"{lt}{self.op}{rt}"

    def derivative(self) -> Node:
        a, b = self.left, self.right
        if self.op == "+":
            return _add(a.derivative(), b.derivative())
        if self.op == "-":
            return _sub(a.derivative(), b.derivative())
        return _add(_mul(a.derivative(), b), _mul(a, b.derivative()))

    def code(self, mod: str) -> str:
        return f"({self.left.code(mod)}{self.op}{self.right.code(mod)})"


@dataclass(frozen=True)
class Call(Node):
    name: str
    arg: Node

    def to_text(self) -> str:
        return f"{self.name}({self.arg.to_text()})"

    def derivative(self) -> Node:
        inner = self.arg.derivative()
        if self.name == "sin":
            outer: Node = Call("cos", self.arg)
        elif self.name == "cos":
            outer = _neg(Call("sin", self.arg))
        else:
            outer = self
        return _mul(outer, inner)

    def code(self, mod: str) -> str:
        return f"{mod}.{self.name}({self.arg.code(mod)})"


# constructors with constant folding, keep derivative trees small


def _is(node: Node, v: float) -> bool:
    return isinstance(node, Const) and node.value == v


def _neg(a: Node) -> Node:
    if isinstance(a, Const):
        return Const(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def _add(a: Node, b: Node) -> Node:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value + b.value)
    if _is(a, 0.0):
        return b
    if _is(b, 0.0):
        return a
    return BinOp("+", a, b)


def _sub(a: Node, b: Node) -> Node:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value - b.value)
    if _is(b, 0.0):
        return a
    if _is(a, 0.0):
        return _neg(b)
    return BinOp("-", a, b)


def _mul(a: Node, b: Node) -> Node:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value * b.value)
    if _is(a, 0.0) or _is(b, 0.0):
        return Const(0.0)
    if _is(a, 1.0):
        return b
    if _is(b, 1.0):
        return a
    return BinOp("*", a, b)


_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_]\w*)|(?P<op>[-+*()]))"
)


def _tokenize(text: str, offset: int = 0) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    n = len(text)
    while pos < n:
        if text[pos].isspace():
            pos += 1
            continue
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            raise ParseError(f"unexpected character {text[pos]!r}", offset + pos, text)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), offset + start))
        pos = m.end()
    tokens.append(("end", "", offset + n))
    return tokens


class _Parser:
    def __init__(self, text: str, offset: int):
        self.text = text
        self.tokens = _tokenize(text, offset)
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
            shown = val or "end of input"
            raise ParseError(f"expected {value!r}, found {shown!r}", pos, self.text)

    def parse(self) -> Node:
        node = self.expr()
        kind, val, pos = self.peek()
        if kind != "end":
            raise ParseError(f"unexpected {val!r}", pos, self.text)
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Node:
        node = self.unary()
        while self.peek()[1] == "*":
            self.take()
            node = BinOp("*", node, self.unary())
        return node

    def unary(self) -> Node:
        kind, val, pos = self.peek()
        if kind == "op" and val == "-":
            self.take()
            arg = self.unary()
            if isinstance(arg, Const):
                return Const(-arg.value)
            return Neg(arg)
        if kind == "op" and val == "+":
            self.take()
            return self.unary()
        return self.primary()

    def primary(self) -> Node:
        kind, val, pos = self.take()
        if kind == "num":
            return Const(float(val))
        if kind == "name":
            if val == "x":
                return Var()
            if val == "pi":
                return Const(math.pi)
            if val in _FUNCS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Call(val, arg)
            raise ParseError(f"unknown name {val!r}", pos, self.text)
        if val == "(":
            node = self.expr()
            self.expect(")")
            return node
        shown = val or "end of input"
        raise ParseError(f"unexpected {shown!r}", pos, self.text)


def _compile(node: Node):
    scalar = eval(f"lambda x: {node.code('math')}", {"math": math})  # noqa: S307
    vector_src = node.code("np")
    vector = eval(f"lambda x: {vector_src}", {"np": np})  # noqa: S307
    if "x" not in vector_src:
        # constant trees must still broadcast over arrays
        value = scalar(0.0)
        vector = lambda x: np.full(np.shape(x), value, dtype=float)  # noqa: E731
    return scalar, vector


class Expr:
    """A parsed expression with compiled scalar and array evaluators.

    Parameters
    ----------
    tree : Node
        Expression tree.
    source : str, optional
        Text the tree was parsed from. Defaults to the tree's own rendering.
    """

    __slots__ = ("tree", "source", "_f", "_fv", "_d", "is_constant")

    def __init__(self, tree: Node, source: str | None = None):
        self.tree = tree
        self.source = tree.to_text() if source is None else "".join(source.split())
        self._f, self._fv = _compile(tree)
        self._d: Expr | None = None
        self.is_constant = "x" not in tree.code("m")

    def __call__(self, x: float) -> float:
        return self._f(x)

    def vec(self, x) -> np.ndarray:
        return self._fv(np.asarray(x, dtype=float))

    @property
    def derivative(self) -> "Expr":
        if self._d is None:
            self._d = Expr(self.tree.derivative())
        return self._d

    def __eq__(self, other) -> bool:
        return isinstance(other, Expr) and self.tree == other.tree

    def __hash__(self) -> int:
        return hash(self.tree)

    def __str__(self) -> str:
        return self.source

    def __repr__(self) -> str:
        return f"Expr({self.source!r})"


def parse_expr(text: str, offset: int = 0) -> Expr:
    """Parse ``text`` into an :class:`Expr`.

    ``offset`` shifts reported error positions, for callers embedding the
    expression in a larger string.

    >>> parse_expr("cos(x) + cos(2*x) + 0.4")(0.0)
    2.4
    """
    tree = _Parser(text, offset).parse()
    return Expr(tree, text)


def combine(op: str, a: Expr, b: Expr) -> Expr:
    """Tree-level ``a op b`` for op in ``+ - *``."""
    fold = {"+": _add, "-": _sub, "*": _mul}[op]
    return Expr(fold(a.tree, b.tree))


def const(value: float) -> Expr:
    return Expr(Const(float(value)))
