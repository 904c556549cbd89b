"""Scalar expressions in coordinates x1..xn with exact forward derivatives.

Grammar (standard precedence, power > unary minus > * / > + -, binary
operators left-associative)::

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := '-' unary | postfix
    postfix := atom ('^' ['-'] integer)*
    atom    := number | coordinate | function '(' expr ')' | '(' expr ')'

Coordinates are ``x1`` .. ``xn``; functions are ``sin cos exp log sqrt``;
``^`` takes a literal integer exponent only.  Derivatives are computed by
dual-number propagation (see :mod:`foliage.dual`), never symbolically and
never by finite differences.  Evaluation accepts plain floats, numpy arrays
(batched points) and duals interchangeably.
"""

import re
from dataclasses import dataclass

import numpy as np

from . import dual
from .dual import Dual, value_of
from .errors import EvalDomainError, ParseError

__all__ = [
    "Expression",
    "parse_expression",
    "evaluate",
    "directional_derivative",
    "second_directional",
    "serialize",
]

FUNCTIONS = ("sin", "cos", "exp", "log", "sqrt")


# ---------------------------------------------------------------------------
# AST


@dataclass(frozen=True)
class Node:
    span: tuple


@dataclass(frozen=True)
class Num(Node):
    value: float


@dataclass(frozen=True)
class Coord(Node):
    index: int  # 0-based


@dataclass(frozen=True)
class Neg(Node):
    operand: Node


@dataclass(frozen=True)
class BinOp(Node):
    op: str
    left: Node
    right: Node


@dataclass(frozen=True)
class Pow(Node):
    base: Node
    exponent: int


@dataclass(frozen=True)
class Func(Node):
    name: str
    arg: Node


# ---------------------------------------------------------------------------
# Tokenizer

_TOKEN_RE = re.compile(
    r"""
    (?P<num>\d+\.\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?|\d+(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z][A-Za-z0-9]*)
  | (?P<op>[-+*/^()])
  | (?P<ws>\s+)
  | (?P<bad>.)
    """,
    re.VERBOSE,
)


def _tokenize(text):
    tokens = []
    for m in _TOKEN_RE.finditer(text):
        kind = m.lastgroup
        if kind == "ws":
            continue
        if kind == "bad":
            raise ParseError(f"unexpected character {m.group()!r}", m.start())
        tokens.append((kind, m.group(), m.start(), m.end()))
    tokens.append(("end", "", len(text), len(text)))
    return tokens


# ---------------------------------------------------------------------------
# Parser (recursive descent)


class _Parser:
    def __init__(self, text, n):
        self.text = text
        self.n = n
        self.tokens = _tokenize(text)
        self.pos = 0

    def peek(self):
        return self.tokens[self.pos]

    def advance(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect_op(self, op):
        kind, val, start, _ = self.peek()
        if kind != "op" or val != op:
            raise ParseError(f"expected {op!r}", start)
        return self.advance()

    def parse(self):
        node = self.expr()
        kind, val, start, _ = self.peek()
        if kind != "end":
            raise ParseError(f"unexpected token {val!r}", start)
        return node

    def expr(self):
        node = self.term()
        while True:
            kind, val, _, _ = self.peek()
            if kind == "op" and val in "+-":
                self.advance()
                rhs = self.term()
                node = BinOp((node.span[0], rhs.span[1]), val, node, rhs)
            else:
                return node

    def term(self):
        node = self.unary()
        while True:
            kind, val, _, _ = self.peek()
            if kind == "op" and val in "*/":
                self.advance()
                rhs = self.unary()
                node = BinOp((node.span[0], rhs.span[1]), val, node, rhs)
            else:
                return node

    def unary(self):
        kind, val, start, _ = self.peek()
        if kind == "op" and val == "-":
            self.advance()
            operand = self.unary()
            return Neg((start, operand.span[1]), operand)
        return self.postfix()

    def postfix(self):
        node = self.atom()
        while True:
            kind, val, _, _ = self.peek()
            if kind == "op" and val == "^":
                self.advance()
                exponent, end = self.int_exponent()
                node = Pow((node.span[0], end), node, exponent)
            else:
                return node

    def int_exponent(self):
        sign = 1
        kind, val, start, end = self.peek()
        if kind == "op" and val == "-":
            sign = -1
            self.advance()
            kind, val, start, end = self.peek()
        if kind != "num" or not val.isdigit():
            raise ParseError("exponent must be a literal integer", start)
        self.advance()
        return sign * int(val), end

    def atom(self):
        kind, val, start, end = self.advance()
        if kind == "num":
            return Num((start, end), float(val))
        if kind == "ident":
            if val in FUNCTIONS:
                self.expect_op("(")
                arg = self.expr()
                _, _, _, close = self.expect_op(")")
                return Func((start, close), val, arg)
            m = re.fullmatch(r"x([0-9]+)", val)
            if m:
                k = int(m.group(1))
                if not 1 <= k <= self.n:
                    raise ParseError(
                        f"unknown coordinate {val!r} (dimension is {self.n})", start
                    )
                return Coord((start, end), k - 1)
            raise ParseError(f"unknown function or symbol {val!r}", start)
        if kind == "op" and val == "(":
            node = self.expr()
            self.expect_op(")")
            return node
        raise ParseError(f"unexpected token {val!r}" if val else "unexpected end of input", start)


# ---------------------------------------------------------------------------
# Compilation to closures

def _domain_error(message, node, source):
    return EvalDomainError(message, span=node.span, subterm=source[node.span[0]:node.span[1]])


def _compile(node, source):
    """Build a closure coords -> scalar; domain checks raise EvalDomainError."""
    if isinstance(node, Num):
        v = node.value
        return lambda c: v
    if isinstance(node, Coord):
        i = node.index
        return lambda c: c[i]
    if isinstance(node, Neg):
        f = _compile(node.operand, source)
        return lambda c: -f(c)
    if isinstance(node, BinOp):
        fl = _compile(node.left, source)
        fr = _compile(node.right, source)
        if node.op == "+":
            return lambda c: fl(c) + fr(c)
        if node.op == "-":
            return lambda c: fl(c) - fr(c)
        if node.op == "*":
            return lambda c: fl(c) * fr(c)

        def div(c, node=node):
            den = fr(c)
            if np.any(value_of(den) == 0.0):
                raise _domain_error("division by zero", node, source)
            return fl(c) / den

        return div
    if isinstance(node, Pow):
        f = _compile(node.base, source)
        k = node.exponent
        if k >= 0:
            return lambda c: dual.powi(f(c), k)

        def negpow(c, node=node):
            base = f(c)
            if np.any(value_of(base) == 0.0):
                raise _domain_error("zero base with negative exponent", node, source)
            return dual.powi(base, k)

        return negpow
    if isinstance(node, Func):
        f = _compile(node.arg, source)
        if node.name == "sin":
            return lambda c: dual.sin(f(c))
        if node.name == "cos":
            return lambda c: dual.cos(f(c))
        if node.name == "exp":

            def fexp(c, node=node):
                out = dual.exp(f(c))
                if not np.all(np.isfinite(value_of(out))):
                    raise _domain_error("overflow in exp", node, source)
                return out

            return fexp
        if node.name == "log":

            def flog(c, node=node):
                arg = f(c)
                if not np.all(value_of(arg) > 0.0):
                    raise _domain_error("log of non-positive value", node, source)
                return dual.log(arg)

            return flog
        if node.name == "sqrt":

            def fsqrt(c, node=node):
                arg = f(c)
                v = value_of(arg)
                if np.any(v < 0.0):
                    raise _domain_error("sqrt of negative value", node, source)
                if isinstance(arg, Dual) and np.any(v == 0.0):
                    raise _domain_error("sqrt derivative at zero", node, source)
                return dual.sqrt(arg)

            return fsqrt
    raise TypeError(f"unhandled node {node!r}")


# ---------------------------------------------------------------------------
# Public API


class Expression:
    """Parsed scalar function of coordinates x1..xn.

    Immutable after construction; all evaluation entry points are pure and
    safe to call concurrently.
    """

    __slots__ = ("n", "source", "root", "_fn")

    def __init__(self, root, n, source):
        self.root = root
        self.n = n
        self.source = source
        self._fn = _compile(root, source)

    def __call__(self, coords):
        """Evaluate on a sequence of n scalars (floats, arrays or duals)."""
        return self._fn(coords)

    def __repr__(self):
        return f"Expression({serialize(self)!r}, n={self.n})"


def parse_expression(text, n):
    """Parse ``text`` over coordinates x1..xn."""
    if not isinstance(n, int) or n < 1:
        raise ParseError(f"dimension must be a positive integer, got {n!r}")
    if not text or not text.strip():
        raise ParseError("empty expression", 0)
    root = _Parser(text, n).parse()
    return Expression(root, n, text)


def _check_dim(e, p):
    p = np.asarray(p, dtype=float)
    if p.shape[-1] != e.n:
        raise ValueError(f"point has {p.shape[-1]} coordinates, expression has n={e.n}")
    return p


def evaluate(e, p):
    """Value of ``e`` at point(s) ``p`` of shape (..., n)."""
    p = _check_dim(e, p)
    coords = [p[..., k] for k in range(e.n)]
    out = np.asarray(e(coords), dtype=float)
    if not np.all(np.isfinite(out)):
        raise EvalDomainError("non-finite result", span=e.root.span, subterm=e.source)
    return out if out.shape else float(out)


def directional_derivative(e, p, v):
    """Return (e(p), D_v e(p)) by dual propagation; linear in ``v``.

    ``v`` may carry extra *leading* axes relative to ``p`` to propagate a
    batch of directions in one sweep.
    """
    p = _check_dim(e, p)
    v = np.asarray(v, dtype=float)
    coords = [Dual(p[..., k], v[..., k]) for k in range(e.n)]
    out = e(coords)
    shape = p.shape[:-1]
    dshape = np.broadcast_shapes(v.shape[:-1], shape)
    val = np.broadcast_to(np.asarray(value_of(out), dtype=float), shape)
    der = np.broadcast_to(np.asarray(value_of(out.b) if isinstance(out, Dual) else 0.0, dtype=float), dshape)
    if not (np.all(np.isfinite(val)) and np.all(np.isfinite(der))):
        raise EvalDomainError("non-finite derivative", span=e.root.span, subterm=e.source)
    if shape == ():
        return float(val), float(der) if dshape == () else der.copy()
    return val.copy(), der.copy()


def gradient(e, p):
    """Value and full coordinate gradient: returns (val (...,), grad (n, ...))."""
    p = _check_dim(e, p)
    n = e.n
    shape = p.shape[:-1]
    eye = np.eye(n).reshape((n, n) + (1,) * len(shape))
    val, grad = directional_derivative(e, p, np.moveaxis(eye, 1, -1))
    return val, grad


def second_directional(e, p, u, v):
    """D_u D_v e(p) via nested dual propagation; symmetric in (u, v)."""
    p = _check_dim(e, p)
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    coords = [
        Dual(Dual(p[..., k], v[..., k]), Dual(u[..., k], 0.0)) for k in range(e.n)
    ]
    out = e(coords)
    dd = 0.0
    if isinstance(out, Dual) and isinstance(out.b, Dual):
        dd = out.b.b
    dd = np.asarray(value_of(dd), dtype=float)
    if not np.all(np.isfinite(dd)):
        raise EvalDomainError("non-finite second derivative", span=e.root.span, subterm=e.source)
    shape = np.broadcast_shapes(p.shape[:-1], u.shape[:-1], v.shape[:-1])
    dd = np.broadcast_to(dd, shape)
    return float(dd) if shape == () else dd.copy()


def value_gradient_hessian(e, p):
    """Value, gradient and full Hessian at ``p``.

    Returns ``(val (...,), grad (n, ...), hess (n, n, ...))`` with
    ``hess[m, k] = d_m d_k e``; computed with one nested, direction-batched
    dual sweep.
    """
    p = _check_dim(e, p)
    n = e.n
    shape = p.shape[:-1]
    pad = (1,) * len(shape)
    eye = np.eye(n)
    # inner payload broadcasts along a fresh leading axis (k), outer payload
    # along another (m); the nested product yields the full Hessian block.
    coords = [
        Dual(
            Dual(p[..., k], eye[:, k].reshape((1, n) + pad)),
            Dual(eye[:, k].reshape((n, 1) + pad), 0.0),
        )
        for k in range(n)
    ]
    out = e(coords)
    val = np.broadcast_to(np.asarray(value_of(out), dtype=float), shape)
    if isinstance(out, Dual):
        inner = out.a
        outer = out.b
    else:
        inner = out
        outer = None
    grad = 0.0
    if isinstance(inner, Dual):
        grad = inner.b
    grad = np.broadcast_to(np.asarray(value_of(grad), dtype=float), (1, n) + shape)[0]
    hess = 0.0
    if isinstance(outer, Dual):
        hess = outer.b
    hess = np.broadcast_to(np.asarray(value_of(hess), dtype=float), (n, n) + shape)
    if not (np.all(np.isfinite(val)) and np.all(np.isfinite(grad)) and np.all(np.isfinite(hess))):
        raise EvalDomainError("non-finite derivative", span=e.root.span, subterm=e.source)
    return val.copy(), grad.copy(), hess.copy()


def classify_simple(e):
    """('const', v), ('coord', k, sign), or None for general expressions.

    Lets the metric/frame jet loops skip dual sweeps for trivial entries.
    """
    node = e.root
    sign = 1.0
    if isinstance(node, Neg):
        sign = -1.0
        node = node.operand
    if isinstance(node, Num):
        return ("const", sign * node.value)
    if isinstance(node, Coord):
        return ("coord", node.index, sign)
    return None


def jet_coords(pts, order):
    """Coordinate scalars carrying identity direction payloads.

    Shared by the metric/frame pipeline loops so the dual plumbing is built
    once per point batch, not once per expression.
    """
    pts = np.asarray(pts, dtype=float)
    n = pts.shape[-1]
    pad = (1,) * (pts.ndim - 1)
    eye = np.eye(n)
    if order == 0:
        return [pts[..., k] for k in range(n)]
    if order == 1:
        return [Dual(pts[..., k], eye[:, k].reshape((n,) + pad)) for k in range(n)]
    if order == 2:
        return [
            Dual(
                Dual(pts[..., k], eye[:, k].reshape((1, n) + pad)),
                Dual(eye[:, k].reshape((n, 1) + pad), 0.0),
            )
            for k in range(n)
        ]
    raise ValueError("order must be 0, 1, or 2")


def jet_split(out, order, n, shape):
    """Unpack an evaluation on jet_coords into (value, gradient, hessian)."""
    if order == 0:
        return np.broadcast_to(np.asarray(value_of(out), float), shape), None, None
    if order == 1:
        if isinstance(out, Dual):
            v = np.broadcast_to(np.asarray(out.a, float), shape)
            d = np.broadcast_to(np.asarray(out.b, float), (n,) + shape)
        else:
            v = np.broadcast_to(np.asarray(out, float), shape)
            d = np.zeros((n,) + shape)
        return v, d, None
    v = np.broadcast_to(np.asarray(value_of(out), float), shape)
    grad = 0.0
    hess = 0.0
    if isinstance(out, Dual):
        if isinstance(out.a, Dual):
            grad = out.a.b
        if isinstance(out.b, Dual):
            hess = out.b.b
    grad = np.broadcast_to(np.asarray(value_of(grad), float), (1, n) + shape)[0]
    hess = np.broadcast_to(np.asarray(value_of(hess), float), (n, n) + shape)
    return v, grad, hess


def serialize(e):
    """Canonical fully parenthesized form; reparsing evaluates identically."""
    return _serialize(e.root)


def _serialize(node):
    if isinstance(node, Num):
        return repr(node.value)
    if isinstance(node, Coord):
        return f"x{node.index + 1}"
    if isinstance(node, Neg):
        return f"(-{_serialize(node.operand)})"
    if isinstance(node, BinOp):
        return f"({_serialize(node.left)} {node.op} {_serialize(node.right)})"
    if isinstance(node, Pow):
        return f"({_serialize(node.base)}^{node.exponent})"
    if isinstance(node, Func):
        return f"{node.name}({_serialize(node.arg)})"
    raise TypeError(f"unhandled node {node!r}")
