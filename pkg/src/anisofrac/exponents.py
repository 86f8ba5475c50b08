"""Variable-exponent fields written as small arithmetic expressions.

Grammar (whitespace insignificant, decimal literals only)::

    expr   := term (('+' | '-') term)*
    term   := factor (('*' | '/') factor)*
    factor := number | ident | func '(' args ')' | '(' expr ')' | '-' factor
    ident  := x1 .. xN | y1 .. yN
    func   := dist | min | max | clamp | exp

``dist`` takes the two point symbols, ``dist(x, y)``. Every pair exponent is
symmetrized on construction, so ``p(x, y) == p(y, x)`` holds bitwise.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (
    ExponentEvaluationError,
    ExponentOutOfRange,
    ExpressionSyntaxError,
    SupercriticalOrder,
    UnknownIdentifier,
)

EXPONENT_GUARD = 1e-9

FUNCTION_ARITY = {"dist": 2, "min": 2, "max": 2, "clamp": 3, "exp": 1}


# -- AST ------------------------------------------------------------------


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Coord:
    point: str  # "x" or "y"
    axis: int  # 1-based


@dataclass(frozen=True)
class PointRef:
    point: str


@dataclass(frozen=True)
class Neg:
    operand: "Node"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Call:
    func: str
    args: tuple


Node = Num | Coord | PointRef | Neg | BinOp | Call


# -- lexer / parser -------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+\.\d*|\.\d+|\d+)|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/(),]))"
)
_COORD = re.compile(r"([xy])([1-9][0-9]*)$")


def _tokenize(src):
    tokens = []
    pos = 0
    while True:
        while pos < len(src) and src[pos].isspace():
            pos += 1
        if pos >= len(src):
            break
        m = _TOKEN.match(src, pos)
        if m is None:
            raise ExpressionSyntaxError(
                pos, {"number", "identifier", "operator"}, src
            )
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", len(src)))
    return tokens


class _Parser:
    def __init__(self, src, dimension):
        self.src = src
        self.dimension = dimension
        self.tokens = _tokenize(src)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, text):
        kind, value, pos = self.peek()
        if value != text or kind == "end":
            raise ExpressionSyntaxError(pos, {repr(text)}, self.src)
        self.advance()

    def parse(self):
        node = self.expr()
        kind, _, pos = self.peek()
        if kind != "end":
            raise ExpressionSyntaxError(
                pos, {"end of input", "'+'", "'-'", "'*'", "'/'"}, self.src
            )
        return node

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.advance()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.factor()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.advance()[1]
            node = BinOp(op, node, self.factor())
        return node

    def factor(self):
        kind, value, pos = self.peek()
        if kind == "num":
            self.advance()
            v = float(value)
            if not np.isfinite(v):
                raise ExpressionSyntaxError(pos, {"finite number"}, self.src)
            return Num(v)
        if kind == "op" and value == "-":
            self.advance()
            return Neg(self.factor())
        if kind == "op" and value == "(":
            self.advance()
            node = self.expr()
            self.expect(")")
            return node
        if kind == "name":
            self.advance()
            if value in FUNCTION_ARITY:
                return self.call(value)
            m = _COORD.match(value)
            if m is None:
                raise UnknownIdentifier(value, pos)
            axis = int(m.group(2))
            if self.dimension is not None and axis > self.dimension:
                raise UnknownIdentifier(value, pos)
            return Coord(m.group(1), axis)
        raise ExpressionSyntaxError(
            pos, {"number", "identifier", "function", "'('", "'-'"}, self.src
        )

    def call(self, func):
        self.expect("(")
        if func == "dist":
            args = (self.point(), None)
            self.expect(",")
            args = (args[0], self.point())
            self.expect(")")
            return Call(func, args)
        args = [self.expr()]
        while self.peek()[1] == "," and self.peek()[0] == "op":
            self.advance()
            args.append(self.expr())
        kind, value, pos = self.peek()
        if len(args) != FUNCTION_ARITY[func]:
            expected = {"','"} if len(args) < FUNCTION_ARITY[func] else {"')'"}
            raise ExpressionSyntaxError(pos, expected, self.src)
        if (func == "clamp" and isinstance(args[1], Num) and isinstance(args[2], Num)
                and not args[1].value < args[2].value):
            raise ExpressionSyntaxError(pos, {"clamp bounds with lo < hi"}, self.src)
        self.expect(")")
        return Call(func, tuple(args))

    def point(self):
        kind, value, pos = self.peek()
        if kind == "name" and value in ("x", "y"):
            self.advance()
            return PointRef(value)
        if kind == "name":
            raise UnknownIdentifier(value, pos)
        raise ExpressionSyntaxError(pos, {"'x'", "'y'"}, self.src)


def parse_exponent(src: str, dimension: int | None = None) -> Node:
    """Parse exponent text into an AST.

    Coordinates ``x<k>``/``y<k>`` with ``k > dimension`` are rejected as
    unknown identifiers when a dimension is given.
    """
    if not src or not src.strip():
        raise ExpressionSyntaxError(0, {"expression"}, src)
    return _Parser(src, dimension).parse()


def format_number(value: float) -> str:
    return np.format_float_positional(value, unique=True, trim="-")


def print_expr(node: Node) -> str:
    """Render an AST back to grammar text; ``parse(print(ast)) == ast``."""
    if isinstance(node, Num):
        return format_number(node.value)
    if isinstance(node, Coord):
        return f"{node.point}{node.axis}"
    if isinstance(node, PointRef):
        return node.point
    if isinstance(node, Neg):
        return "-" + print_expr(node.operand)
    if isinstance(node, BinOp):
        return f"({print_expr(node.left)} {node.op} {print_expr(node.right)})"
    if isinstance(node, Call):
        return f"{node.func}({', '.join(print_expr(a) for a in node.args)})"
    raise TypeError(f"not an expression node: {node!r}")


def max_axis(node: Node) -> int:
    if isinstance(node, Coord):
        return node.axis
    if isinstance(node, Neg):
        return max_axis(node.operand)
    if isinstance(node, BinOp):
        return max(max_axis(node.left), max_axis(node.right))
    if isinstance(node, Call):
        return max((max_axis(a) for a in node.args), default=0)
    return 0


# -- evaluation -----------------------------------------------------------


def evaluate(node: Node, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Evaluate ``node`` on paired point arrays of shape ``(m, N)``."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    out = _eval(node, x, y)
    out = np.broadcast_to(np.asarray(out, dtype=float), (x.shape[0],)).copy()
    if not np.all(np.isfinite(out)):
        raise ExponentEvaluationError("exponent expression produced a non-finite value")
    return out


def _eval(node, x, y):
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Coord):
        pts = x if node.point == "x" else y
        if node.axis > pts.shape[1]:
            raise ExponentEvaluationError(
                f"coordinate {node.point}{node.axis} used with {pts.shape[1]}-d points"
            )
        return pts[:, node.axis - 1]
    if isinstance(node, Neg):
        return -_eval(node.operand, x, y)
    if isinstance(node, BinOp):
        a = _eval(node.left, x, y)
        b = _eval(node.right, x, y)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        if np.any(np.asarray(b) == 0.0):
            raise ExponentEvaluationError("division by zero in exponent expression")
        return a / b
    if isinstance(node, Call):
        if node.func == "dist":
            p = x if node.args[0].point == "x" else y
            q = x if node.args[1].point == "x" else y
            return np.sqrt(np.sum((p - q) ** 2, axis=1))
        vals = [_eval(a, x, y) for a in node.args]
        if node.func == "min":
            return np.minimum(*vals)
        if node.func == "max":
            return np.maximum(*vals)
        if node.func == "exp":
            with np.errstate(over="ignore"):
                return np.exp(vals[0])
        v, lo, hi = vals
        if np.any(np.asarray(lo) >= np.asarray(hi)):
            raise ExponentEvaluationError("clamp requires lo < hi")
        return np.minimum(np.maximum(v, lo), hi)
    raise TypeError(f"not an expression node: {node!r}")


class PairExponent:
    """Symmetrized pair exponent ``(e(x, y) + e(y, x)) / 2``."""

    def __init__(self, expr: Node | str, dimension: int | None = None):
        if isinstance(expr, str):
            expr = parse_exponent(expr, dimension)
        self.expr = expr
        self.text = print_expr(expr)

    def __call__(self, x, y):
        a = evaluate(self.expr, x, y)
        b = evaluate(self.expr, y, x)
        return (a + b) / 2.0

    def diagonal(self, x):
        return self(x, x)

    def __repr__(self):
        return f"PairExponent({self.text!r})"


def symmetrize(expr: Node | str, dimension: int | None = None) -> PairExponent:
    return PairExponent(expr, dimension)


class PointExponent:
    """Scalar exponent on the domain; ``y`` coordinates alias ``x``."""

    def __init__(self, expr: Node | str, dimension: int | None = None):
        if isinstance(expr, str):
            expr = parse_exponent(expr, dimension)
        self.expr = expr
        self.text = print_expr(expr)

    def __call__(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return evaluate(self.expr, x, x)

    def __repr__(self):
        return f"PointExponent({self.text!r})"


@dataclass
class ExponentField:
    """The exponent data of one problem instance.

    ``components`` are the pair exponents p_1..p_K (symmetrized), ``q`` the
    Lebesgue target exponent of the embedding and ``r`` the exponent of the
    reaction term. ``dimension`` is the space dimension; the component count
    normally equals it.
    """

    components: list
    q: PointExponent
    r: PointExponent
    s: float
    dimension: int

    @classmethod
    def from_text(cls, components: Sequence[str], q: str, r: str, s: float,
                  dimension: int) -> "ExponentField":
        return cls(
            components=[PairExponent(c, dimension) for c in components],
            q=PointExponent(q, dimension),
            r=PointExponent(r, dimension),
            s=float(s),
            dimension=int(dimension),
        )

    @property
    def n_components(self) -> int:
        return len(self.components)

    def diagonal(self, x) -> np.ndarray:
        """Array of shape ``(K, m)`` with ``p_i(x, x)``."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.stack([c.diagonal(x) for c in self.components])


def p_M(field: ExponentField, x) -> np.ndarray:
    """Pointwise ``max_i p_i(x, x)``."""
    return np.max(field.diagonal(x), axis=0)


def critical_exponent(field: ExponentField, i: int, x) -> np.ndarray:
    """Fractional critical exponent ``p / (1 - s p / N)`` with ``p = p_i(x, x)``."""
    p = field.components[i].diagonal(x)
    sp = field.s * p
    if np.any(sp >= field.dimension):
        raise SupercriticalOrder(
            f"s * p_{i + 1}(x, x) = {float(np.max(sp))} >= N = {field.dimension}"
        )
    return p / (1.0 - sp / field.dimension)


def check_subcritical(field: ExponentField, x, target=None, margin: float = 1e-6):
    """Return the smallest gap ``p_i^{s,*}(x) - target(x)`` over components and points.

    ``target`` defaults to ``q``. Raises :class:`ExponentOutOfRange` when the
    gap is not larger than ``margin``.
    """
    target = field.q if target is None else target
    t = target(x)
    worst = np.inf
    for i in range(field.n_components):
        gap = critical_exponent(field, i, x) - t
        k = int(np.argmin(gap))
        if gap[k] <= margin:
            raise ExponentOutOfRange(f"q vs p{i + 1}*", (tuple(np.atleast_2d(x)[k]),), float(t[k]))
        worst = min(worst, float(gap[k]))
    return worst


# -- bounds ---------------------------------------------------------------


@dataclass
class ExponentBounds:
    p_minus: np.ndarray
    p_plus: np.ndarray
    pM_minus: float
    pM_plus: float
    q_minus: float
    q_plus: float
    r_minus: float
    r_plus: float
    extra: dict = field(default_factory=dict)

    @property
    def P_pp(self) -> float:
        return float(np.max(self.p_plus))

    @property
    def P_pm(self) -> float:
        return float(np.min(self.p_plus))

    @property
    def P_mp(self) -> float:
        return float(np.max(self.p_minus))

    @property
    def P_mm(self) -> float:
        return float(np.min(self.p_minus))

    @property
    def P_tilde(self) -> float:
        return min(self.P_mm, self.pM_minus)

    def brackets(self, i: int, values) -> bool:
        v = np.asarray(values)
        return bool(np.all(v >= self.p_minus[i]) and np.all(v <= self.p_plus[i]))


def _guard(name, values, x, y=None):
    values = np.asarray(values, dtype=float)
    bad = ~np.isfinite(values) | (values <= 1.0 + EXPONENT_GUARD)
    if np.any(bad):
        k = int(np.flatnonzero(bad)[0])
        pair = (tuple(x[k]),) if y is None else (tuple(x[k]), tuple(y[k]))
        raise ExponentOutOfRange(name, pair, float(values[k]))


def bounds_from_samples(component_values, x, y, points, field: ExponentField) -> ExponentBounds:
    """Build :class:`ExponentBounds` from already evaluated pair samples."""
    for i, vals in enumerate(component_values):
        _guard(f"p{i + 1}", vals, x, y)
    diag = field.diagonal(points)
    for i in range(diag.shape[0]):
        _guard(f"p{i + 1}", diag[i], points, points)
    pm = np.max(diag, axis=0)
    qv = field.q(points)
    rv = field.r(points)
    _guard("q", qv, points)
    _guard("r", rv, points)
    p_minus = np.array([min(float(np.min(v)), float(np.min(d)))
                        for v, d in zip(component_values, diag)])
    p_plus = np.array([max(float(np.max(v)), float(np.max(d)))
                       for v, d in zip(component_values, diag)])
    return ExponentBounds(
        p_minus=p_minus,
        p_plus=p_plus,
        pM_minus=float(np.min(pm)),
        pM_plus=float(np.max(pm)),
        q_minus=float(np.min(qv)),
        q_plus=float(np.max(qv)),
        r_minus=float(np.min(rv)),
        r_plus=float(np.max(rv)),
    )


def validate_bounds(field: ExponentField, x, y, points=None) -> ExponentBounds:
    """Sampled extrema of every exponent over the pairs ``(x[k], y[k])``.

    ``points`` is the diagonal sample for ``p_M``, ``q`` and ``r``; it
    defaults to ``x``. Raises :class:`ExponentOutOfRange` on any value that
    is non-finite or not above ``1 + 1e-9``.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    if x.shape[0] == 0:
        raise ValueError("empty pair sample")
    points = x if points is None else np.atleast_2d(np.asarray(points, dtype=float))
    values = [c(x, y) for c in field.components]
    return bounds_from_samples(values, x, y, points, field)
