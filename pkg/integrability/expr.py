"""
Expression trees over the phase-space variables x1, p1, x2, p2.

Parsing, exact evaluation (scalar and vectorized), symbolic differentiation
and a light, non-canonicalizing simplifier. Every node is an immutable,
hashable dataclass so trees can be shared between threads and used as
cache keys.
"""
import math
import re
from dataclasses import dataclass, fields
from functools import singledispatch
from typing import Union

import numpy as np

from .errors import (
    DomainError,
    ExpressionSyntaxError,
    NonIntegerExponentError,
    UnknownIdentifierError,
    UsageError,
)

VARIABLES = ("x1", "p1", "x2", "p2")
COORDINATES = ("x1", "x2")
MOMENTA = ("p1", "p2")
FUNCTIONS = ("sin", "cos", "exp", "ln", "sinh", "cosh")
UNARY = ("neg",) + FUNCTIONS
BINARY = ("+", "-", "*", "/")

VARIABLE_INDEX = {name: i for i, name in enumerate(VARIABLES)}

# tree walks recurse once per level
MAX_DEPTH = 200
# parenthesis, function and unary-minus nesting accepted by the parser
MAX_NESTING = 100
MAX_EXPONENT = 64


# --- Phase space ---

@dataclass(frozen=True)
class PhasePoint:
    """A point (x1, p1, x2, p2) of R^4; (x1, p1) and (x2, p2) are conjugate pairs."""
    x1: float
    p1: float
    x2: float
    p2: float

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if not math.isfinite(value):
                raise UsageError(f"Phase point entry {f.name} must be finite, got {value!r}")

    def __iter__(self):
        return iter((self.x1, self.p1, self.x2, self.p2))

    def __getitem__(self, var):
        if isinstance(var, int):
            return tuple(self)[var]
        return getattr(self, var)

    def as_array(self):
        return np.array(tuple(self), dtype=float)

    def shifted(self, var, delta):
        values = list(self)
        values[VARIABLE_INDEX[var]] += delta
        return PhasePoint(*values)

    @classmethod
    def from_array(cls, values):
        return cls(*(float(v) for v in values))

    @classmethod
    def parse(cls, text):
        """Parse "a,b,c,d" (ordered x1,p1,x2,p2)."""
        parts = [part.strip() for part in text.split(",")]
        if len(parts) != 4:
            raise UsageError(f"A phase point needs 4 comma-separated values, got {text!r}")
        try:
            return cls(*(float(part) for part in parts))
        except ValueError:
            raise UsageError(f"Invalid phase point {text!r}") from None

    @classmethod
    def origin(cls):
        return cls(0.0, 0.0, 0.0, 0.0)


# --- Nodes ---

@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    name: str

    def __post_init__(self):
        if self.name not in VARIABLES:
            raise UnknownIdentifierError(f"Unknown variable {self.name!r}")


@dataclass(frozen=True)
class Unary:
    fn: str
    arg: "Expr"


@dataclass(frozen=True)
class Binary:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Power:
    base: "Expr"
    exponent: int


Expr = Union[Const, Var, Unary, Binary, Power]
EXPR_TYPES = (Const, Var, Unary, Binary, Power)


def is_expr(obj):
    return isinstance(obj, EXPR_TYPES)


ZERO = Const(0.0)
ONE = Const(1.0)


def neg(e):
    return Unary("neg", e)


def add(a, b):
    return Binary("+", a, b)


def sub(a, b):
    return Binary("-", a, b)


def mul(a, b):
    return Binary("*", a, b)


def div(a, b):
    return Binary("/", a, b)


def total(terms):
    """Left-folded sum of a sequence of expressions (0 for an empty one)."""
    terms = list(terms)
    if not terms:
        return ZERO
    result = terms[0]
    for term in terms[1:]:
        result = add(result, term)
    return result


# --- Tokenizer / parser ---

_TOKEN_RE = re.compile(r"""
    (?P<ws>\s+)
  | (?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>[-+*/^()])
""", re.VERBOSE)


@dataclass(frozen=True)
class _Token:
    kind: str
    text: str
    offset: int


def _tokenize(text):
    tokens = []
    pos = 0
    while pos < len(text):
        match = _TOKEN_RE.match(text, pos)
        if not match:
            raise ExpressionSyntaxError(f"Unexpected character {text[pos]!r}", offset=pos, text=text)
        kind = match.lastgroup
        if kind != "ws":
            tokens.append(_Token(kind, match.group(), pos))
        pos = match.end()
    tokens.append(_Token("end", "", len(text)))
    return tokens


class _Parser:
    """
    Recursive descent over the grammar

        expr   := term (('+'|'-') term)*
        term   := unary (('*'|'/') unary)*
        unary  := '-' unary | power
        power  := atom ('^' exponent)?
        atom   := number | 'pi' | var | fn '(' expr ')' | '(' expr ')'

    so that power binds tighter than unary minus. Exponents must reduce to
    integer constants; '^' chains are right-associative.
    """

    def __init__(self, text):
        self.text = text
        self.tokens = _tokenize(text)
        self.pos = 0
        self.nesting = 0

    def peek(self):
        return self.tokens[self.pos]

    def advance(self):
        token = self.tokens[self.pos]
        self.pos += 1
        return token

    def check(self, *texts):
        token = self.peek()
        return token.kind == "op" and token.text in texts

    def enter(self, token):
        self.nesting += 1
        if self.nesting > MAX_NESTING:
            raise ExpressionSyntaxError(
                f"Expression nests more than {MAX_NESTING} levels deep", offset=token.offset, text=self.text
            )

    def leave(self):
        self.nesting -= 1

    def expect(self, text):
        token = self.peek()
        if not self.check(text):
            found = token.text or "end of input"
            raise ExpressionSyntaxError(f"Expected {text!r} but found {found!r}", offset=token.offset, text=self.text)
        return self.advance()

    def parse(self):
        result = self.expression()
        token = self.peek()
        if token.kind != "end":
            raise ExpressionSyntaxError(f"Unexpected {token.text!r}", offset=token.offset, text=self.text)
        return result

    def expression(self):
        left = self.term()
        while self.check("+", "-"):
            op = self.advance().text
            left = Binary(op, left, self.term())
        return left

    def term(self):
        left = self.unary()
        while self.check("*", "/"):
            op = self.advance().text
            left = Binary(op, left, self.unary())
        return left

    def unary(self):
        if self.check("-"):
            self.enter(self.advance())
            operand = self.unary()
            self.leave()
            return neg(operand)
        return self.power()

    def power(self):
        base = self.atom()
        if self.check("^"):
            caret = self.advance()
            return Power(base, self.exponent(caret.offset))
        return base

    def exponent(self, offset):
        negative = False
        if self.check("-"):
            self.advance()
            negative = True
        token = self.peek()
        if token.kind == "number":
            self.advance()
            value = float(token.text)
        elif self.check("("):
            self.enter(self.advance())
            inner = self.expression()
            self.expect(")")
            self.leave()
            if free_variables(inner):
                raise NonIntegerExponentError("Exponent must be an integer constant", offset=offset, text=self.text)
            try:
                value = evaluate(inner, PhasePoint.origin())
            except DomainError:
                raise NonIntegerExponentError("Exponent must be an integer constant", offset=offset, text=self.text) from None
        else:
            found = token.text or "end of input"
            raise ExpressionSyntaxError(f"Expected an integer exponent but found {found!r}", offset=token.offset, text=self.text)
        if negative:
            value = -value
        if self.check("^"):
            caret = self.advance()
            outer = self.exponent(caret.offset)
            try:
                value = value ** outer
            except (OverflowError, ZeroDivisionError):
                raise NonIntegerExponentError("Exponent must be an integer constant", offset=offset, text=self.text) from None
        if not (isinstance(value, (int, float)) and math.isfinite(value) and float(value).is_integer()):
            raise NonIntegerExponentError("Exponent must be an integer constant", offset=offset, text=self.text)
        if abs(value) > MAX_EXPONENT:
            raise NonIntegerExponentError(
                f"Exponent {int(value)} is out of range; |n| <= {MAX_EXPONENT}", offset=offset, text=self.text
            )
        return int(value)

    def atom(self):
        token = self.peek()
        if token.kind == "number":
            self.advance()
            value = float(token.text)
            if not math.isfinite(value):
                raise ExpressionSyntaxError(f"Number {token.text!r} out of range", offset=token.offset, text=self.text)
            return Const(value)
        if token.kind == "ident":
            self.advance()
            if token.text == "pi":
                return Const(math.pi)
            if token.text in VARIABLES:
                return Var(token.text)
            if token.text in FUNCTIONS:
                self.enter(self.expect("("))
                arg = self.expression()
                self.expect(")")
                self.leave()
                return Unary(token.text, arg)
            raise UnknownIdentifierError(f"Unknown identifier {token.text!r}", offset=token.offset, text=self.text)
        if self.check("("):
            self.enter(self.advance())
            inner = self.expression()
            self.expect(")")
            self.leave()
            return inner
        found = token.text or "end of input"
        raise ExpressionSyntaxError(f"Unexpected {found!r}", offset=token.offset, text=self.text)


def parse(text):
    """Parse an expression in x1, p1, x2, p2 into its AST."""
    try:
        e = _Parser(text).parse()
    except RecursionError:
        raise ExpressionSyntaxError("Expression is nested too deeply") from None
    levels = depth(e)
    if levels > MAX_DEPTH:
        raise ExpressionSyntaxError(f"Expression nests {levels} levels deep; at most {MAX_DEPTH} are supported")
    return e


# --- Unparse ---

_PRECEDENCE = {"+": 1, "-": 1, "*": 2, "/": 2}
_NEG_PRECEDENCE = 3
_POWER_PRECEDENCE = 4
_ATOM_PRECEDENCE = 5


def _precedence(e):
    if isinstance(e, Binary):
        return _PRECEDENCE[e.op]
    if isinstance(e, Unary) and e.fn == "neg":
        return _NEG_PRECEDENCE
    if isinstance(e, Power):
        return _POWER_PRECEDENCE
    if isinstance(e, Const) and (e.value < 0 or math.copysign(1.0, e.value) < 0):
        return _NEG_PRECEDENCE
    return _ATOM_PRECEDENCE


def _format_number(value):
    if value.is_integer() and abs(value) < 1e16:
        return str(int(value)) if value != 0 or math.copysign(1.0, value) > 0 else "-0"
    return repr(value)


def _wrap(e, needs_parens):
    text = unparse(e)
    return f"({text})" if needs_parens else text


def unparse(e):
    """Infix text for e; parse(unparse(e)) is structurally identical to e for parsed trees."""
    if isinstance(e, Const):
        return _format_number(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Unary):
        if e.fn == "neg":
            return "-" + _wrap(e.arg, _precedence(e.arg) < _NEG_PRECEDENCE)
        return f"{e.fn}({unparse(e.arg)})"
    if isinstance(e, Binary):
        prec = _PRECEDENCE[e.op]
        left = _wrap(e.left, _precedence(e.left) < prec)
        right = _wrap(e.right, _precedence(e.right) <= prec)
        return f"{left} {e.op} {right}"
    if isinstance(e, Power):
        base = _wrap(e.base, _precedence(e.base) < _ATOM_PRECEDENCE)
        exponent = str(e.exponent) if e.exponent >= 0 else f"({e.exponent})"
        return f"{base}^{exponent}"
    raise TypeError(f"Not an expression: {e!r}")


# --- Traversal helpers ---

def children(e):
    if isinstance(e, Unary):
        return (e.arg,)
    if isinstance(e, Binary):
        return (e.left, e.right)
    if isinstance(e, Power):
        return (e.base,)
    return ()


def depth(e):
    """Height of the tree; a leaf has depth 1."""
    deepest = 0
    stack = [(e, 1)]
    while stack:
        node, level = stack.pop()
        deepest = max(deepest, level)
        stack.extend((child, level + 1) for child in children(node))
    return deepest


def free_variables(e):
    """The set of variable names that occur in e."""
    if isinstance(e, Var):
        return frozenset((e.name,))
    found = frozenset()
    for child in children(e):
        found |= free_variables(child)
    return found


def is_constant(e):
    return not free_variables(e)


def substitute(e, mapping):
    """Replace every variable named in mapping by the corresponding expression."""
    if isinstance(e, Var):
        return mapping.get(e.name, e)
    if isinstance(e, Unary):
        return Unary(e.fn, substitute(e.arg, mapping))
    if isinstance(e, Binary):
        return Binary(e.op, substitute(e.left, mapping), substitute(e.right, mapping))
    if isinstance(e, Power):
        return Power(substitute(e.base, mapping), e.exponent)
    return e


# --- Scalar evaluation ---

def _domain_error(reason, subtree, point=None):
    return DomainError(f"{reason} in {unparse(subtree)}", subtree=unparse(subtree), point=point)


def _apply_unary(e, value):
    fn = e.fn
    if fn == "neg":
        return -value
    if fn == "ln":
        if value <= 0:
            raise _domain_error(f"ln of non-positive value {value!r}", e)
        return math.log(value)
    try:
        return getattr(math, fn)(value)
    except OverflowError:
        raise _domain_error("overflow", e) from None


def _apply_binary(e, left, right):
    op = e.op
    if op == "+":
        return left + right
    if op == "-":
        return left - right
    if op == "*":
        return left * right
    if right == 0:
        raise _domain_error("division by zero", e)
    return left / right


def _apply_power(e, base):
    if base == 0 and e.exponent < 0:
        raise _domain_error("division by zero", e)
    try:
        return base ** e.exponent
    except OverflowError:
        raise _domain_error("overflow", e) from None


def _evaluate(e, pt):
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        return pt[e.name]
    if isinstance(e, Unary):
        return _apply_unary(e, _evaluate(e.arg, pt))
    if isinstance(e, Binary):
        return _apply_binary(e, _evaluate(e.left, pt), _evaluate(e.right, pt))
    if isinstance(e, Power):
        return _apply_power(e, _evaluate(e.base, pt))
    raise TypeError(f"Not an expression: {e!r}")


def evaluate(e, pt):
    """Exact recursive evaluation of e at pt; DomainError names the offending subtree and point."""
    try:
        return float(_evaluate(e, pt))
    except DomainError as err:
        raise err.at(tuple(pt)) from None


# --- Vectorized evaluation ---

_NUMPY_FUNCTIONS = {
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "ln": np.log,
    "sinh": np.sinh,
    "cosh": np.cosh,
}


def _first_bad(mask, e, reason, pts):
    index = int(np.flatnonzero(mask)[0])
    raise _domain_error(reason, e, point=tuple(float(v) for v in pts[index]))


def _evaluate_batch(e, pts):
    n = pts.shape[0]
    if isinstance(e, Const):
        return np.full(n, e.value)
    if isinstance(e, Var):
        return pts[:, VARIABLE_INDEX[e.name]]
    if isinstance(e, Unary):
        value = _evaluate_batch(e.arg, pts)
        if e.fn == "neg":
            return -value
        if e.fn == "ln" and np.any(value <= 0):
            _first_bad(value <= 0, e, "ln of non-positive value", pts)
        with np.errstate(over="ignore", invalid="ignore"):
            out = _NUMPY_FUNCTIONS[e.fn](value)
        overflow = ~np.isfinite(out) & np.isfinite(value)
        if np.any(overflow):
            _first_bad(overflow, e, "overflow", pts)
        return out
    if isinstance(e, Binary):
        left = _evaluate_batch(e.left, pts)
        right = _evaluate_batch(e.right, pts)
        if e.op == "+":
            return left + right
        if e.op == "-":
            return left - right
        if e.op == "*":
            return left * right
        if np.any(right == 0):
            _first_bad(right == 0, e, "division by zero", pts)
        return left / right
    if isinstance(e, Power):
        base = _evaluate_batch(e.base, pts)
        if e.exponent < 0 and np.any(base == 0):
            _first_bad(base == 0, e, "division by zero", pts)
        with np.errstate(over="ignore", invalid="ignore"):
            out = np.power(base, float(e.exponent))
        overflow = ~np.isfinite(out) & np.isfinite(base)
        if np.any(overflow):
            _first_bad(overflow, e, "overflow", pts)
        return out
    raise TypeError(f"Not an expression: {e!r}")


def evaluate_batch(e, pts):
    """Evaluate e at every row (x1, p1, x2, p2) of pts, returning an array of shape (N,)."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    if pts.shape[1] != 4:
        raise UsageError(f"Sample array must have 4 columns, got shape {pts.shape}")
    return np.asarray(_evaluate_batch(e, pts), dtype=float)


# --- Differentiation ---

@singledispatch
def _derive(e, var):
    raise TypeError(f"Cannot differentiate {type(e).__name__}")


@_derive.register
def _(e: Const, var):
    return ZERO


@_derive.register
def _(e: Var, var):
    return ONE if e.name == var else ZERO


@_derive.register
def _(e: Unary, var):
    a = e.arg
    da = _derive(a, var)
    if e.fn == "neg":
        return neg(da)
    if e.fn == "sin":
        outer = Unary("cos", a)
    elif e.fn == "cos":
        outer = neg(Unary("sin", a))
    elif e.fn == "exp":
        outer = e
    elif e.fn == "ln":
        return div(da, a)
    elif e.fn == "sinh":
        outer = Unary("cosh", a)
    elif e.fn == "cosh":
        outer = Unary("sinh", a)
    else:
        raise TypeError(f"Unknown function {e.fn!r}")
    return mul(outer, da)


@_derive.register
def _(e: Binary, var):
    a, b = e.left, e.right
    da, db = _derive(a, var), _derive(b, var)
    if e.op in ("+", "-"):
        return Binary(e.op, da, db)
    if e.op == "*":
        return add(mul(da, b), mul(a, db))
    # quotient rule
    return div(sub(mul(da, b), mul(a, db)), Power(b, 2))


@_derive.register
def _(e: Power, var):
    if e.exponent == 0:
        return ZERO
    return mul(mul(Const(float(e.exponent)), Power(e.base, e.exponent - 1)), _derive(e.base, var))


def differentiate(e, var):
    """Symbolic partial derivative of e with respect to var (one of x1, p1, x2, p2)."""
    if var not in VARIABLES:
        raise UsageError(f"Cannot differentiate with respect to {var!r}")
    return simplify(_derive(e, var))


# --- Simplification ---

def _is(e, value):
    return isinstance(e, Const) and e.value == value


def _fold(e):
    try:
        return Const(evaluate(e, PhasePoint.origin()))
    except DomainError:
        # keep the singular subtree so evaluation still reports it
        return e


def _simplify_unary(fn, arg):
    if fn == "neg":
        if isinstance(arg, Unary) and arg.fn == "neg":
            return arg.arg
        if isinstance(arg, Const):
            return Const(-arg.value)
        return neg(arg)
    node = Unary(fn, arg)
    return _fold(node) if isinstance(arg, Const) else node


def _simplify_binary(op, a, b):
    if isinstance(a, Const) and isinstance(b, Const):
        return _fold(Binary(op, a, b))
    if op == "+":
        if _is(a, 0):
            return b
        if _is(b, 0):
            return a
        if isinstance(b, Unary) and b.fn == "neg":
            return sub(a, b.arg)
    elif op == "-":
        if _is(b, 0):
            return a
        if _is(a, 0):
            return _simplify_unary("neg", b)
        if isinstance(b, Unary) and b.fn == "neg":
            return add(a, b.arg)
    elif op == "*":
        if _is(a, 0) or _is(b, 0):
            return ZERO
        if _is(a, 1):
            return b
        if _is(b, 1):
            return a
        if _is(a, -1):
            return _simplify_unary("neg", b)
        if _is(b, -1):
            return _simplify_unary("neg", a)
    elif op == "/":
        if _is(b, 1):
            return a
        if _is(a, 0) and not _is(b, 0):
            return ZERO
    return Binary(op, a, b)


def _simplify_power(base, exponent):
    if exponent == 0:
        return ONE
    if exponent == 1:
        return base
    node = Power(base, exponent)
    return _fold(node) if isinstance(base, Const) else node


def simplify(e):
    """
    Constant folding, +-0 / *1 / *0 elimination and double-negation removal.

    Not a normal form: two equal expressions may simplify to different trees.
    """
    if isinstance(e, Unary):
        return _simplify_unary(e.fn, simplify(e.arg))
    if isinstance(e, Binary):
        return _simplify_binary(e.op, simplify(e.left), simplify(e.right))
    if isinstance(e, Power):
        return _simplify_power(simplify(e.base), e.exponent)
    return e
