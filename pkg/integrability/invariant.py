"""
Construction of the second constant of motion I from H.

The Cauchy-Riemann relations fix the gradient of I in terms of the gradient
of H:

    I_x1 = -H_x2,   I_p1 = H_p2,   I_x2 = H_x1,   I_p2 = -H_p1

When the four second-order conditions hold this one-form is exact, so I is
its line integral from a base point. The integral is taken along the
straight segment with composite Gauss-Legendre quadrature. Polynomial
Hamiltonians also get a closed form by successive antidifferentiation.

I is normalized by I(base) = 0. It is only guaranteed on a path-connected
region free of singularities of H that contains the integration segments.
"""
import logging
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .deriv import GradientVec, derivative, gradient, gradient_batch
from .errors import (
    DegenerateHamiltonianError,
    DomainError,
    NonExactError,
    PathDomainError,
    UnsupportedClassError,
    UsageError,
)
from .expr import (
    VARIABLES,
    ZERO,
    Binary,
    Const,
    PhasePoint,
    Power,
    Unary,
    Var,
    add,
    evaluate,
    evaluate_batch,
    is_constant,
    mul,
    neg,
    sub,
    unparse,
)

logger = logging.getLogger(__name__)

LINE_INTEGRAL = "line-integral"
CLOSED_FORM = "closed-form"


@dataclass(frozen=True)
class QuadratureSetting:
    """Composite Gauss-Legendre rule: `order` nodes on each of `segments` equal pieces of [0, 1]."""
    segments: int = 16
    order: int = 8
    tol: float = 1e-10

    def __post_init__(self):
        if self.segments < 1:
            raise UsageError(f"Quadrature needs at least one segment, got {self.segments}")
        if self.order < 1:
            raise UsageError(f"Quadrature order must be at least 1, got {self.order}")
        if not self.tol > 0:
            raise UsageError(f"Quadrature tolerance must be positive, got {self.tol!r}")

    def nodes(self):
        """Nodes in [0, 1] and their weights."""
        return _composite_rule(self.segments, self.order)


@lru_cache(maxsize=32)
def _composite_rule(segments, order):
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(0.0, 1.0, segments + 1)
    half = 0.5 * (edges[1:] - edges[:-1])
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


# --- The Cauchy-Riemann one-form ---

def cr_gradient_of_I(H, pt):
    """(I_x1, I_p1, I_x2, I_p2) = (-H_x2, H_p2, H_x1, -H_p1) at pt."""
    g = gradient(H, pt)
    return GradientVec(-g.dx2, g.dp2, g.dx1, -g.dp1)


def cr_gradient_batch(H, pts):
    g = gradient_batch(H, pts)
    return np.column_stack([-g[:, 2], g[:, 3], g[:, 0], -g[:, 1]])


def _segment_integrals(H, starts, ends, q):
    """Line integrals of the one-form along the segments starts[k] -> ends[k]."""
    t, w = q.nodes()
    disp = ends - starts
    pts = (starts[:, None, :] + t[None, :, None] * disp[:, None, :]).reshape(-1, 4)
    try:
        forms = cr_gradient_batch(H, pts).reshape(starts.shape[0], t.size, 4)
    except DomainError as err:
        raise PathDomainError(
            f"Integration path leaves the domain of H's partials ({err.message}); try a different base point",
            subtree=err.subtree,
            point=err.point,
        ) from None
    return np.einsum("j,kjd,kd->k", w, forms, disp)


def line_integral(H, a, b, q=None):
    """Integral of the one-form along the straight segment a -> b."""
    q = q or QuadratureSetting()
    if tuple(a) == tuple(b):
        return 0.0
    starts = np.atleast_2d(a.as_array())
    ends = np.atleast_2d(b.as_array())
    return float(_segment_integrals(H, starts, ends, q)[0])


def path_independence_residual(H, a, b, waypoint, q=None):
    """|integral over a -> b  -  integral over a -> waypoint -> b|; near zero iff the one-form is exact there."""
    q = q or QuadratureSetting()
    direct = line_integral(H, a, b, q)
    detour = line_integral(H, a, waypoint, q) + line_integral(H, waypoint, b, q)
    return abs(direct - detour)


# --- Invariant evaluator ---

@dataclass(frozen=True)
class InvariantFn:
    """
    I normalized so that I(base) = 0. With a closed form, I = closed_form + constant;
    otherwise I is the line integral from base and constant is 0.
    """
    hamiltonian: object
    base: PhasePoint
    quadrature: QuadratureSetting
    backend: str = LINE_INTEGRAL
    closed_form: object = None
    constant: float = 0.0

    def __call__(self, pt):
        if self.backend == CLOSED_FORM:
            return evaluate(self.closed_form, pt) + self.constant
        return line_integral(self.hamiltonian, self.base, pt, self.quadrature)

    def evaluate_many(self, points):
        """Values of I at each row (x1, p1, x2, p2) of points."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if self.backend == CLOSED_FORM:
            return evaluate_batch(self.closed_form, points) + self.constant
        starts = np.repeat(self.base.as_array()[None, :], points.shape[0], axis=0)
        return _segment_integrals(self.hamiltonian, starts, points, self.quadrature)


def _reject_constant(H):
    if all(derivative(H, var) == ZERO for var in VARIABLES):
        raise DegenerateHamiltonianError(
            "H is constant: there is no independent invariant to construct", hamiltonian=unparse(H)
        )


def build_invariant(H, base=None, q=None):
    """Line-integral evaluator for I with I(base) = 0."""
    base = base or PhasePoint.origin()
    q = q or QuadratureSetting()
    _reject_constant(H)
    # touch the base point so a singular base fails here rather than on first use
    try:
        cr_gradient_of_I(H, base)
    except DomainError as err:
        raise PathDomainError(f"Base point is outside the domain of H ({err.message})", point=tuple(base)) from None
    return InvariantFn(hamiltonian=H, base=base, quadrature=q)


def construct_invariant(H, base=None, q=None):
    """
    Closed form when H is a polynomial, otherwise the line integral.

    The closed form is kept only if it matches the line integral at a trial
    point to the quadrature tolerance.
    """
    numeric = build_invariant(H, base, q)
    try:
        closed = symbolic_invariant(H)
    except UnsupportedClassError as err:
        logger.info("symbolic invariant unavailable (%s); using the line integral", err.message)
        return numeric
    constant = -evaluate(closed, numeric.base)
    trial = PhasePoint.from_array(numeric.base.as_array() + 0.5)
    expected = numeric(trial)
    got = evaluate(closed, trial) + constant
    if abs(got - expected) > numeric.quadrature.tol * max(1.0, abs(expected)):
        logger.warning("closed form disagrees with the line integral (%r vs %r); using the line integral", got, expected)
        return numeric
    return InvariantFn(
        hamiltonian=H,
        base=numeric.base,
        quadrature=numeric.quadrature,
        backend=CLOSED_FORM,
        closed_form=closed,
        constant=constant,
    )


# --- Polynomial closed form ---

class Polynomial:
    """Sparse polynomial in (x1, p1, x2, p2): exponent tuple -> coefficient."""

    def __init__(self, terms=None):
        self.terms = {k: v for k, v in (terms or {}).items() if v != 0}

    @classmethod
    def constant(cls, value):
        return cls({(0, 0, 0, 0): float(value)})

    @classmethod
    def variable(cls, name):
        exponents = [0, 0, 0, 0]
        exponents[VARIABLES.index(name)] = 1
        return cls({tuple(exponents): 1.0})

    @classmethod
    def from_expr(cls, e):
        """Convert an expression built from +, -, *, integer powers and constant divisors."""
        if is_constant(e):
            try:
                return cls.constant(evaluate(e, PhasePoint.origin()))
            except DomainError:
                raise UnsupportedClassError(f"Constant subexpression {unparse(e)} is singular") from None
        if isinstance(e, Var):
            return cls.variable(e.name)
        if isinstance(e, Unary):
            if e.fn == "neg":
                return cls.from_expr(e.arg).scale(-1.0)
            raise UnsupportedClassError(f"{e.fn}() makes H non-polynomial")
        if isinstance(e, Binary):
            left = cls.from_expr(e.left)
            if e.op == "/":
                if not is_constant(e.right):
                    raise UnsupportedClassError(f"Division by {unparse(e.right)} makes H non-polynomial")
                divisor = cls.from_expr(e.right).terms.get((0, 0, 0, 0), 0.0)
                if divisor == 0:
                    raise UnsupportedClassError(f"Division by zero in {unparse(e)}")
                return left.scale(1.0 / divisor)
            right = cls.from_expr(e.right)
            if e.op == "+":
                return left + right
            if e.op == "-":
                return left - right
            return left * right
        if isinstance(e, Power):
            if e.exponent < 0:
                raise UnsupportedClassError(f"Negative power in {unparse(e)} makes H non-polynomial")
            base = cls.from_expr(e.base)
            result = cls.constant(1.0)
            for _ in range(e.exponent):
                result = result * base
            return result
        raise UnsupportedClassError(f"Unsupported node {e!r}")

    def __add__(self, other):
        terms = dict(self.terms)
        for k, v in other.terms.items():
            terms[k] = terms.get(k, 0.0) + v
        return Polynomial(terms)

    def __sub__(self, other):
        return self + other.scale(-1.0)

    def __mul__(self, other):
        terms = {}
        for ka, va in self.terms.items():
            for kb, vb in other.terms.items():
                k = tuple(a + b for a, b in zip(ka, kb))
                terms[k] = terms.get(k, 0.0) + va * vb
        return Polynomial(terms)

    def scale(self, factor):
        return Polynomial({k: v * factor for k, v in self.terms.items()})

    def derivative(self, index):
        terms = {}
        for k, v in self.terms.items():
            if k[index]:
                lowered = k[:index] + (k[index] - 1,) + k[index + 1:]
                terms[lowered] = terms.get(lowered, 0.0) + v * k[index]
        return Polynomial(terms)

    def antiderivative(self, index):
        terms = {}
        for k, v in self.terms.items():
            raised = k[:index] + (k[index] + 1,) + k[index + 1:]
            terms[raised] = v / raised[index]
        return Polynomial(terms)

    def pruned(self, atol):
        return Polynomial({k: v for k, v in self.terms.items() if abs(v) > atol})

    def depends_on(self, index):
        return any(k[index] for k in self.terms)

    def magnitude(self):
        return max((abs(v) for v in self.terms.values()), default=0.0)

    def to_expr(self):
        """Sum of monomials, highest degree first."""
        if not self.terms:
            return ZERO
        ordered = sorted(self.terms.items(), key=lambda kv: (-sum(kv[0]), tuple(-e for e in kv[0])))
        result = None
        for exponents, coeff in ordered:
            factors = []
            for name, power in zip(VARIABLES, exponents):
                if power == 1:
                    factors.append(Var(name))
                elif power > 1:
                    factors.append(Power(Var(name), power))
            magnitude = abs(coeff)
            if not factors:
                term = Const(magnitude)
            else:
                term = factors[0]
                for factor in factors[1:]:
                    term = mul(term, factor)
                if magnitude != 1.0:
                    term = mul(Const(magnitude), term)
            if result is None:
                result = neg(term) if coeff < 0 else term
            else:
                result = sub(result, term) if coeff < 0 else add(result, term)
        return result


# integrate I_x1, then fix the x1-free remainder against I_x2, I_p1, I_p2
_FIXING_ORDER = (0, 2, 1, 3)


def symbolic_invariant(H):
    """Closed-form I with I(0, 0, 0, 0) = 0 for a polynomial Hamiltonian."""
    P = Polynomial.from_expr(H)
    x1, p1, x2, p2 = range(4)
    target = {
        x1: P.derivative(x2).scale(-1.0),
        p1: P.derivative(p2),
        x2: P.derivative(x1),
        p2: P.derivative(p1).scale(-1.0),
    }
    atol = 1e-12 * max(1.0, max(t.magnitude() for t in target.values()))
    result = Polynomial()
    fixed = []
    for index in _FIXING_ORDER:
        remainder = (target[index] - result.derivative(index)).pruned(atol)
        for done in fixed:
            if remainder.depends_on(done):
                raise NonExactError(
                    f"The Cauchy-Riemann one-form of H is not exact: d I/d {VARIABLES[index]} "
                    f"still depends on {VARIABLES[done]}",
                    hamiltonian=unparse(H),
                )
        result = result + remainder.antiderivative(index)
        fixed.append(index)
    return result.pruned(atol).to_expr()
