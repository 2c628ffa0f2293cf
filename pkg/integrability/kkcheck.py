"""
Sampling test of the four second-order conditions on H and of the harmonic
criterion for separable Hamiltonians H = T(p1, p2) + V(x1, x2).

A satisfied verdict means every sampled residual is within tolerance. It is
strong probabilistic evidence that the residual expressions vanish
identically, not a proof. A violated verdict means the Hamiltonian is not
certified by this test; it does not prove non-integrability.
"""
import logging
from dataclasses import dataclass, field
import numpy as np

from .deriv import gradient_batch, hessian_batch, second_derivative, second_partial
from .errors import DegenerateHamiltonianError, SeparationError, UsageError
from .expr import (
    COORDINATES,
    MOMENTA,
    VARIABLES,
    Binary,
    PhasePoint,
    Unary,
    Var,
    ZERO,
    add,
    div,
    evaluate_batch,
    free_variables,
    is_constant,
    mul,
    neg,
    simplify,
    substitute,
    total,
    unparse,
)

logger = logging.getLogger(__name__)

CONDITIONS = ("laplacian-x", "laplacian-p", "mixed-sum", "mixed-difference")

# (first pair, sign, second pair): residual = H_first + sign * H_second
_CONDITION_TERMS = (
    (("x1", "x1"), 1.0, ("x2", "x2")),
    (("p1", "p1"), 1.0, ("p2", "p2")),
    (("x1", "p2"), 1.0, ("x2", "p1")),
    (("x1", "p1"), -1.0, ("x2", "p2")),
)

SATISFIED = "satisfied"
VIOLATED = "violated"
MODES = ("absolute", "relative")

EVIDENCE_NOTE = (
    "satisfied means all sampled residuals are within tolerance: probabilistic "
    "evidence that the conditions hold identically, not a proof"
)


@dataclass(frozen=True)
class SampleDomain:
    """Per-variable intervals, sample count and seed for the residual sampling."""
    bounds: tuple = ((-1.0, 1.0),) * 4
    samples: int = 200
    seed: int = 0

    def __post_init__(self):
        if len(self.bounds) != 4:
            raise UsageError(f"A sample domain needs 4 intervals, got {len(self.bounds)}")
        for var, (lo, hi) in zip(VARIABLES, self.bounds):
            if not lo < hi:
                raise UsageError(f"Empty interval for {var}: [{lo}, {hi}]")
        if self.samples < 1:
            raise UsageError(f"Sample count must be at least 1, got {self.samples}")

    @classmethod
    def parse(cls, text, samples=200, seed=0):
        """Parse "lo:hi,lo:hi,lo:hi,lo:hi"."""
        intervals = [part.strip() for part in text.split(",")]
        if len(intervals) != 4:
            raise UsageError(f"Domain needs 4 comma-separated lo:hi intervals, got {text!r}")
        bounds = []
        for interval in intervals:
            try:
                lo, hi = (float(v) for v in interval.split(":"))
            except ValueError:
                raise UsageError(f"Invalid interval {interval!r} in domain {text!r}") from None
            bounds.append((lo, hi))
        return cls(tuple(bounds), samples, seed)

    def describe(self):
        return ",".join(f"{lo!r}:{hi!r}" for lo, hi in self.bounds)

    def points(self):
        """The seeded sample points, shape (samples, 4)."""
        rng = np.random.default_rng(self.seed)
        lo = np.array([b[0] for b in self.bounds], dtype=float)
        hi = np.array([b[1] for b in self.bounds], dtype=float)
        return rng.uniform(lo, hi, size=(self.samples, 4))


@dataclass(frozen=True)
class ConditionReport:
    max_abs: tuple
    max_scaled: tuple
    worst_points: tuple
    worst_point: PhasePoint
    verdict: str
    tolerance: float
    samples: int
    mode: str = "absolute"
    note: str = field(default=EVIDENCE_NOTE)

    @property
    def satisfied(self):
        return self.verdict == SATISFIED

    def residual_rows(self):
        return [
            {
                "condition": name,
                "max_abs": self.max_abs[i],
                "max_scaled": self.max_scaled[i],
                "worst_point": list(self.worst_points[i]),
            }
            for i, name in enumerate(CONDITIONS)
        ]


@dataclass(frozen=True)
class SeparableParts:
    """H = T(p1, p2) + V(x1, x2)."""
    T: object
    V: object

    def __post_init__(self):
        stray = free_variables(self.T) - set(MOMENTA)
        if stray:
            raise SeparationError(f"T must depend on p1, p2 only; it mentions {', '.join(sorted(stray))}")
        stray = free_variables(self.V) - set(COORDINATES)
        if stray:
            raise SeparationError(f"V must depend on x1, x2 only; it mentions {', '.join(sorted(stray))}")

    @property
    def hamiltonian(self):
        return add(self.T, self.V)


# --- Pointwise residuals ---

def condition_residuals(H, pt):
    """(H_x1x1 + H_x2x2, H_p1p1 + H_p2p2, H_x1p2 + H_x2p1, H_x1p1 - H_x2p2) at pt."""
    return tuple(
        second_partial(H, pt, *first) + sign * second_partial(H, pt, *second)
        for first, sign, second in _CONDITION_TERMS
    )


def chart_condition_residuals(H, pt):
    """
    Residuals of the complex-chart conditions for u(x, y, p, q) = H(x, p, y, -q):
    (u_xx + u_yy, u_pp + u_qq, u_xp + u_yq, u_xq - u_yp) at the image of pt.

    u is stored over the same four slots read as x1 -> x, p1 -> p, x2 -> y, p2 -> q.
    """
    u = substitute(H, {"p2": neg(Var("p2"))})
    mapped = PhasePoint(pt.x1, pt.p1, pt.x2, -pt.p2)

    def d2(vi, vj):
        return second_partial(u, mapped, vi, vj)

    return (
        d2("x1", "x1") + d2("x2", "x2"),
        d2("p1", "p1") + d2("p2", "p2"),
        d2("x1", "p1") + d2("x2", "p2"),
        d2("x1", "p2") - d2("x2", "p1"),
    )


# --- Sampling ---

def _check_tolerance(tol, mode):
    if not tol > 0:
        raise UsageError(f"Tolerance must be positive, got {tol!r}")
    if mode not in MODES:
        raise UsageError(f"Unknown tolerance mode {mode!r}; expected one of {', '.join(MODES)}")


def _reject_constant(H, pts):
    if not np.any(gradient_batch(H, pts)):
        logger.warning("Rejected constant Hamiltonian %s", unparse(H))
        raise DegenerateHamiltonianError(
            "H has a vanishing gradient at every sample: a constant Hamiltonian has no independent invariant",
            hamiltonian=unparse(H),
        )


def _hessian_norms(H, pts):
    return np.linalg.norm(hessian_batch(H, pts), axis=(1, 2))


def _assemble(residuals, scales, pts, tol, mode):
    absolute = np.abs(residuals)
    scaled = absolute / np.maximum(1.0, scales)[:, None]
    worst = np.argmax(absolute, axis=0)
    max_abs = tuple(float(absolute[worst[k], k]) for k in range(4))
    max_scaled = tuple(float(v) for v in scaled.max(axis=0))
    worst_points = tuple(PhasePoint.from_array(pts[worst[k]]) for k in range(4))
    judged = max_abs if mode == "absolute" else max_scaled
    verdict = SATISFIED if all(v <= tol for v in judged) else VIOLATED
    overall = int(np.argmax(max_abs))
    return ConditionReport(
        max_abs=max_abs,
        max_scaled=max_scaled,
        worst_points=worst_points,
        worst_point=worst_points[overall],
        verdict=verdict,
        tolerance=tol,
        samples=pts.shape[0],
        mode=mode,
    )


def check_conditions(H, dom=None, tol=1e-9, mode="absolute"):
    """Sample the four condition residuals over dom and decide the verdict."""
    dom = dom or SampleDomain()
    _check_tolerance(tol, mode)
    pts = dom.points()
    _reject_constant(H, pts)
    residuals = np.column_stack([
        evaluate_batch(second_derivative(H, *first), pts)
        + sign * evaluate_batch(second_derivative(H, *second), pts)
        for first, sign, second in _CONDITION_TERMS
    ])
    report = _assemble(residuals, _hessian_norms(H, pts), pts, tol, mode)
    logger.info("conditions %s over %d samples (max residual %.3g)", report.verdict, report.samples, max(report.max_abs))
    return report


# --- Separable form ---

def _additive_terms(e):
    """Split e into additive terms, distributing constant factors and negations."""
    if isinstance(e, Binary):
        if e.op == "+":
            return _additive_terms(e.left) + _additive_terms(e.right)
        if e.op == "-":
            return _additive_terms(e.left) + [neg(t) for t in _additive_terms(e.right)]
        if e.op == "*" and is_constant(e.left):
            return [mul(e.left, t) for t in _additive_terms(e.right)]
        if e.op == "*" and is_constant(e.right):
            return [mul(t, e.right) for t in _additive_terms(e.left)]
        if e.op == "/" and is_constant(e.right):
            return [div(t, e.right) for t in _additive_terms(e.left)]
    if isinstance(e, Unary) and e.fn == "neg":
        return [neg(t) for t in _additive_terms(e.arg)]
    return [e]


def split_separable(H):
    """Split H into T(p1, p2) + V(x1, x2); SeparationError if some term mixes coordinates and momenta."""
    kinetic, potential = [], []
    for term in _additive_terms(H):
        variables = free_variables(term)
        if variables <= set(COORDINATES):
            potential.append(term)
        elif variables <= set(MOMENTA):
            kinetic.append(term)
        else:
            raise SeparationError(f"Term {unparse(term)} mixes coordinates and momenta")
    return SeparableParts(
        T=simplify(total(kinetic)) if kinetic else ZERO,
        V=simplify(total(potential)) if potential else ZERO,
    )


def check_separable_harmonic(parts, dom=None, tol=1e-9, mode="absolute"):
    """
    Harmonic test for H = T + V: V must be harmonic in (x1, x2) and T in (p1, p2).
    The mixed conditions hold trivially for this form and are reported as zero.
    """
    dom = dom or SampleDomain()
    _check_tolerance(tol, mode)
    pts = dom.points()
    H = parts.hamiltonian
    _reject_constant(H, pts)
    laplacian_v = simplify(add(second_derivative(parts.V, "x1", "x1"), second_derivative(parts.V, "x2", "x2")))
    laplacian_t = simplify(add(second_derivative(parts.T, "p1", "p1"), second_derivative(parts.T, "p2", "p2")))
    zeros = np.zeros(pts.shape[0])
    residuals = np.column_stack([
        evaluate_batch(laplacian_v, pts),
        evaluate_batch(laplacian_t, pts),
        zeros,
        zeros,
    ])
    return _assemble(residuals, _hessian_norms(H, pts), pts, tol, mode)
