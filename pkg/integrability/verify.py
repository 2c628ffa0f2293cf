"""
Dynamical verification of a Hamiltonian and its constructed invariant.

Hamilton flow integration with conservation-drift monitoring, the Poisson
bracket residual, the functional-independence test and the comparison with
the complexified Hamilton equations.
"""
import logging
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .deriv import GradientVec, derivative, gradient
from .errors import DomainError, MethodMismatchError, SeparationError, UsageError
from .expr import VARIABLES, PhasePoint, evaluate, evaluate_batch, is_expr
from .invariant import InvariantFn, cr_gradient_of_I
from .kkcheck import split_separable

logger = logging.getLogger(__name__)

METHODS = ("rk4", "leapfrog")
DEFAULT_BRACKET_STEP = 1e-5
DEFAULT_INDEPENDENCE_TOL = 1e-8

INDEPENDENT = "independent"
INDETERMINATE = "indeterminate"


# --- Hamilton's equations ---

def _point(y):
    if not np.all(np.isfinite(y)):
        raise DomainError("Trajectory left the finite phase space", point=tuple(float(v) for v in y))
    return PhasePoint.from_array(y)


def hamilton_rhs(H, pt):
    """(dx1, dp1, dx2, dp2)/dt = (H_p1, -H_x1, H_p2, -H_x2)."""
    g = gradient(H, pt)
    return np.array([g.dp1, -g.dx1, g.dp2, -g.dx2])


def _rk4_step(rhs, y, h):
    k1 = rhs(y)
    k2 = rhs(y + 0.5 * h * k1)
    k3 = rhs(y + 0.5 * h * k2)
    k4 = rhs(y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _leapfrog_stepper(H):
    """Kick-drift-kick step for H = T(p) + V(x)."""
    try:
        parts = split_separable(H)
    except SeparationError as err:
        raise MethodMismatchError(f"leapfrog needs H = T(p1, p2) + V(x1, x2): {err.message}") from None
    dV = (derivative(parts.V, "x1"), derivative(parts.V, "x2"))
    dT = (derivative(parts.T, "p1"), derivative(parts.T, "p2"))

    def force(y):
        pt = _point(y)
        return np.array([evaluate(dV[0], pt), evaluate(dV[1], pt)])

    def velocity(y):
        pt = _point(y)
        return np.array([evaluate(dT[0], pt), evaluate(dT[1], pt)])

    def step(y, h):
        y = y.copy()
        y[[1, 3]] -= 0.5 * h * force(y)
        y[[0, 2]] += h * velocity(y)
        y[[1, 3]] -= 0.5 * h * force(y)
        return y

    return step


def _step_count(T, h):
    if not T > 0:
        raise UsageError(f"Integration time must be positive, got {T!r}")
    if not 0 < h <= T:
        raise UsageError(f"Step must satisfy 0 < h <= T, got h={h!r}, T={T!r}")
    return max(1, int(round(T / h)))


@dataclass(frozen=True)
class Trajectory:
    """Samples at times 0, h, 2h, ...; drift is measured against the first sample."""
    times: np.ndarray
    samples: np.ndarray
    h: float
    method: str
    max_dH: float
    max_dI: object = None
    truncated: bool = False

    def __len__(self):
        return self.samples.shape[0]

    def __iter__(self):
        for t, row in zip(self.times, self.samples):
            yield float(t), PhasePoint.from_array(row)

    def summary(self):
        return {
            "T": float(self.times[-1]),
            "h": self.h,
            "method": self.method,
            "steps": len(self) - 1,
            "max_dH": self.max_dH,
            "max_dI": self.max_dI,
            "truncated": self.truncated,
        }


def _values(fn, samples):
    if is_expr(fn):
        return evaluate_batch(fn, samples)
    if isinstance(fn, InvariantFn):
        return fn.evaluate_many(samples)
    return np.array([fn(PhasePoint.from_array(row)) for row in samples])


def integrate_flow(H, pt0, T, h, method="rk4", invariant=None):
    """
    Integrate Hamilton's equations from pt0 for round(T/h) steps of size h.

    `invariant` (an InvariantFn, an expression or any callable on phase
    points) enables the drift statistic for I. A domain exit stops the
    integration and returns the trajectory so far with `truncated` set.
    """
    if method not in METHODS:
        raise UsageError(f"Unknown method {method!r}; expected one of {', '.join(METHODS)}")
    n = _step_count(T, h)
    if method == "leapfrog":
        step = _leapfrog_stepper(H)
    else:
        def rhs(y):
            return hamilton_rhs(H, _point(y))

        def step(y, dt):
            return _rk4_step(rhs, y, dt)

    y = pt0.as_array()
    samples = [y]
    truncated = False
    for k in range(n):
        try:
            y = step(y, h)
            _point(y)
        except DomainError as err:
            logger.warning("trajectory truncated at t=%g after %d steps: %s", k * h, k, err.message)
            truncated = True
            break
        samples.append(y)
    samples = np.array(samples)

    energies = evaluate_batch(H, samples)
    max_dH = float(np.max(np.abs(energies - energies[0])))
    max_dI = None
    if invariant is not None:
        values = _values(invariant, samples)
        max_dI = float(np.max(np.abs(values - values[0])))
    return Trajectory(
        times=h * np.arange(samples.shape[0]),
        samples=samples,
        h=h,
        method=method,
        max_dH=max_dH,
        max_dI=max_dI,
        truncated=truncated,
    )


# --- Poisson bracket ---

def poisson_bracket(grad_f, grad_g):
    """{F, G} = sum_k (F_xk G_pk - G_xk F_pk)."""
    return (
        (grad_f.dx1 * grad_g.dp1 - grad_g.dx1 * grad_f.dp1)
        + (grad_f.dx2 * grad_g.dp2 - grad_g.dx2 * grad_f.dp2)
    )


def central_gradient(fn, pt, step=DEFAULT_BRACKET_STEP):
    return GradientVec(*(
        (fn(pt.shifted(var, step)) - fn(pt.shifted(var, -step))) / (2.0 * step)
        for var in VARIABLES
    ))


def bracket_residual(H, invariant, pt, step=DEFAULT_BRACKET_STEP):
    """
    |{H, I}| at pt. The partials of I come from central differences when
    `invariant` is a callable, or from symbolic differentiation when it is a
    closed-form expression; never from the Cauchy-Riemann substitution.
    """
    if is_expr(invariant):
        grad_i = gradient(invariant, pt)
    else:
        grad_i = central_gradient(invariant, pt, step)
    return abs(poisson_bracket(gradient(H, pt), grad_i))


def cr_bracket_residual(H, pt):
    """|{H, I}| with the Cauchy-Riemann gradient of I: zero up to rounding for any H."""
    return abs(poisson_bracket(gradient(H, pt), cr_gradient_of_I(H, pt)))


# --- Functional independence ---

@dataclass(frozen=True)
class IndependenceResult:
    verdict: str
    witness_point: object = None
    minor: object = None
    columns: object = None
    max_abs_minor: float = 0.0

    def to_dict(self):
        return {
            "verdict": self.verdict,
            "witness_point": list(self.witness_point) if self.witness_point is not None else None,
            "minor": self.minor,
            "columns": list(self.columns) if self.columns is not None else None,
            "max_abs_minor": self.max_abs_minor,
        }


def independence_check(H, pts, tol=DEFAULT_INDEPENDENCE_TOL):
    """
    2x2 minors of the stacked gradients [grad H; grad I]. The witness is the
    first sample with a minor above tol, and the first such column pair there.
    """
    pts = list(pts)
    if not pts:
        raise UsageError("Independence check needs at least one point")
    witness = None
    largest = 0.0
    for pt in pts:
        gh = gradient(H, pt)
        gi = cr_gradient_of_I(H, pt)
        for i, j in combinations(range(4), 2):
            minor = gh[i] * gi[j] - gh[j] * gi[i]
            largest = max(largest, abs(minor))
            if witness is None and abs(minor) > tol:
                witness = (pt, minor, (VARIABLES[i], VARIABLES[j]))
    if witness is None:
        logger.warning("all %d samples are critical points of H; resample", len(pts))
        return IndependenceResult(INDETERMINATE, max_abs_minor=largest)
    pt, minor, columns = witness
    return IndependenceResult(INDEPENDENT, pt, float(minor), columns, float(largest))


# --- Complex chart ---

class ComplexChart:
    """
    z = x1 + i x2 and w = p1 - i p2, i.e. the real components
    (x, y, p, q) = (x1, x2, p1, -p2). H plays u and I plays v.
    """
    @staticmethod
    def forward(pt):
        return np.array([pt.x1, pt.x2, pt.p1, -pt.p2])

    @staticmethod
    def inverse(w):
        return PhasePoint(float(w[0]), float(w[2]), float(w[1]), float(-w[3]))

    @staticmethod
    def to_complex(pt):
        return complex(pt.x1, pt.x2), complex(pt.p1, -pt.p2)

    @staticmethod
    def from_complex(z, p):
        return PhasePoint(z.real, p.real, z.imag, -p.imag)

    @classmethod
    def distance(cls, pt, w):
        return float(np.max(np.abs(cls.forward(pt) - w)))


def complex_flow_rhs(H, w):
    """
    dz/dt = dH/dw = H_p1 + i H_p2 and dw/dt = -dH/dz = -(H_x1 - i H_x2),
    as the real 4-vector (Re z, Im z, Re w, Im w)'.
    """
    if not np.all(np.isfinite(w)):
        raise DomainError("Complex trajectory left the finite phase space", point=tuple(float(v) for v in w))
    g = gradient(H, ComplexChart.inverse(w))
    return np.array([g.dp1, g.dp2, -g.dx1, g.dx2])


def complex_flow_residual(H, pt0, T, h):
    """Largest chart distance between the real flow and the complexified flow over [0, T]."""
    if T == 0:
        return 0.0
    real = integrate_flow(H, pt0, T, h, method="rk4")
    if real.truncated:
        raise DomainError("Real trajectory left the domain of H", point=tuple(real.samples[-1]))
    w = ComplexChart.forward(pt0)
    residual = 0.0
    for row in real.samples[1:]:
        w = _rk4_step(lambda v: complex_flow_rhs(H, v), w, h)
        residual = max(residual, ComplexChart.distance(PhasePoint.from_array(row), w))
    return residual
