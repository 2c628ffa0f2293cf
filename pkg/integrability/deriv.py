"""
First and second partial derivatives of a Hamiltonian at a point.

The symbolic path is authoritative. `numeric_second_partial` is an
independent central-difference oracle used to cross-check it.
"""
import logging
import threading
from dataclasses import dataclass
from itertools import combinations_with_replacement

import numpy as np

from .errors import UsageError
from .expr import VARIABLES, VARIABLE_INDEX, differentiate, evaluate, evaluate_batch

logger = logging.getLogger(__name__)

DEFAULT_FD_STEP = 1e-4


@dataclass(frozen=True)
class GradientVec:
    """Partials of a scalar field at a point, ordered (x1, p1, x2, p2)."""
    dx1: float
    dp1: float
    dx2: float
    dp2: float

    def __iter__(self):
        return iter((self.dx1, self.dp1, self.dx2, self.dp2))

    def __getitem__(self, var):
        return tuple(self)[VARIABLE_INDEX[var] if isinstance(var, str) else var]

    def as_array(self):
        return np.array(tuple(self), dtype=float)

    def is_zero(self):
        return not any(self)


@dataclass(frozen=True)
class SecondPartial:
    var_i: str
    var_j: str
    value: float


class DerivativeCache:
    """Symbolic derivative expressions keyed by (expression, variables); each entry is built once."""

    def __init__(self):
        self._entries = {}
        self._lock = threading.RLock()

    def get(self, e, *variables):
        key = (e, variables)
        cached = self._entries.get(key)
        if cached is not None:
            return cached
        with self._lock:
            cached = self._entries.get(key)
            if cached is None:
                parent = self.get(e, *variables[:-1]) if len(variables) > 1 else e
                cached = differentiate(parent, variables[-1])
                self._entries[key] = cached
                logger.debug("cached d/%s derivative (%d entries)", "d".join(variables), len(self._entries))
        return cached

    def clear(self):
        with self._lock:
            self._entries.clear()


_cache = DerivativeCache()


def _check_var(var):
    if var not in VARIABLES:
        raise UsageError(f"Unknown variable {var!r}; expected one of {', '.join(VARIABLES)}")


def derivative(H, var):
    """Cached symbolic dH/dvar."""
    _check_var(var)
    return _cache.get(H, var)


def second_derivative(H, vi, vj):
    """Cached symbolic d2H/dvi dvj (differentiated in the order vi, then vj)."""
    _check_var(vi)
    _check_var(vj)
    return _cache.get(H, vi, vj)


def gradient(H, pt):
    return GradientVec(*(evaluate(derivative(H, var), pt) for var in VARIABLES))


def gradient_batch(H, pts):
    """Gradients at every row of pts, shape (N, 4)."""
    return np.column_stack([evaluate_batch(derivative(H, var), pts) for var in VARIABLES])


def second_partial(H, pt, vi, vj):
    return evaluate(second_derivative(H, vi, vj), pt)


def second_partials(H, pt):
    """The ten distinct second partials of H at pt."""
    return [
        SecondPartial(vi, vj, second_partial(H, pt, vi, vj))
        for vi, vj in combinations_with_replacement(VARIABLES, 2)
    ]


def hessian(H, pt):
    matrix = np.zeros((4, 4))
    for entry in second_partials(H, pt):
        i, j = VARIABLE_INDEX[entry.var_i], VARIABLE_INDEX[entry.var_j]
        matrix[i, j] = matrix[j, i] = entry.value
    return matrix


def hessian_batch(H, pts):
    """Hessians at every row of pts, shape (N, 4, 4)."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    matrices = np.zeros((pts.shape[0], 4, 4))
    for vi, vj in combinations_with_replacement(VARIABLES, 2):
        i, j = VARIABLE_INDEX[vi], VARIABLE_INDEX[vj]
        matrices[:, i, j] = matrices[:, j, i] = evaluate_batch(second_derivative(H, vi, vj), pts)
    return matrices


def numeric_second_partial(H, pt, vi, vj, step=DEFAULT_FD_STEP):
    """Central-difference estimate of d2H/dvi dvj; the stencil reaches 2*step along vi and vj."""
    _check_var(vi)
    _check_var(vj)
    if not step > 0:
        raise UsageError(f"Finite-difference step must be positive, got {step!r}")

    def f(di, dj):
        return evaluate(H, pt.shifted(vi, di * step).shifted(vj, dj * step))

    if vi == vj:
        # shifted(vi) twice moves 2*step, hence the half-steps
        return (f(1, 1) - 2.0 * f(0, 0) + f(-1, -1)) / (4.0 * step * step)
    return (f(1, 1) - f(1, -1) - f(-1, 1) + f(-1, -1)) / (4.0 * step * step)
