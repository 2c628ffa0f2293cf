import threading

import numpy as np
import pytest

from .deriv import (
    DerivativeCache,
    GradientVec,
    derivative,
    gradient,
    gradient_batch,
    hessian,
    hessian_batch,
    numeric_second_partial,
    second_partial,
    second_partials,
)
from .conftest import EXPONENTIAL, QUARTIC
from .errors import DomainError, UsageError
from .expr import PhasePoint, parse


def test_gradient_saddle(saddle):
    assert tuple(gradient(saddle, PhasePoint(1, 2, 3, 4))) == (-1.0, 2.0, 3.0, -4.0)


def test_gradient_of_constant_is_zero():
    g = gradient(parse("3.5"), PhasePoint(0.1, 0.2, 0.3, 0.4))
    assert g.is_zero()
    assert tuple(g) == (0.0, 0.0, 0.0, 0.0)


def test_gradient_exponential_at_origin(exponential):
    assert tuple(gradient(exponential, PhasePoint.origin())) == (0.0, 1.0, 1.0, 0.0)


def test_gradient_vec_lookup():
    g = GradientVec(1.0, 2.0, 3.0, 4.0)
    assert g["p1"] == 2.0 and g[3] == 4.0
    np.testing.assert_array_equal(g.as_array(), [1.0, 2.0, 3.0, 4.0])


def test_gradient_propagates_domain_error():
    with pytest.raises(DomainError):
        gradient(parse("ln(x1)*p1"), PhasePoint(-1, 1, 0, 0))


def test_gradient_batch_matches_pointwise(quartic):
    pts = np.random.default_rng(5).uniform(-1, 1, size=(12, 4))
    batch = gradient_batch(quartic, pts)
    assert batch.shape == (12, 4)
    for row, g in zip(pts, batch):
        np.testing.assert_allclose(g, gradient(quartic, PhasePoint.from_array(row)).as_array(), rtol=1e-12, atol=1e-13)


def test_gradient_of_a_sum_is_the_sum_of_gradients(exponential, quartic):
    total = parse(f"2*({EXPONENTIAL}) - 3*({QUARTIC})")
    for row in np.random.default_rng(8).uniform(-1, 1, size=(20, 4)):
        pt = PhasePoint.from_array(row)
        expected = 2 * gradient(exponential, pt).as_array() - 3 * gradient(quartic, pt).as_array()
        np.testing.assert_allclose(gradient(total, pt).as_array(), expected, rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("pt", [PhasePoint(0, 0, 0, 0), PhasePoint(1, -2, 0.5, 3)])
def test_saddle_second_partials(saddle, pt):
    assert second_partial(saddle, pt, "x1", "x1") == -1.0
    assert second_partial(saddle, pt, "x1", "p1") == 0.0


def test_exponential_second_partial_at_origin(exponential):
    assert second_partial(exponential, PhasePoint.origin(), "p1", "p1") == pytest.approx(1.0)


def test_second_partials_cover_upper_triangle(quartic):
    entries = second_partials(quartic, PhasePoint(0.3, -0.2, 0.5, 0.7))
    assert len(entries) == 10
    assert {(e.var_i, e.var_j) for e in entries} >= {("x1", "p2"), ("p2", "p2")}


def test_hessian_is_symmetric(exponential):
    H = hessian(exponential, PhasePoint(0.1, 0.4, -0.6, 0.2))
    np.testing.assert_array_equal(H, H.T)
    # the symbolic trace over coordinates vanishes for a condition-satisfying H
    assert H[0, 0] + H[2, 2] == pytest.approx(0.0, abs=1e-14)


def test_hessian_batch_matches_pointwise(quartic):
    pts = np.random.default_rng(6).uniform(-1, 1, size=(8, 4))
    batch = hessian_batch(quartic, pts)
    assert batch.shape == (8, 4, 4)
    for row, matrix in zip(pts, batch):
        np.testing.assert_allclose(matrix, hessian(quartic, PhasePoint.from_array(row)), rtol=1e-12, atol=1e-12)


def test_numeric_second_partial_saddle(saddle):
    value = numeric_second_partial(saddle, PhasePoint(0.3, 0.1, -0.2, 0.4), "x1", "x1", step=1e-4)
    assert value == pytest.approx(-1.0, abs=1e-6)


def test_numeric_agrees_with_symbolic_on_quartic(quartic):
    pt = PhasePoint(1, 1, 0, 0)
    symbolic = second_partial(quartic, pt, "x1", "p2")
    numeric = numeric_second_partial(quartic, pt, "x1", "p2", step=1e-4)
    assert numeric == pytest.approx(symbolic, rel=1e-5, abs=1e-7)


@pytest.mark.parametrize("vi, vj", [("x1", "x2"), ("p1", "p2"), ("x2", "x2"), ("p1", "x2")])
def test_numeric_agrees_with_symbolic_on_exponential(exponential, vi, vj):
    pt = PhasePoint(0.2, -0.4, 0.6, 0.3)
    assert numeric_second_partial(exponential, pt, vi, vj) == pytest.approx(
        second_partial(exponential, pt, vi, vj), rel=1e-5, abs=1e-6
    )


@pytest.mark.parametrize("fixture", ["exponential", "quartic"])
def test_numeric_agrees_with_symbolic_over_the_box(request, fixture):
    H = request.getfixturevalue(fixture)
    for row in np.random.default_rng(10).uniform(-1, 1, size=(100, 4)):
        pt = PhasePoint.from_array(row)
        for entry in second_partials(H, pt):
            numeric = numeric_second_partial(H, pt, entry.var_i, entry.var_j)
            assert numeric == pytest.approx(entry.value, rel=1e-5, abs=1e-5)


def test_numeric_second_partial_rejects_bad_step(saddle):
    with pytest.raises(UsageError):
        numeric_second_partial(saddle, PhasePoint.origin(), "x1", "x1", step=0.0)


def test_unknown_variable_rejected(saddle):
    with pytest.raises(UsageError):
        derivative(saddle, "q")


def test_cache_builds_each_entry_once(exponential):
    cache = DerivativeCache()
    first = cache.get(exponential, "x1", "p1")
    assert cache.get(exponential, "x1", "p1") is first
    # the first-order entry was populated on the way
    assert cache.get(exponential, "x1") is cache.get(exponential, "x1")


def test_cache_is_thread_safe(quartic):
    cache = DerivativeCache()
    results = []

    def worker():
        results.append(cache.get(quartic, "p2", "x1"))

    threads = [threading.Thread(target=worker) for _ in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert len(results) == 8
    assert all(r is results[0] for r in results)
