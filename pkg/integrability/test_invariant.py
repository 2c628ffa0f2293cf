import math

import numpy as np
import pytest

from .errors import DegenerateHamiltonianError, NonExactError, PathDomainError, UnsupportedClassError, UsageError
from .expr import VARIABLES, PhasePoint, evaluate, evaluate_batch, parse
from .invariant import (
    CLOSED_FORM,
    LINE_INTEGRAL,
    Polynomial,
    QuadratureSetting,
    build_invariant,
    construct_invariant,
    cr_gradient_batch,
    cr_gradient_of_I,
    line_integral,
    path_independence_residual,
    symbolic_invariant,
)
from .verify import central_gradient


def _random_points(n, seed=0, lo=-1.0, hi=1.0):
    return np.random.default_rng(seed).uniform(lo, hi, size=(n, 4))


# --- The one-form ---

def test_cr_gradient_saddle(saddle):
    assert tuple(cr_gradient_of_I(saddle, PhasePoint(1, 2, 3, 4))) == (-3.0, -4.0, -1.0, -2.0)


def test_cr_gradient_exponential_at_origin(exponential):
    assert tuple(cr_gradient_of_I(exponential, PhasePoint.origin())) == (-1.0, 0.0, 0.0, -1.0)


def test_cr_gradient_batch_matches_pointwise(quartic):
    pts = _random_points(6, seed=4)
    batch = cr_gradient_batch(quartic, pts)
    for row, g in zip(pts, batch):
        np.testing.assert_allclose(g, cr_gradient_of_I(quartic, PhasePoint.from_array(row)).as_array(), rtol=1e-12, atol=1e-13)


# --- Line integrals ---

def test_line_integral_saddle(saddle):
    value = line_integral(saddle, PhasePoint.origin(), PhasePoint(1, 2, 3, 4))
    assert value == pytest.approx(-11.0, abs=1e-8)


def test_line_integral_of_empty_path_is_zero(exponential):
    pt = PhasePoint(0.3, 0.1, 0.2, 0.4)
    assert line_integral(exponential, pt, pt) == 0.0


def test_path_independence_saddle(saddle):
    residual = path_independence_residual(
        saddle, PhasePoint.origin(), PhasePoint(1, 1, 1, 1), PhasePoint(1, 0, 0, 0)
    )
    assert residual <= 1e-9


@pytest.mark.parametrize("fixture", ["saddle", "exponential", "quartic"])
def test_path_independence_for_every_example(request, fixture):
    H = request.getfixturevalue(fixture)
    residual = path_independence_residual(H, PhasePoint.origin(), PhasePoint(1, 1, 1, 1), PhasePoint(1, 0, 0, 0))
    assert residual <= 1e-9


def test_path_independence_detects_oscillator(oscillator):
    residual = path_independence_residual(
        oscillator, PhasePoint.origin(), PhasePoint(1, 0, 1, 0), PhasePoint(1, 0, 0, 0)
    )
    assert residual > 1e-3
    # -x2 dx1 + x1 dx2 around the triangle
    assert residual == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("segments, order, tol", [(0, 8, 1e-10), (16, 0, 1e-10), (16, 8, 0.0)])
def test_quadrature_setting_validation(segments, order, tol):
    with pytest.raises(UsageError):
        QuadratureSetting(segments, order, tol)


def test_composite_rule_integrates_on_unit_interval():
    t, w = QuadratureSetting(segments=4, order=3).nodes()
    assert t.size == 12
    assert np.all((t > 0) & (t < 1))
    assert w.sum() == pytest.approx(1.0, abs=1e-15)
    assert np.dot(w, t**5) == pytest.approx(1 / 6, abs=1e-15)


def test_quadrature_converges_with_segment_doubling(exponential, exponential_invariant):
    target = PhasePoint(0.4, -0.3, 0.7, 0.2)
    exact = evaluate(exponential_invariant, target)
    errors = [
        abs(line_integral(exponential, PhasePoint.origin(), target, QuadratureSetting(segments=k, order=2)) - exact)
        for k in (1, 2, 4)
    ]
    assert errors[0] / errors[1] >= 4
    assert errors[1] / errors[2] >= 4


# --- Invariant evaluator ---

@pytest.mark.parametrize("h_fixture, i_fixture", [
    ("saddle", "saddle_invariant"),
    ("exponential", "exponential_invariant"),
    ("quartic", "quartic_invariant"),
])
def test_line_integral_invariant_matches_closed_form(request, h_fixture, i_fixture):
    H = request.getfixturevalue(h_fixture)
    closed = request.getfixturevalue(i_fixture)
    invariant = build_invariant(H)
    assert invariant.backend == LINE_INTEGRAL
    pts = _random_points(100, seed=1)
    np.testing.assert_allclose(invariant.evaluate_many(pts), evaluate_batch(closed, pts), rtol=0, atol=1e-8)


def test_saddle_invariant_value(saddle):
    assert build_invariant(saddle)(PhasePoint(1, 2, 3, 4)) == pytest.approx(-11.0, abs=1e-8)


def test_exponential_invariant_value(exponential):
    assert build_invariant(exponential)(PhasePoint(0, 0, math.pi / 2, 0)) == pytest.approx(-1.0, abs=1e-8)


def test_invariant_vanishes_at_base(exponential):
    base = PhasePoint(0.2, -0.1, 0.4, 0.3)
    invariant = build_invariant(exponential, base)
    assert invariant(base) == 0.0
    assert invariant.evaluate_many([base.as_array()])[0] == pytest.approx(0.0, abs=1e-15)


@pytest.mark.parametrize("fixture", ["saddle", "exponential", "quartic"])
def test_changing_the_base_shifts_by_a_constant(request, fixture):
    H = request.getfixturevalue(fixture)
    pts = _random_points(50, seed=11)
    first = build_invariant(H).evaluate_many(pts)
    second = build_invariant(H, PhasePoint(0.5, -0.25, 0.3, 0.1)).evaluate_many(pts)
    shift = first - second
    np.testing.assert_allclose(shift, np.full(50, shift[0]), rtol=0, atol=1e-8)


@pytest.mark.parametrize("fixture", ["saddle", "quartic"])
def test_symbolic_and_line_integral_agree(request, fixture):
    H = request.getfixturevalue(fixture)
    closed = symbolic_invariant(H)
    pts = _random_points(100, seed=13)
    expected = build_invariant(H).evaluate_many(pts)
    got = evaluate_batch(closed, pts) - evaluate(closed, PhasePoint.origin())
    np.testing.assert_allclose(got, expected, rtol=0, atol=1e-8)


def test_scalar_and_batch_evaluation_agree(quartic):
    invariant = build_invariant(quartic)
    pts = _random_points(5, seed=9)
    values = invariant.evaluate_many(pts)
    for row, value in zip(pts, values):
        assert invariant(PhasePoint.from_array(row)) == pytest.approx(value, abs=1e-12)


def test_gradient_of_invariant_is_the_one_form(exponential):
    invariant = build_invariant(exponential)
    for row in _random_points(50, seed=6):
        pt = PhasePoint.from_array(row)
        numeric = central_gradient(invariant, pt, 1e-5).as_array()
        expected = cr_gradient_of_I(exponential, pt).as_array()
        np.testing.assert_allclose(numeric, expected, rtol=1e-5, atol=1e-7)


def test_constant_hamiltonian_is_degenerate():
    with pytest.raises(DegenerateHamiltonianError):
        build_invariant(parse("7"))


def test_singular_base_point_is_rejected():
    with pytest.raises(PathDomainError):
        build_invariant(parse("ln(x1)*p1"), PhasePoint.origin())


def test_path_leaving_the_domain_is_reported():
    invariant = build_invariant(parse("ln(x1)*p1"), PhasePoint(1, 1, 0, 0))
    with pytest.raises(PathDomainError) as excinfo:
        invariant(PhasePoint(-1, 1, 0, 0))
    assert "base point" in excinfo.value.message
    assert excinfo.value.exit_code == 3


# --- Symbolic path ---

def test_symbolic_invariant_saddle(saddle, saddle_invariant):
    closed = symbolic_invariant(saddle)
    for row in _random_points(20, seed=2):
        pt = PhasePoint.from_array(row)
        assert evaluate(closed, pt) == pytest.approx(evaluate(saddle_invariant, pt), abs=1e-12)


def test_symbolic_invariant_quartic(quartic, quartic_invariant):
    closed = symbolic_invariant(quartic)
    for row in _random_points(20, seed=3):
        pt = PhasePoint.from_array(row)
        assert evaluate(closed, pt) == pytest.approx(evaluate(quartic_invariant, pt), abs=1e-12)


def test_quartic_invariant_golden_values(quartic):
    invariant = construct_invariant(quartic)
    assert invariant(PhasePoint(1, 1, 1, 1)) == pytest.approx(0.0, abs=1e-12)
    assert invariant(PhasePoint(1, 2, 0, 1)) == pytest.approx(-6.0, abs=1e-10)


def test_symbolic_invariant_rejects_non_exact_form(oscillator):
    with pytest.raises(NonExactError) as excinfo:
        symbolic_invariant(oscillator)
    assert excinfo.value.exit_code == 1


def test_symbolic_invariant_needs_a_polynomial(exponential):
    with pytest.raises(UnsupportedClassError):
        symbolic_invariant(exponential)


def test_construct_prefers_closed_form(saddle):
    base = PhasePoint(0.5, -0.5, 0.25, 1.0)
    invariant = construct_invariant(saddle, base)
    assert invariant.backend == CLOSED_FORM
    assert invariant.closed_form is not None
    assert invariant(base) == pytest.approx(0.0, abs=1e-15)
    # same normalization as the line integral
    target = PhasePoint(1, 2, 3, 4)
    assert invariant(target) == pytest.approx(build_invariant(saddle, base)(target), abs=1e-9)


def test_construct_falls_back_to_line_integral(exponential):
    invariant = construct_invariant(exponential)
    assert invariant.backend == LINE_INTEGRAL
    assert invariant.closed_form is None


# --- Polynomial algebra ---

def test_polynomial_round_trip():
    e = parse("(1/2)*(x1 + p2)^3 - 4*x2*p1 + 3")
    poly = Polynomial.from_expr(e)
    back = poly.to_expr()
    for row in _random_points(10, seed=8):
        pt = PhasePoint.from_array(row)
        assert evaluate(back, pt) == pytest.approx(evaluate(e, pt), abs=1e-12)


def test_polynomial_calculus():
    poly = Polynomial.from_expr(parse("x1^3*p1 + 2*x2"))
    x1 = VARIABLES.index("x1")
    assert poly.derivative(x1).terms == {(2, 1, 0, 0): 3.0}
    assert poly.antiderivative(x1).derivative(x1).terms == poly.terms
    assert poly.depends_on(VARIABLES.index("x2"))
    assert not poly.depends_on(VARIABLES.index("p2"))


@pytest.mark.parametrize("text", ["sin(x1)", "1/x1", "x1^(-2)", "x1/(1 - 1)"])
def test_polynomial_rejects_non_polynomials(text):
    with pytest.raises(UnsupportedClassError):
        Polynomial.from_expr(parse(text))
