import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from foliage.errors import EvalDomainError, ParseError
from foliage.expr import (
    directional_derivative,
    evaluate,
    parse_expression,
    second_directional,
    serialize,
)

from conftest import finite_difference_directional, random_expression


class TestParse:
    def test_coordinate_projection(self):
        e = parse_expression("x1", 3)
        assert evaluate(e, [2.0, 5.0, -1.0]) == 2.0

    def test_power_and_sin(self):
        e = parse_expression("x1^2 + sin(x2)", 2)
        assert evaluate(e, [2.0, 0.0]) == 4.0

    def test_out_of_range_coordinate(self):
        with pytest.raises(ParseError, match="unknown coordinate"):
            parse_expression("x4", 3)

    def test_unknown_function(self):
        with pytest.raises(ParseError, match="unknown function"):
            parse_expression("tanh(x1)", 1)

    def test_syntax_error_carries_offset(self):
        with pytest.raises(ParseError) as err:
            parse_expression("x1 + * x2", 2)
        assert err.value.offset == 5

    def test_empty(self):
        with pytest.raises(ParseError):
            parse_expression("   ", 2)

    def test_unbalanced_paren(self):
        with pytest.raises(ParseError):
            parse_expression("(x1 + 2", 1)

    def test_exponent_must_be_integer(self):
        with pytest.raises(ParseError, match="integer"):
            parse_expression("x1^x2", 2)
        with pytest.raises(ParseError, match="integer"):
            parse_expression("x1^2.5", 1)

    def test_precedence_power_over_unary_minus(self):
        # -x^2 parses as -(x^2)
        e = parse_expression("-x1^2", 1)
        assert evaluate(e, [3.0]) == -9.0

    def test_left_associativity(self):
        assert evaluate(parse_expression("8 - 3 - 2", 1), [0.0]) == 3.0
        assert evaluate(parse_expression("8 / 2 / 2", 1), [0.0]) == 2.0

    @given(
        a=st.integers(min_value=-9, max_value=9),
        b=st.integers(min_value=-9, max_value=9),
        c=st.integers(min_value=1, max_value=9),
    )
    @settings(max_examples=200, deadline=None)
    def test_precedence_matches_python(self, a, b, c):
        text = f"{a} + {b} * {c} - {b} / {c}"
        got = evaluate(parse_expression(text, 1), [0.0])
        assert got == pytest.approx(a + b * c - b / c, rel=1e-15)

    @given(st.floats(min_value=1e-3, max_value=1e3, allow_nan=False))
    @settings(max_examples=200, deadline=None)
    def test_float_literals(self, v):
        assert evaluate(parse_expression(repr(v), 1), [0.0]) == v


class TestEvaluate:
    def test_exp_at_zero(self):
        assert evaluate(parse_expression("exp(x1)", 1), [0.0]) == 1.0

    def test_arithmetic(self):
        e = parse_expression("x1*x2 + x3^3", 3)
        assert evaluate(e, [1.0, 2.0, 2.0]) == 10.0

    def test_division_by_zero(self):
        with pytest.raises(EvalDomainError, match="division by zero"):
            evaluate(parse_expression("1/x1", 1), [0.0])

    def test_log_domain(self):
        with pytest.raises(EvalDomainError, match="log"):
            evaluate(parse_expression("log(x1)", 1), [-1.0])

    def test_sqrt_domain(self):
        with pytest.raises(EvalDomainError, match="sqrt"):
            evaluate(parse_expression("sqrt(x1)", 1), [-4.0])

    def test_negative_power_at_zero(self):
        with pytest.raises(EvalDomainError, match="negative exponent"):
            evaluate(parse_expression("x1^-2", 1), [0.0])

    def test_exp_overflow_is_reported(self):
        with pytest.raises(EvalDomainError, match="overflow"):
            evaluate(parse_expression("exp(x1)", 1), [1e6])

    def test_domain_error_names_subterm(self):
        with pytest.raises(EvalDomainError) as err:
            evaluate(parse_expression("x1 + log(x2 - 1)", 2), [0.0, 0.0])
        assert err.value.subterm == "log(x2 - 1)"

    def test_batched_points(self):
        e = parse_expression("x1^2 + x2", 2)
        pts = np.array([[1.0, 2.0], [3.0, -1.0]])
        np.testing.assert_allclose(evaluate(e, pts), [3.0, 8.0])

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            evaluate(parse_expression("x1", 2), [1.0])


class TestDirectionalDerivative:
    def test_square(self):
        val, der = directional_derivative(parse_expression("x1^2", 1), [3.0], [1.0])
        assert (val, der) == (9.0, 6.0)

    def test_zero_direction(self):
        e = parse_expression("exp(x1)*sin(x2)", 2)
        val, der = directional_derivative(e, [0.3, 0.7], [0.0, 0.0])
        assert der == 0.0

    def test_product_example(self):
        # independent oracle: central finite difference, step 1e-6
        e = parse_expression("sin(x1)*x2", 2)
        p, v = np.array([0.0, 2.0]), np.array([1.0, 0.0])
        fd = finite_difference_directional(lambda q: evaluate(e, q), p, v)
        val, der = directional_derivative(e, p, v)
        assert val == 0.0
        assert der == pytest.approx(fd, abs=1e-8)
        assert der == pytest.approx(2.0, abs=1e-12)

    def test_thousand_random_triples_vs_finite_differences(self, exprgen):
        rng = np.random.default_rng(20240811)
        n = 3
        checked = 0
        while checked < 1000:
            text = random_expression(rng, n)
            e = parse_expression(text, n)
            p = rng.uniform(-1.5, 1.5, size=n)
            v = rng.normal(size=n)
            val, der = directional_derivative(e, p, v)
            fd = finite_difference_directional(lambda q: evaluate(e, q), p, v)
            scale = 1.0 + abs(der)
            assert abs(der - fd) <= 1e-6 * scale, text
            checked += 1

    def test_linearity_in_direction(self):
        e = parse_expression("exp(0.3*x1)*x2 + x1^3", 2)
        p = np.array([0.4, -1.1])
        _, d1 = directional_derivative(e, p, [1.0, 0.0])
        _, d2 = directional_derivative(e, p, [0.0, 1.0])
        _, d12 = directional_derivative(e, p, [2.0, -3.0])
        assert d12 == pytest.approx(2 * d1 - 3 * d2, rel=1e-13)


class TestSecondDirectional:
    def test_mixed_partial(self):
        e = parse_expression("x1*x2", 3)
        assert second_directional(e, [5.0, -2.0, 0.1], [1, 0, 0], [0, 1, 0]) == 1.0

    def test_pure_second(self):
        e = parse_expression("x1^2", 1)
        assert second_directional(e, [7.0], [1.0], [1.0]) == 2.0

    def test_sin_at_zero(self):
        e = parse_expression("sin(x1)", 1)
        assert second_directional(e, [0.0], [1.0], [1.0]) == 0.0

    def test_symmetry_random(self, exprgen):
        rng = np.random.default_rng(7)
        for _ in range(50):
            e = parse_expression(random_expression(rng, 3), 3)
            p = rng.uniform(-1.0, 1.0, size=3)
            u = rng.normal(size=3)
            v = rng.normal(size=3)
            a = second_directional(e, p, u, v)
            b = second_directional(e, p, v, u)
            assert abs(a - b) <= 1e-10 * (1 + abs(a))


class TestSerialize:
    def test_canonical_form(self):
        e = parse_expression("x1^2 + sin(x2)", 2)
        assert serialize(e) == "((x1^2) + sin(x2))"

    def test_roundtrip_evaluation_identical(self, exprgen):
        rng = np.random.default_rng(99)
        for _ in range(100):
            text = random_expression(rng, 2)
            e1 = parse_expression(text, 2)
            e2 = parse_expression(serialize(e1), 2)
            assert serialize(e1) == serialize(e2)
            for _ in range(5):
                p = rng.uniform(-2.0, 2.0, size=2)
                assert evaluate(e1, p) == evaluate(e2, p)

    def test_negative_exponent_roundtrip(self):
        e = parse_expression("x1^-2", 1)
        assert evaluate(parse_expression(serialize(e), 1), [2.0]) == 0.25
