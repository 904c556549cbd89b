import numpy as np
import pytest

from foliage.frobenius import build_frobenius_chart
from foliage.scenarios import BUILTIN_SCENARIOS, get_scenario


@pytest.fixture(scope="session")
def scn():
    """Factory for built-in scenarios (cached at module level)."""
    return get_scenario


@pytest.fixture(scope="session", params=list(BUILTIN_SCENARIOS))
def every_scenario(request):
    return get_scenario(request.param)


_CHART_CACHE = {}


@pytest.fixture(scope="session")
def chart_for():
    """Factory for cached Frobenius charts (charts are expensive to build)."""

    def build(name, delta=0.3, m=9):
        key = (name, delta, m)
        if key not in _CHART_CACHE:
            s = get_scenario(name)
            _CHART_CACHE[key] = build_frobenius_chart(
                s.g, s.E, s.center, delta=delta, m=m, step=s.numerics.h_grid
            )
        return _CHART_CACHE[key]

    return build


def random_expression(rng, n, depth=3):
    """Random expression text, total on all of R^n (guarded log/sqrt/div)."""
    if depth == 0 or rng.random() < 0.25:
        if rng.random() < 0.6:
            return f"x{rng.integers(1, n + 1)}"
        return f"{rng.uniform(-2, 2):.3f}"
    kind = rng.choice(
        ["add", "sub", "mul", "sin", "cos", "exp", "pow", "div", "log", "sqrt", "neg"]
    )
    a = random_expression(rng, n, depth - 1)
    if kind == "add":
        return f"({a} + {random_expression(rng, n, depth - 1)})"
    if kind == "sub":
        return f"({a} - {random_expression(rng, n, depth - 1)})"
    if kind == "mul":
        return f"({a}) * ({random_expression(rng, n, depth - 1)})"
    if kind == "sin":
        return f"sin({a})"
    if kind == "cos":
        return f"cos({a})"
    if kind == "exp":
        return f"exp(0.3 * ({a}))"
    if kind == "pow":
        return f"({a})^{rng.integers(2, 4)}"
    if kind == "div":
        return f"({a}) / (2 + x{rng.integers(1, n + 1)}^2)"
    if kind == "log":
        return f"log(2 + x{rng.integers(1, n + 1)}^2)"
    if kind == "sqrt":
        return f"sqrt(1 + ({a})^2)"
    return f"(-({a}))"


@pytest.fixture
def exprgen():
    return random_expression


def finite_difference_directional(fn, p, v, step=1e-6):
    """Independent central-difference oracle for directional derivatives."""
    p = np.asarray(p, float)
    v = np.asarray(v, float)
    return (fn(p + step * v) - fn(p - step * v)) / (2.0 * step)
