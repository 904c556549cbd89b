"""foliage: metric distributions, adapted connections, and Frobenius charts.

A numerical toolkit for an open subset of R^n carrying a Riemannian metric g
and a rank-r distribution E.  It builds the metric-compatible connection
whose torsion is pinned by the Lie derivative of g across the splitting
E + E-perp, integrates its geodesics, parallel transport and Jacobi fields,
tests involutivity, and constructs integral submanifolds and straightening
charts by double exponentials.
"""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    DegenerateFrameError,
    DomainExitError,
    EvalDomainError,
    FoliageError,
    MetricError,
    ParseError,
    PreconditionError,
)
from .expr import (
    Expression,
    directional_derivative,
    evaluate,
    parse_expression,
    second_directional,
    serialize,
)

__all__ = [
    "__version__",
    "ConfigError",
    "DegenerateFrameError",
    "DomainExitError",
    "EvalDomainError",
    "FoliageError",
    "MetricError",
    "ParseError",
    "PreconditionError",
    "Expression",
    "parse_expression",
    "evaluate",
    "directional_derivative",
    "second_directional",
    "serialize",
]
