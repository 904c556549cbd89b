"""First-order dual numbers over floats, numpy arrays, or nested duals.

``Dual(a, b)`` carries a value ``a`` and a derivative payload ``b``.  Both
components may be plain floats, numpy arrays (for point batches), or Duals
again (nesting yields exact second derivatives).  The derivative payload may
also carry an extra leading axis to propagate several directions at once.

The module-level ``sin``/``cos``/``exp``/``log``/``sqrt``/``powi`` dispatch
on the argument type so the same expression-evaluation code runs on every
scalar kind.
"""

import numpy as np

__all__ = ["Dual", "value_of", "sin", "cos", "exp", "log", "sqrt", "powi"]


class Dual:
    """a + b*eps with eps^2 = 0."""

    __slots__ = ("a", "b")
    # Defer to Dual's reflected operators when mixed with ndarrays.
    __array_ufunc__ = None
    __array_priority__ = 1000.0

    def __init__(self, a, b):
        self.a = a
        self.b = b

    def __repr__(self):
        return f"Dual({self.a!r}, {self.b!r})"

    def __add__(self, other):
        if isinstance(other, Dual):
            return Dual(self.a + other.a, self.b + other.b)
        return Dual(self.a + other, self.b)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Dual):
            return Dual(self.a - other.a, self.b - other.b)
        return Dual(self.a - other, self.b)

    def __rsub__(self, other):
        return Dual(other - self.a, -self.b)

    def __mul__(self, other):
        if isinstance(other, Dual):
            return Dual(self.a * other.a, self.a * other.b + self.b * other.a)
        return Dual(self.a * other, self.b * other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Dual):
            inv = 1.0 / other.a
            val = self.a * inv
            return Dual(val, (self.b - val * other.b) * inv)
        return Dual(self.a / other, self.b / other)

    def __rtruediv__(self, other):
        inv = 1.0 / self.a
        val = other * inv
        return Dual(val, -val * inv * self.b)

    def __neg__(self):
        return Dual(-self.a, -self.b)

    def __pos__(self):
        return self


def value_of(x):
    """Strip all Dual layers, returning the underlying float/array value."""
    while isinstance(x, Dual):
        x = x.a
    return x


def sin(x):
    if isinstance(x, Dual):
        return Dual(sin(x.a), cos(x.a) * x.b)
    return np.sin(x)


def cos(x):
    if isinstance(x, Dual):
        return Dual(cos(x.a), -sin(x.a) * x.b)
    return np.cos(x)


def exp(x):
    if isinstance(x, Dual):
        e = exp(x.a)
        return Dual(e, e * x.b)
    with np.errstate(over="ignore"):  # overflow is reported by the caller's check
        return np.exp(x)


def log(x):
    if isinstance(x, Dual):
        return Dual(log(x.a), x.b / x.a)
    return np.log(x)


def sqrt(x):
    if isinstance(x, Dual):
        s = sqrt(x.a)
        return Dual(s, x.b / (2.0 * s))
    return np.sqrt(x)


def powi(x, k):
    """x**k for integer k, defined for x=0 when k >= 0."""
    if k == 0:
        return x * 0.0 + 1.0
    if k < 0:
        return 1.0 / powi(x, -k)
    # binary exponentiation keeps dual nesting shallow
    result = None
    base = x
    while k:
        if k & 1:
            result = base if result is None else result * base
        k >>= 1
        if k:
            base = base * base
    return result
