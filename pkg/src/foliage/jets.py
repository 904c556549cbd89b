"""Tensor algebra on (value, directional-derivative) pairs.

A :class:`Jet` bundles a float array ``value`` with ``nz`` directional
derivatives stacked along a leading ``z`` axis: ``deriv[z] = D_z value``.
Product-rule propagation through ``einsum``, ``solve`` and ``inv`` lets the
connection pipeline be written once and evaluated either plainly or together
with its exact first derivatives.

Plain ndarrays act as constants (no derivative term), and every helper
returns a plain ndarray whenever the result carries no derivatives.  The
connection assembly additionally uses ``None`` for identically-zero
operands, short-circuiting entire terms for constant metrics and frames.

Conventions: einsum specs use explicit subscripts, at most two operands (the
fast C einsum path), no ellipsis; the letter ``z`` is reserved for the
derivative axis.
"""

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Jet",
    "jval",
    "jderiv",
    "jeinsum",
    "jsolve",
    "jinv",
    "jtranspose",
    "jadd",
    "jscale",
]


@dataclass
class Jet:
    value: np.ndarray
    deriv: np.ndarray  # shape (nz,) + value.shape

    @property
    def nz(self):
        return self.deriv.shape[0]

    def __post_init__(self):
        self.value = np.asarray(self.value, dtype=float)
        self.deriv = np.asarray(self.deriv, dtype=float)
        if self.deriv.shape[1:] != self.value.shape:
            raise ValueError(
                f"deriv shape {self.deriv.shape} does not extend value shape {self.value.shape}"
            )


def jval(x):
    """Value part of a Jet or plain array."""
    return x.value if isinstance(x, Jet) else x


def jderiv(x, nz, shape):
    """Derivative stack of ``x``, materializing zeros for constants."""
    if isinstance(x, Jet) and x.nz:
        return x.deriv
    return np.zeros((nz,) + shape)


def _nz(ops):
    nz = 0
    for op in ops:
        if isinstance(op, Jet) and op.nz:
            if nz and op.nz != nz:
                raise ValueError(f"mismatched derivative counts {nz} vs {op.nz}")
            nz = op.nz
    return nz


def jeinsum(spec, *ops):
    """einsum over jets and plain arrays with product-rule derivatives."""
    inputs, out = spec.split("->")
    subs = inputs.split(",")
    if len(subs) != len(ops):
        raise ValueError(f"spec {spec!r} does not match {len(ops)} operands")
    values = [jval(op) for op in ops]
    value = np.einsum(spec, *values)
    nz = _nz(ops)
    if nz == 0:
        return value
    deriv = None
    for i, op in enumerate(ops):
        if not (isinstance(op, Jet) and op.nz):
            continue
        dsubs = list(subs)
        dsubs[i] = "z" + dsubs[i]
        dspec = ",".join(dsubs) + "->z" + out
        args = list(values)
        args[i] = op.deriv
        term = np.einsum(dspec, *args)
        deriv = term if deriv is None else deriv + term
    return Jet(value, np.broadcast_to(deriv, (nz,) + value.shape))


def jadd(*ops):
    value = None
    for op in ops:
        v = jval(op)
        value = v if value is None else value + v
    nz = _nz(ops)
    if nz == 0:
        return value
    deriv = None
    for op in ops:
        if isinstance(op, Jet) and op.nz:
            deriv = op.deriv if deriv is None else deriv + op.deriv
    return Jet(value, np.broadcast_to(deriv, (nz,) + np.shape(value)))


def jscale(a, factor):
    if isinstance(a, Jet):
        return Jet(a.value * factor, a.deriv * factor)
    return a * factor


def jtranspose(a):
    """Swap the last two tensor axes."""
    if isinstance(a, Jet):
        return Jet(np.swapaxes(a.value, -1, -2), np.swapaxes(a.deriv, -1, -2))
    return np.swapaxes(a, -1, -2)


def jsolve(a, b):
    """Solve a @ x = b along the trailing matrix dims; b must be (..., n, k)."""
    aval, bval = jval(a), jval(b)
    x = np.linalg.solve(aval, bval)
    nz = _nz([a, b])
    if nz == 0:
        return x
    rhs = 0.0
    if isinstance(b, Jet) and b.nz:
        rhs = rhs + b.deriv
    if isinstance(a, Jet) and a.nz:
        rhs = rhs - a.deriv @ x
    dx = np.linalg.solve(aval, rhs)
    return Jet(x, np.broadcast_to(dx, (nz,) + x.shape))


def jinv(a):
    """Inverse along the trailing matrix dims."""
    inv = np.linalg.inv(jval(a))
    if not (isinstance(a, Jet) and a.nz):
        return inv
    return Jet(inv, -inv @ a.deriv @ inv)
