"""Pointwise metric algebra for a metric g and a rank-r distribution E.

Conventions used throughout the package:

* points are arrays of shape ``(n,)`` or batched ``(y, n)``;
* metric values ``G`` have shape ``(..., n, n)``;
* first metric derivatives ``dG[..., k, i, j] = d_k g_ij``;
* frame values ``F`` have shape ``(..., n, r)`` (columns are the declared
  fields of E), ``dF[..., k, a, c] = d_k F[a, c]``.

E-perp is never stored: it is derived from (g, E) at evaluation points via
the g-orthogonal projector.
"""

from dataclasses import dataclass

import numpy as np

from .dual import Dual, value_of
from .errors import DegenerateFrameError, MetricError
from .expr import Expression, classify_simple, jet_coords, jet_split

__all__ = [
    "Box",
    "MetricField",
    "DistributionSpec",
    "ProjectorPair",
    "AdaptedFrame",
    "metric_at",
    "projector_at",
    "adapted_frame_at",
    "lie_bracket",
    "lie_derivative_metric",
    "involutivity_residual",
    "ExpressionField",
    "ConstantField",
    "ProjectedField",
    "ScaledField",
    "field_at",
    "field_directional",
]

INDEPENDENCE_RTOL = 1e-10


@dataclass(frozen=True)
class Box:
    """Axis-aligned open box domain."""

    lower: tuple
    upper: tuple

    def __post_init__(self):
        lo, up = np.asarray(self.lower, float), np.asarray(self.upper, float)
        if lo.shape != up.shape or lo.ndim != 1:
            raise ValueError("box bounds must be 1-d arrays of equal length")
        if not np.all(lo < up):
            raise ValueError("box is empty")

    @property
    def n(self):
        return len(self.lower)

    def contains(self, p):
        p = np.asarray(p, float)
        lo = np.asarray(self.lower)
        up = np.asarray(self.upper)
        return np.all((p > lo) & (p < up), axis=-1)

    def shrink(self, fraction=0.1):
        """Box with each axis extent reduced by ``fraction``, centered."""
        lo = np.asarray(self.lower)
        up = np.asarray(self.upper)
        pad = 0.5 * fraction * (up - lo)
        return Box(tuple(lo + pad), tuple(up - pad))


class MetricField:
    """Symmetric metric g_ij given by expressions for the upper triangle."""

    def __init__(self, n, entries, domain):
        if len(entries) != n * (n + 1) // 2:
            raise ValueError(f"expected {n * (n + 1) // 2} metric entries, got {len(entries)}")
        for e in entries:
            if not isinstance(e, Expression) or e.n != n:
                raise ValueError("metric entries must be Expressions in n coordinates")
        if domain.n != n:
            raise ValueError("domain dimension mismatch")
        self.n = n
        self.entries = tuple(entries)
        self.domain = domain
        self._tags = tuple(classify_simple(e) for e in self.entries)
        self.deriv_is_zero = all(t is not None and t[0] == "const" for t in self._tags)
        self.second_deriv_is_zero = all(t is not None for t in self._tags)

    def _entry(self, i, j):
        if i > j:
            i, j = j, i
        return self.entries[i * self.n - i * (i - 1) // 2 + (j - i)]

    def entry(self, i, j):
        return self._entry(i, j)

    def values(self, pts):
        """G at points (..., n) -> (..., n, n); no SPD check."""
        pts = np.asarray(pts, float)
        shape = pts.shape[:-1]
        n = self.n
        G = np.empty(shape + (n, n))
        coords = [pts[..., k] for k in range(n)]
        for i in range(n):
            for j in range(i, n):
                v = value_of(self._entry(i, j)(coords))
                G[..., i, j] = v
                G[..., j, i] = v
        return G

    def jets(self, pts, order=1):
        """(G, dG, ddG) arrays up to ``order`` derivatives (missing -> None).

        Layouts: G (..., i, j); dG (..., k, i, j) = d_k g_ij;
        ddG (..., m, k, i, j) = d_m d_k g_ij.
        """
        pts = np.asarray(pts, float)
        shape = pts.shape[:-1]
        n = self.n
        coords = None
        G = np.empty(shape + (n, n))
        dG_t = np.zeros((n,) + shape + (n, n)) if order >= 1 else None
        ddG_t = np.zeros((n, n) + shape + (n, n)) if order >= 2 else None
        for i in range(n):
            for j in range(i, n):
                tag = self._tags[i * n - i * (i - 1) // 2 + (j - i)]
                if tag is not None and tag[0] == "const":
                    G[..., i, j] = G[..., j, i] = tag[1]
                    continue
                if tag is not None and tag[0] == "coord":
                    _, k, sgn = tag
                    G[..., i, j] = G[..., j, i] = sgn * pts[..., k]
                    if order >= 1:
                        dG_t[k, ..., i, j] = dG_t[k, ..., j, i] = sgn
                    continue
                if coords is None:
                    coords = jet_coords(pts, order)
                v, gr, hs = jet_split(self._entry(i, j)(coords), order, n, shape)
                G[..., i, j] = G[..., j, i] = v
                if order >= 1:
                    dG_t[:, ..., i, j] = dG_t[:, ..., j, i] = gr
                if order >= 2:
                    ddG_t[:, :, ..., i, j] = ddG_t[:, :, ..., j, i] = hs
        dG = np.moveaxis(dG_t, 0, -3) if order >= 1 else None
        ddG = np.moveaxis(ddG_t, (0, 1), (-4, -3)) if order >= 2 else None
        return G, dG, ddG


class DistributionSpec:
    """Rank-r distribution spanned by r declared vector fields."""

    def __init__(self, n, fields):
        r = len(fields)
        if not 1 <= r <= n:
            raise ValueError(f"rank must satisfy 1 <= r <= n, got {r}")
        for comps in fields:
            if len(comps) != n:
                raise ValueError("each frame field needs n components")
            for e in comps:
                if not isinstance(e, Expression) or e.n != n:
                    raise ValueError("frame components must be Expressions in n coordinates")
        self.n = n
        self.r = r
        self.fields = tuple(tuple(comps) for comps in fields)
        self._tags = tuple(
            tuple(classify_simple(e) for e in comps) for comps in self.fields
        )
        flat = [t for comps in self._tags for t in comps]
        self.deriv_is_zero = all(t is not None and t[0] == "const" for t in flat)
        self.second_deriv_is_zero = all(t is not None for t in flat)

    def values(self, pts, check=True):
        """F at points (..., n) -> (..., n, r) with independence check."""
        pts = np.asarray(pts, float)
        shape = pts.shape[:-1]
        n, r = self.n, self.r
        F = np.empty(shape + (n, r))
        coords = [pts[..., k] for k in range(n)]
        for c in range(r):
            for a in range(n):
                F[..., a, c] = value_of(self.fields[c][a](coords))
        if check:
            sv = np.linalg.svd(F, compute_uv=False)
            bad = sv[..., -1] <= INDEPENDENCE_RTOL * sv[..., 0]
            if np.any(bad):
                raise DegenerateFrameError(
                    "declared frame fields are linearly dependent at a sampled point "
                    f"(min/max singular value ratio {np.min(sv[..., -1] / sv[..., 0]):.3e})"
                )
        return F

    def jets(self, pts, order=1):
        """(F, dF, ddF) with dF[..., k, a, c] = d_k F[a, c]."""
        pts = np.asarray(pts, float)
        shape = pts.shape[:-1]
        n, r = self.n, self.r
        coords = None
        F = np.empty(shape + (n, r))
        dF_t = np.zeros((n,) + shape + (n, r)) if order >= 1 else None
        ddF_t = np.zeros((n, n) + shape + (n, r)) if order >= 2 else None
        for c in range(r):
            for a in range(n):
                tag = self._tags[c][a]
                if tag is not None and tag[0] == "const":
                    F[..., a, c] = tag[1]
                    continue
                if tag is not None and tag[0] == "coord":
                    _, k, sgn = tag
                    F[..., a, c] = sgn * pts[..., k]
                    if order >= 1:
                        dF_t[k, ..., a, c] = sgn
                    continue
                if coords is None:
                    coords = jet_coords(pts, order)
                v, gr, hs = jet_split(self.fields[c][a](coords), order, n, shape)
                F[..., a, c] = v
                if order >= 1:
                    dF_t[:, ..., a, c] = gr
                if order >= 2:
                    ddF_t[:, :, ..., a, c] = hs
        dF = np.moveaxis(dF_t, 0, -3) if order >= 1 else None
        ddF = np.moveaxis(ddF_t, (0, 1), (-4, -3)) if order >= 2 else None
        return F, dF, ddF


@dataclass(frozen=True)
class ProjectorPair:
    """g-orthogonal projector P onto E_p and its complement Q = I - P."""

    P: np.ndarray
    Q: np.ndarray

    def decompose(self, v):
        """Split v into (tangent, normal); the parts sum to v exactly."""
        tangent = np.einsum("...ab,...b->...a", self.P, np.asarray(v, float))
        return tangent, v - tangent


@dataclass(frozen=True)
class AdaptedFrame:
    """g-orthonormal frame at a point; first r columns span E_p."""

    point: np.ndarray
    vectors: np.ndarray  # (n, n), columns
    r: int

    @property
    def tangent(self):
        return self.vectors[:, : self.r]

    @property
    def normal(self):
        return self.vectors[:, self.r:]


def metric_at(g, p):
    """Evaluate g at p; verifies symmetry (by storage) and positive definiteness."""
    G = g.values(p)
    try:
        np.linalg.cholesky(G)
    except np.linalg.LinAlgError:
        lam = np.linalg.eigvalsh(G)
        raise MetricError(
            f"metric is not positive definite (smallest eigenvalue {np.min(lam):.6e})"
        ) from None
    return G


def projector_at(g, E, p):
    """P = F (F^T G F)^-1 F^T G and Q = I - P at point(s) p."""
    G = metric_at(g, p)
    F = E.values(p)
    Ft = np.swapaxes(F, -1, -2)
    M = Ft @ G @ F
    try:
        sol = np.linalg.solve(M, Ft @ G)
    except np.linalg.LinAlgError:
        raise DegenerateFrameError("frame Gram matrix is singular") from None
    P = F @ sol
    Q = np.eye(E.n) - P
    return ProjectorPair(P=P, Q=Q)


def _gram_schmidt(columns, G, tol=1e-10):
    """g-orthonormalize columns in order; returns (orthonormal columns, coeffs)."""
    out = []
    for c in columns:
        v = c.astype(float).copy()
        for u in out:
            v -= (u @ G @ c) * u
        norm = float(np.sqrt(v @ G @ v))
        if norm <= tol:
            raise DegenerateFrameError("degenerate frame during orthonormalization")
        out.append(v / norm)
    return np.stack(out, axis=-1)


def adapted_frame_at(g, E, p):
    """g-orthonormal adapted frame at a single point.

    Gram-Schmidt is applied first to E's declared frame vectors in
    declaration order, then to projected coordinate axes Q e_k picked
    greedily by largest residual g-norm (ties resolved by lowest index).
    """
    p = np.asarray(p, float)
    if p.ndim != 1:
        raise ValueError("adapted_frame_at expects a single point")
    G = metric_at(g, p)
    pair = projector_at(g, E, p)
    F = E.values(p)
    tangent = _gram_schmidt([F[:, c] for c in range(E.r)], G)
    basis = [tangent[:, c] for c in range(E.r)]
    remaining = list(range(E.n))
    while len(basis) < E.n:
        residuals = []
        for k in remaining:
            v = pair.Q[:, k].copy()
            for u in basis:
                v -= (u @ G @ pair.Q[:, k]) * u
            residuals.append(float(v @ G @ v))
        best = int(np.argmax(residuals))
        if residuals[best] <= 1e-20:
            raise DegenerateFrameError("projected coordinate axes do not span E-perp")
        k = remaining.pop(best)
        v = pair.Q[:, k].copy()
        for u in basis:
            v -= (u @ G @ pair.Q[:, k]) * u
        basis.append(v / np.sqrt(v @ G @ v))
    return AdaptedFrame(point=p, vectors=np.stack(basis, axis=-1), r=E.r)


# ---------------------------------------------------------------------------
# Vector fields
#
# A vector field is any callable mapping a list of n coordinate scalars to a
# sequence of n component scalars; the scalars may be floats, arrays, or
# duals, so directional derivatives of fields come from one dual sweep.


class ExpressionField:
    """Vector field with one Expression per component."""

    def __init__(self, components):
        self.components = tuple(components)
        self.n = len(components)

    def __call__(self, coords):
        return [e(coords) for e in self.components]


class ConstantField:
    def __init__(self, vec):
        self.vec = np.asarray(vec, float)
        self.n = len(self.vec)

    def __call__(self, coords):
        return [self.vec[k] + 0.0 * coords[0] for k in range(self.n)]


class ScaledField:
    """Pointwise product f(x) * X(x) of a scalar Expression and a field."""

    def __init__(self, scalar, field):
        self.scalar = scalar
        self.field = field
        self.n = field.n

    def __call__(self, coords):
        s = self.scalar(coords)
        return [s * c for c in self.field(coords)]


def _generic_solve(A, b):
    """Gaussian elimination without pivoting over generic scalars (duals).

    Only used on well-conditioned SPD systems of size <= n.
    """
    m = len(b)
    A = [row[:] for row in A]
    b = b[:]
    for i in range(m):
        piv = A[i][i]
        for k in range(i + 1, m):
            f = A[k][i] / piv
            for j in range(i + 1, m):
                A[k][j] = A[k][j] - f * A[i][j]
            b[k] = b[k] - f * b[i]
    x = [None] * m
    for i in range(m - 1, -1, -1):
        acc = b[i]
        for j in range(i + 1, m):
            acc = acc - A[i][j] * x[j]
        x[i] = acc / A[i][i]
    return x


class ProjectedField:
    """x -> P(x) v (or Q(x) v) for a constant vector v: a smooth section of
    E (resp. E-perp) through the projected vector at every point."""

    def __init__(self, g, E, vec, part="tangent"):
        if part not in ("tangent", "normal"):
            raise ValueError("part must be 'tangent' or 'normal'")
        self.g = g
        self.E = E
        self.vec = np.asarray(vec, float)
        self.part = part
        self.n = g.n

    def __call__(self, coords):
        g, E, n, r = self.g, self.E, self.n, self.E.r
        Gm = [[g.entry(i, j)(coords) for j in range(n)] for i in range(n)]
        F = [[E.fields[c][a](coords) for c in range(r)] for a in range(n)]
        v = self.vec
        # rhs_c = sum_a (F^T G v)_c ; M = F^T G F
        Gv = [sum(Gm[a][b] * v[b] for b in range(n)) for a in range(n)]
        GF = [[sum(Gm[a][b] * F[b][c] for b in range(n)) for c in range(r)] for a in range(n)]
        M = [[sum(F[a][i] * GF[a][j] for a in range(n)) for j in range(r)] for i in range(r)]
        rhs = [sum(F[a][c] * Gv[a] for a in range(n)) for c in range(r)]
        coef = _generic_solve(M, rhs)
        Pv = [sum(F[a][c] * coef[c] for c in range(r)) for a in range(n)]
        if self.part == "tangent":
            return Pv
        return [v[a] - Pv[a] for a in range(n)]


def field_at(X, p):
    """Field values at point(s) p -> array (..., n)."""
    p = np.asarray(p, float)
    coords = [p[..., k] for k in range(p.shape[-1])]
    comps = X(coords)
    shape = p.shape[:-1]
    return np.stack([np.broadcast_to(value_of(c), shape).astype(float) for c in comps], axis=-1)


def field_directional(X, p, v):
    """(X(p), D_v X(p)) componentwise by dual propagation."""
    p = np.asarray(p, float)
    v = np.asarray(v, float)
    coords = [Dual(p[..., k], v[..., k]) for k in range(p.shape[-1])]
    comps = X(coords)
    shape = np.broadcast_shapes(p.shape[:-1], v.shape[:-1])
    vals = np.stack(
        [np.broadcast_to(value_of(c), shape).astype(float) for c in comps], axis=-1
    )
    ders = np.stack(
        [
            np.broadcast_to(value_of(c.b) if isinstance(c, Dual) else 0.0, shape).astype(float)
            for c in comps
        ],
        axis=-1,
    )
    return vals, ders


def lie_bracket(U, V, p):
    """[U, V](p) = D_U V(p) - D_V U(p)."""
    up = field_at(U, p)
    vp = field_at(V, p)
    _, duv = field_directional(V, p, up)
    _, dvu = field_directional(U, p, vp)
    return duv - dvu


def _metric_scalar(g, U, V, coords):
    """g(U, V) as a scalar of generic coordinate scalars."""
    n = g.n
    u = U(coords)
    v = V(coords)
    acc = None
    for i in range(n):
        for j in range(n):
            term = u[i] * g.entry(i, j)(coords) * v[j]
            acc = term if acc is None else acc + term
    return acc


def lie_derivative_metric(g, W, U, V, p):
    """(L_W g)(U, V)(p) = W(g(U,V)) - g([W,U],V) - g(U,[W,V])."""
    p = np.asarray(p, float)
    n = g.n
    wp = field_at(W, p)
    coords = [Dual(p[..., k], wp[..., k]) for k in range(n)]
    s = _metric_scalar(g, U, V, coords)
    w_term = value_of(s.b) if isinstance(s, Dual) else 0.0
    G = g.values(p)
    wu = lie_bracket(W, U, p)
    wv = lie_bracket(W, V, p)
    up = field_at(U, p)
    vp = field_at(V, p)
    t2 = np.einsum("...a,...ab,...b->...", wu, G, vp)
    t3 = np.einsum("...a,...ab,...b->...", up, G, wv)
    out = np.asarray(w_term - t2 - t3, dtype=float)
    return float(out) if out.shape == () else out


def involutivity_residual(g, E, p):
    """Frame-invariant bracket residual of E at a single point p.

    The declared frame is g-orthonormalized at p by a constant recombination
    (Cholesky of the Gram matrix), then the residual is the root-sum-square
    over pairs i<j of the g-norms of Q [Xhat_i, Xhat_j](p).  The constant
    recombination passes through Lie brackets, so the value depends only on
    E, not on the declared frame.
    """
    p = np.asarray(p, float)
    if p.ndim != 1:
        raise ValueError("involutivity_residual expects a single point")
    G = metric_at(g, p)
    F = E.values(p)
    pair = projector_at(g, E, p)
    M = np.swapaxes(F, -1, -2) @ G @ F
    L = np.linalg.cholesky(M)
    C = np.linalg.inv(L).T  # F @ C is g-orthonormal
    r = E.r
    fields = [ExpressionField(E.fields[c]) for c in range(r)]
    brackets = {}
    total = 0.0
    for i in range(r):
        for j in range(i + 1, r):
            acc = np.zeros(E.n)
            for a in range(r):
                for b in range(r):
                    if a == b:
                        continue
                    key = (a, b) if a < b else (b, a)
                    if key not in brackets:
                        brackets[key] = lie_bracket(fields[key[0]], fields[key[1]], p)
                    sign = 1.0 if a < b else -1.0
                    acc += C[a, i] * C[b, j] * sign * brackets[key]
            qa = pair.Q @ acc
            total += float(qa @ G @ qa)
    return float(np.sqrt(total))
