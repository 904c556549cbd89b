"""Integral submanifolds and straightening charts via double exponentials.

For an involutive distribution the E-directed exponential map sweeps out the
leaf through a base point; composing a transverse geodesic with an E-directed
one yields a chart whose first r coordinate directions span E.  The chart's
E-frame is carried along the transverse geodesic by parallel transport, then
projected back onto E and re-orthonormalized (transport alone need not
preserve E-membership since the transverse curve is not E-tangent).

Chart derivatives for the tangency and invertibility checks are taken by
central finite differences of the chart map itself, deliberately independent
of the dual-propagation machinery they validate.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import PreconditionError
from .geometry import adapted_frame_at, involutivity_residual, metric_at, projector_at
from .transport import integrate_endpoint

__all__ = [
    "LeafSample",
    "FrobeniusChart",
    "leaf_sample",
    "build_frobenius_chart",
    "tangency_residual",
    "chart_invertibility_report",
]

FD_STEP = 1e-5


def _param_grid(extent, m, dims):
    axes = [np.linspace(-extent, extent, m)] * dims
    mesh = np.meshgrid(*axes, indexing="ij") if dims else []
    if not dims:
        return np.zeros((1, 0))
    return np.stack([a.ravel() for a in mesh], axis=-1)


@dataclass(frozen=True)
class LeafSample:
    """Sampled integral submanifold through ``base_point``."""

    base_point: np.ndarray
    params: np.ndarray      # (m^r, r)
    points: np.ndarray      # (m^r, n)
    residuals: np.ndarray   # (m^r,) tangency residual per sample
    extent: float


@dataclass(frozen=True)
class FrobeniusChart:
    """Double-exponential chart Phi on the parameter box [-delta, delta]^n.

    Parameters split as (x^1..x^r | x^{r+1}..x^n); the second block rides a
    transverse geodesic from the base point, the first block an E-directed
    geodesic from its endpoint, using the transported-projected E-frame.
    """

    g: object
    E: object
    base_point: np.ndarray
    frame: np.ndarray       # (n, n) adapted g-orthonormal columns at base
    delta: float
    m: int
    step: float
    grid_params: np.ndarray = field(default=None)
    grid_points: np.ndarray = field(default=None)

    @property
    def n(self):
        return self.base_point.shape[0]

    @property
    def r(self):
        return self.E.r

    def evaluate(self, xs):
        """Phi at parameter rows xs (k, n) -> points (k, n).

        Transverse stages are deduplicated across rows sharing the same
        x^{r+1}..x^n block (tangency probes only perturb the E block).
        """
        xs = np.atleast_2d(np.asarray(xs, dtype=float))
        n, r = self.n, self.r
        if xs.shape[1] != n:
            raise ValueError(f"chart parameters must have {n} components")
        xT = xs[:, r:]
        xE = xs[:, :r]
        uniqT, inverse = np.unique(xT, axis=0, return_inverse=True)
        k = uniqT.shape[0]
        base = np.broadcast_to(self.base_point, (k, n)).copy()
        if n - r:
            w = np.einsum("ka,na->kn", uniqT, self.frame[:, r:])
            frame0 = np.broadcast_to(self.frame[:, :r], (k, n, r)).copy()
            anchors, _, carried = integrate_endpoint(
                self.g, self.E, base, w, T=1.0, h=self.step, frame=frame0
            )
            # project back onto E at the anchor and re-orthonormalize
            pairs = projector_at(self.g, self.E, anchors)
            carried = pairs.P @ carried
            G = metric_at(self.g, anchors)
            gram = np.swapaxes(carried, -1, -2) @ G @ carried
            L = np.linalg.cholesky(gram)
            carried = carried @ np.swapaxes(np.linalg.inv(L), -1, -2)
        else:
            anchors, carried = base, np.broadcast_to(self.frame, (k, n, n)).copy()
        anchors = anchors[inverse]
        carried = carried[inverse]
        v = np.einsum("ki,kni->kn", xE, carried[:, :, :r])
        if not np.any(np.abs(v)):
            return anchors.copy()
        pts, _ = integrate_endpoint(self.g, self.E, anchors, v, T=1.0, h=self.step)
        return pts


def leaf_sample(g, E, p, extent=0.5, m=9, step=2e-2, warn_only=False):
    """Sample the candidate integral submanifold exp_p(t_1 X_1 + .. + t_r X_r).

    Requires the involutivity residual at p to be at most 1e-6; with
    ``warn_only=True`` a violation is reported as a warning and sampling
    proceeds (the non-involutive failure witness is a supported use).
    """
    p = np.asarray(p, dtype=float)
    resid = involutivity_residual(g, E, p)
    if resid > 1e-6:
        if not warn_only:
            raise PreconditionError(
                f"distribution is not involutive at the base point (residual {resid:.3e})"
            )
        warnings.warn(
            f"sampling a leaf of a non-involutive distribution (residual {resid:.3e})",
            stacklevel=2,
        )
    frame = adapted_frame_at(g, E, p)
    params = _param_grid(extent, m, E.r)
    k = params.shape[0]
    base = np.broadcast_to(p, (k, g.n)).copy()
    v = np.einsum("ki,ni->kn", params, frame.tangent)
    points, _ = integrate_endpoint(g, E, base, v, T=1.0, h=step)
    # tangency residuals from the same E-directed exponential, fresh offsets
    chart = FrobeniusChart(
        g=g, E=E, base_point=p, frame=frame.vectors, delta=extent, m=m, step=step
    )
    xs = np.concatenate([params, np.zeros((k, g.n - E.r))], axis=1)
    residuals = tangency_residual(g, E, chart, xs)
    return LeafSample(
        base_point=p, params=params, points=points, residuals=residuals, extent=extent
    )


def build_frobenius_chart(g, E, p, delta=0.3, m=9, step=2e-2):
    """Construct the straightening chart and cache its parameter grid."""
    p = np.asarray(p, dtype=float)
    frame = adapted_frame_at(g, E, p)
    chart = FrobeniusChart(
        g=g, E=E, base_point=p, frame=frame.vectors, delta=delta, m=m, step=step
    )
    params = _param_grid(delta, m, g.n)
    points = chart.evaluate(params)
    return FrobeniusChart(
        g=g,
        E=E,
        base_point=p,
        frame=frame.vectors,
        delta=delta,
        m=m,
        step=step,
        grid_params=params,
        grid_points=points,
    )


def tangency_residual(g, E, chart, xs):
    """max_i ||Q(Phi(x)) d_i||_g / ||d_i||_g over the E-block directions.

    d_i is the central finite difference of Phi at x along e_i (i <= r) with
    step 1e-5.  Accepts a single parameter point (n,) or a batch (k, n);
    returns a float or an array of residuals accordingly.
    """
    xs = np.asarray(xs, dtype=float)
    single = xs.ndim == 1
    xs = np.atleast_2d(xs)
    k, n = xs.shape
    r = chart.r
    if np.any(np.abs(xs) > chart.delta + 1e-12):
        raise ValueError("parameter point lies outside the chart box")
    offsets = []
    for i in range(r):
        e = np.zeros(n)
        e[i] = FD_STEP
        offsets.extend([xs + e, xs - e])
    stacked = np.concatenate([xs] + offsets, axis=0)
    values = chart.evaluate(stacked)
    centers = values[:k]
    G = metric_at(g, centers)
    Q = projector_at(g, E, centers).Q
    worst = np.zeros(k)
    for i in range(r):
        plus = values[(1 + 2 * i) * k : (2 + 2 * i) * k]
        minus = values[(2 + 2 * i) * k : (3 + 2 * i) * k]
        d = (plus - minus) / (2.0 * FD_STEP)
        qd = np.einsum("kab,kb->ka", Q, d)
        num = np.sqrt(np.maximum(np.einsum("ka,kab,kb->k", qd, G, qd), 0.0))
        den = np.sqrt(np.maximum(np.einsum("ka,kab,kb->k", d, G, d), 0.0))
        worst = np.maximum(worst, num / den)
    return float(worst[0]) if single else worst


def chart_invertibility_report(chart, x):
    """(g-aware condition number, determinant sign) of the chart Jacobian.

    The Jacobian is taken by central finite differences; its columns are
    measured in the metric at Phi(x) (a g-orthonormal frame scores condition
    number 1).  A singular Jacobian reports condition number inf.
    """
    x = np.asarray(x, dtype=float)
    n = chart.n
    stacked = np.concatenate(
        [x + FD_STEP * np.eye(n), x - FD_STEP * np.eye(n), x[None, :]], axis=0
    )
    values = chart.evaluate(stacked)
    jac = (values[:n] - values[n : 2 * n]).T / (2.0 * FD_STEP)
    center = values[-1]
    G = metric_at(chart.g, center)
    L = np.linalg.cholesky(G)
    jac_g = L.T @ jac
    det = float(np.linalg.det(jac_g))
    if det == 0.0 or not np.isfinite(det):
        return float("inf"), 0
    cond = float(np.linalg.cond(jac_g))
    return cond, (1 if det > 0 else -1)
