"""Geodesics, parallel transport, the exponential map, and Jacobi fields.

All integrations use classical fixed-step RK4 on first-order systems; the
connection coefficients are re-evaluated at every substage point (never
interpolated).  State arrays may carry a leading batch axis, and a batch of
independent trajectories integrates in one sweep.

Parallel transport and Jacobi fields along a geodesic re-integrate the
carrier curve as part of the coupled system, so the substage positions agree
exactly with what the geodesic integrator produced on the same grid.

The Jacobi system carries the coordinate time derivative of J internally;
the covariant derivative along the curve is converted at the boundary (on
input and for the returned samples).
"""

from dataclasses import dataclass

import numpy as np

from .connection import eval_connection
from .errors import DomainExitError

__all__ = [
    "Trajectory",
    "TransportState",
    "integrate_geodesic",
    "exp_map",
    "parallel_transport",
    "jacobi_field_ode",
    "variation_jacobi_oracle",
    "convergence_order",
]


@dataclass(frozen=True)
class Trajectory:
    """Sampled curve: times (N+1,), points and velocities (N+1, [B,] n)."""

    times: np.ndarray
    points: np.ndarray
    velocities: np.ndarray

    @property
    def step(self):
        return float(self.times[1] - self.times[0])

    @property
    def batched(self):
        return self.points.ndim == 3

    def sample_index(self, t):
        """Index of the sample at time t (must lie on the grid)."""
        idx = int(round(t / self.step))
        if not (0 <= idx < len(self.times)) or abs(self.times[idx] - t) > 1e-9:
            raise ValueError(f"time {t} is not on the trajectory grid")
        return idx


@dataclass(frozen=True)
class TransportState:
    """Vectors carried along a trajectory.

    ``vectors`` are the samples V(t_k); for Jacobi states ``covariant_deriv``
    additionally holds the covariant derivative of J along the curve.
    """

    trajectory: Trajectory
    vectors: np.ndarray
    covariant_deriv: np.ndarray = None


def _steps_for(T, h):
    if h <= 0 or T <= 0:
        raise ValueError("duration and step must be positive")
    N = max(1, int(np.ceil(T / h - 1e-9)))
    return N, T / N


def _check_state(q, domain):
    if not np.all(np.isfinite(q)):
        raise DomainExitError("non-finite state")
    if domain is not None and not np.all(domain.contains(q)):
        raise DomainExitError("initial point outside the domain box")


def _rk4(rhs, state, dt):
    k1 = rhs(state)
    k2 = rhs([s + 0.5 * dt * k for s, k in zip(state, k1)])
    k3 = rhs([s + 0.5 * dt * k for s, k in zip(state, k2)])
    k4 = rhs([s + dt * k for s, k in zip(state, k3)])
    return [
        s + (dt / 6.0) * (a + 2.0 * b + 2.0 * c + d)
        for s, a, b, c, d in zip(state, k1, k2, k3, k4)
    ]


def _geodesic_rhs(g, E):
    def rhs(state):
        q, u = state
        gamma = eval_connection(g, E, q).gamma
        du = -np.einsum("ykij,yi,yj->yk", gamma, u, u)
        return [u, du]

    return rhs


def _partial_trajectory(times, qs, us, k, squeeze):
    t = np.asarray(times[: k + 1])
    q = np.stack(qs[: k + 1])
    u = np.stack(us[: k + 1])
    if squeeze:
        q, u = q[:, 0], u[:, 0]
    return Trajectory(times=t, points=q, velocities=u)


def integrate_geodesic(g, E, p0, v0, T, h):
    """RK4 integration of the geodesic system of the adapted connection.

    ``p0``/``v0`` may be single vectors (n,) or batches (B, n); the sample
    arrays carry the batch axis accordingly.  Uses N = ceil(T/h) uniform
    steps of size T/N.  On domain exit the partial trajectory is attached to
    the raised :class:`DomainExitError`.
    """
    p0 = np.asarray(p0, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    squeeze = p0.ndim == 1
    q = np.atleast_2d(p0).astype(float)
    u = np.atleast_2d(v0).astype(float)
    if q.shape != u.shape:
        raise ValueError("p0 and v0 must have matching shapes")
    N, dt = _steps_for(T, h)
    rhs = _geodesic_rhs(g, E)
    times = dt * np.arange(N + 1)
    qs, us = [q], [u]
    _check_state(q, g.domain)
    for k in range(N):
        q, u = _rk4(rhs, [q, u], dt)
        if not (np.all(np.isfinite(q)) and np.all(g.domain.contains(q))):
            msg = "curve left the domain box" if np.all(np.isfinite(q)) else "non-finite state"
            raise DomainExitError(msg, partial=_partial_trajectory(times, qs, us, k, squeeze))
        qs.append(q)
        us.append(u)
    qs = np.stack(qs)
    us = np.stack(us)
    if squeeze:
        qs, us = qs[:, 0], us[:, 0]
    return Trajectory(times=times, points=qs, velocities=us)


def exp_map(g, E, p, v, h=1e-2):
    """Endpoint of the unit-time geodesic from (p, v)."""
    return integrate_geodesic(g, E, p, v, T=1.0, h=h).points[-1]


def _as_batched(traj):
    if traj.batched:
        return traj.points, traj.velocities, False
    return traj.points[:, None, :], traj.velocities[:, None, :], True


def parallel_transport(g, E, traj, V0):
    """Transport V0 along ``traj`` by integrating V' = -Gamma(gamma')(V).

    The carrier geodesic is re-integrated inside the coupled system on the
    trajectory's own grid, reproducing its stored samples exactly.  ``V0``
    may hold several vectors stacked in a trailing axis: (n,) or (n, k).
    """
    qs, us, squeeze = _as_batched(traj)
    q, u = qs[0], us[0]
    B, n = q.shape
    V0 = np.asarray(V0, dtype=float)
    if V0.ndim == 1:  # one vector for every trajectory
        V = np.broadcast_to(V0[None, :, None], (B, n, 1)).copy()
        vec_out = True
    elif V0.ndim == 2 and squeeze:  # single trajectory, k stacked vectors
        V = np.broadcast_to(V0[None], (B,) + V0.shape).copy()
        vec_out = False
    elif V0.ndim == 2:  # batched trajectory, one vector each
        V = V0[:, :, None].copy()
        vec_out = True
    else:  # (B, n, k)
        V = V0.copy()
        vec_out = False
    dt = traj.step

    def rhs(state):
        qq, uu, VV = state
        gamma = eval_connection(g, E, qq).gamma
        du = -np.einsum("ykij,yi,yj->yk", gamma, uu, uu)
        dV = -np.einsum("ykij,yi,yjc->ykc", gamma, uu, VV)
        return [uu, du, dV]

    out = [V]
    state = [q, u, V]
    for _ in range(len(traj.times) - 1):
        state = _rk4(rhs, state, dt)
        if not np.all(np.isfinite(state[2])):
            raise DomainExitError("non-finite transported vector")
        out.append(state[2])
    vectors = np.stack(out)  # (N+1, B, n, k)
    if squeeze:
        vectors = vectors[:, 0]
    if vec_out:
        vectors = vectors[..., 0]
    return TransportState(trajectory=traj, vectors=vectors)


def jacobi_field_ode(g, E, traj, J0, J0_cov):
    """Integrate the Jacobi equation with torsion term along a geodesic.

    The right-hand side expands both covariant derivatives through the
    Christoffel symbols and the torsion term through the torsion components,
    with their exact coordinate derivatives propagated through the full
    pipeline at every substage.  ``J0_cov`` is the covariant derivative of J
    along the curve at t=0; returned samples hold (J, covariant J').
    """
    qs, us, squeeze = _as_batched(traj)
    q, u = qs[0].copy(), us[0].copy()
    B, n = q.shape
    J0 = np.asarray(J0, dtype=float)
    Jc0 = np.asarray(J0_cov, dtype=float)
    if J0.shape != Jc0.shape:
        raise ValueError("J0 and J0_cov must have matching shapes")
    if J0.ndim == 1:
        J = np.broadcast_to(J0[None, :, None], (B, n, 1)).copy()
        Jc = np.broadcast_to(Jc0[None, :, None], (B, n, 1)).copy()
        vec_out = True
    elif J0.ndim == 2 and squeeze:
        J = np.broadcast_to(J0[None], (B,) + J0.shape).copy()
        Jc = np.broadcast_to(Jc0[None], (B,) + J0.shape).copy()
        vec_out = False
    elif J0.ndim == 2:
        J, Jc = J0[:, :, None].copy(), Jc0[:, :, None].copy()
        vec_out = True
    else:
        J, Jc = J0.copy(), Jc0.copy()
        vec_out = False
    gamma0 = eval_connection(g, E, q).gamma
    K = Jc - np.einsum("ykij,yi,yjc->ykc", gamma0, u, J)
    dt = traj.step

    def rhs(state):
        qq, uu, JJ, KK = state
        data = eval_connection(g, E, qq, derivatives=True)
        gam, T, dgam, dT, R = data.gamma, data.T, data.dgamma, data.dT, data.R

        def bil(C, a, b):
            return np.einsum("ykij,yi,yjc->ykc", C, a, b)

        a = -np.einsum("ykij,yi,yj->yk", gam, uu, uu)
        W = KK + bil(gam, uu, JJ)
        S = bil(T, uu, JJ)
        dgam_u = np.einsum("ymkij,ym->ykij", dgam, uu)
        dT_u = np.einsum("ymkij,ym->ykij", dT, uu)
        Rterm = np.einsum("ylkij,yi,yjc,yk->ylc", R, uu, JJ, uu)
        Kdot = (
            Rterm
            + bil(dT_u, uu, JJ)
            + bil(T, a, JJ)
            + bil(T, uu, KK)
            + bil(gam, uu, S)
            - bil(dgam_u, uu, JJ)
            - bil(gam, a, JJ)
            - bil(gam, uu, KK)
            - bil(gam, uu, W)
        )
        return [uu, a, KK, Kdot]

    Js, Ks = [J], [K]
    state = [q, u, J, K]
    for _ in range(len(traj.times) - 1):
        state = _rk4(rhs, state, dt)
        if not np.all(np.isfinite(state[2])):
            raise DomainExitError("non-finite Jacobi state")
        Js.append(state[2])
        Ks.append(state[3])
    Js = np.stack(Js)
    Ks = np.stack(Ks)
    # convert coordinate dJ/dt back to covariant derivative samples
    flat_q = qs.reshape(-1, n)
    gam_all = eval_connection(g, E, flat_q).gamma.reshape(qs.shape[:2] + (n, n, n))
    Jcov = Ks + np.einsum("tykij,tyi,tyjc->tykc", gam_all, us, Js)
    if squeeze:
        Js, Jcov = Js[:, 0], Jcov[:, 0]
    if vec_out:
        Js, Jcov = Js[..., 0], Jcov[..., 0]
    return TransportState(trajectory=traj, vectors=Js, covariant_deriv=Jcov)


def integrate_endpoint(g, E, p0, v0, T, h, frame=None):
    """Endpoint-only batched geodesic integration, optionally carrying a
    frame of vectors by parallel transport.

    ``p0``/``v0`` are (B, n); ``frame`` is (B, n, r) or None.  Returns
    (points, velocities) or (points, velocities, frame) at t = T without
    storing intermediate samples.
    """
    q = np.asarray(p0, dtype=float).copy()
    u = np.asarray(v0, dtype=float).copy()
    N, dt = _steps_for(T, h)
    if frame is None:

        def rhs(state):
            qq, uu = state
            gamma = eval_connection(g, E, qq).gamma
            return [uu, -np.einsum("ykij,yi,yj->yk", gamma, uu, uu)]

        state = [q, u]
    else:

        def rhs(state):
            qq, uu, VV = state
            gamma = eval_connection(g, E, qq).gamma
            du = -np.einsum("ykij,yi,yj->yk", gamma, uu, uu)
            dV = -np.einsum("ykij,yi,yjc->ykc", gamma, uu, VV)
            return [uu, du, dV]

        state = [q, u, np.asarray(frame, dtype=float).copy()]
    _check_state(q, g.domain)
    for _ in range(N):
        state = _rk4(rhs, state, dt)
        if not np.all(np.isfinite(state[0])):
            raise DomainExitError("non-finite state")
        if not np.all(g.domain.contains(state[0])):
            raise DomainExitError("curve left the domain box")
    return tuple(state)


def variation_jacobi_oracle(g, E, p, X, Y, t, h=1e-2, step=1e-5):
    """Central difference in u of exp_p(t (X + u Y)) at u = 0.

    Independent oracle for :func:`jacobi_field_ode`: differentiates the
    geodesic variation itself rather than integrating the Jacobi system.
    """
    p = np.asarray(p, dtype=float)
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if t == 0.0:
        return np.zeros_like(p)
    p0 = np.stack([p, p])
    v0 = np.stack([X + step * Y, X - step * Y])
    traj = integrate_geodesic(g, E, p0, v0, T=t, h=h)
    ends = traj.points[-1]
    return (ends[0] - ends[1]) / (2.0 * step)


def convergence_order(g, E, p0, v0, T=1.0, h=1e-2):
    """RK4 self-convergence order from endpoints at steps h, h/2, h/4.

    Returns (order, err_coarse, err_fine); non-measurable (exactly
    integrated) cases return order = inf.
    """
    ends = [
        integrate_geodesic(g, E, p0, v0, T, step).points[-1]
        for step in (h, h / 2.0, h / 4.0)
    ]
    e1 = float(np.linalg.norm(ends[0] - ends[1]))
    e2 = float(np.linalg.norm(ends[1] - ends[2]))
    if e1 < 1e-13 and e2 < 1e-14:
        return float("inf"), e1, e2
    if e2 == 0.0:
        return float("inf"), e1, e2
    return float(np.log2(e1 / e2)), e1, e2
