"""The adapted metric connection, its torsion, curvature, and rivals.

The production route builds the connection as Levi-Civita plus contorsion.
The torsion tensor is assembled from its defining pairings across the
splitting TM = E + E-perp:

* it vanishes on E x E and on E-perp x E-perp,
* paired with E it equals half the Lie derivative of g along the E-perp
  direction, and paired with E-perp it equals minus half the Lie derivative
  of g along the E direction.

Those pairings are tensorial, so they may be evaluated on any smooth
sections extending the given vectors; we use the projector fields applied to
constant vectors, P(x) u and Q(x) u, which turns the whole assembly into
explicit tensor algebra in (G, dG, F, dF) with no per-point frame choices.
Every step is written over jets, so exact first derivatives of the
Christoffel symbols and of the torsion (and hence the curvature) come from
the same code path.

The nine-term Koszul pairing is implemented separately, over generic
scalars, as an independent oracle for the contorsion route.
"""

from dataclasses import dataclass

import numpy as np

from .dual import Dual, value_of
from .errors import PreconditionError
from .geometry import (
    _metric_scalar,
    field_at,
    field_directional,
    lie_bracket,
    lie_derivative_metric,
    metric_at,
)
from .jets import Jet, jadd, jderiv, jeinsum, jinv, jscale, jtranspose, jval

__all__ = [
    "TorsionEval",
    "ConnectionEval",
    "CurvatureEval",
    "eval_connection",
    "levi_civita_at",
    "torsion_at",
    "canonical_at",
    "curvature_at",
    "blend",
    "koszul_pairing",
    "canonical_torsion_field",
    "zero_torsion_field",
    "covariant_derivative",
    "schouten_van_kampen_at",
    "vranceanu_at",
    "schouten_van_kampen_christoffels",
    "vranceanu_christoffels",
    "bott_at",
    "bott_defect_residual",
]


@dataclass(frozen=True)
class TorsionEval:
    """Coordinate torsion components: tau(d_i, d_j) = sum_k T^k_ij d_k."""

    point: np.ndarray
    components: np.ndarray  # (n, n, n) indexed [k, i, j]


@dataclass(frozen=True)
class ConnectionEval:
    """Christoffel coefficients: nabla_{d_i} d_j = sum_k Gamma^k_ij d_k."""

    point: np.ndarray
    kind: str
    gamma: np.ndarray  # (n, n, n) indexed [k, i, j]

    def torsion_components(self):
        """T^k_ij = Gamma^k_ij - Gamma^k_ji (coordinate brackets vanish)."""
        return self.gamma - np.swapaxes(self.gamma, -1, -2)


@dataclass(frozen=True)
class CurvatureEval:
    """R(d_i, d_j) d_k = sum_l R^l_kij d_l for the adapted connection."""

    point: np.ndarray
    components: np.ndarray  # (n, n, n, n) indexed [l, k, i, j]


class ConnectionData:
    """Raw batched tensors shared by the public per-point wrappers."""

    __slots__ = (
        "points", "G", "Ginv", "dG", "P", "Q", "dP",
        "gamma_lc", "gamma", "T", "dgamma", "dT", "R",
    )

    def __init__(self, **kw):
        for name in self.__slots__:
            setattr(self, name, kw.get(name))


def _jz(spec, *ops):
    """None-propagating jeinsum: any identically-zero operand kills the term."""
    if any(op is None for op in ops):
        return None
    return jeinsum(spec, *ops)


def _jsum(*ops):
    live = [op for op in ops if op is not None]
    if not live:
        return None
    if len(live) == 1:
        return live[0]
    return jadd(*live)


def _jneg(op):
    return None if op is None else jscale(op, -1.0)


def _jswap(op):
    return None if op is None else jtranspose(op)


def _lc_from_jets(JGinv, JdG):
    """Levi-Civita Christoffels from the inverse metric and metric gradient."""
    if JdG is None:
        return None
    c = _jsum(
        _jz("yilj->ylij", JdG),
        _jz("yjli->ylij", JdG),
        _jneg(JdG),
    )
    return jscale(_jz("ykl,ylij->ykij", JGinv, c), 0.5)


def _projector_jets(JG, JdG, JF, JdF):
    """P, Q and the projector field gradient dP[k] = d_k P."""
    n = jval(JG).shape[-1]
    GF = _jz("yab,ybj->yaj", JG, JF)
    M = _jz("yai,yaj->yij", JF, GF)
    Minv = jinv(M)
    FtG = _jswap(GF)
    FMinv = _jz("yai,yij->yaj", JF, Minv)
    P = _jz("yaj,yjb->yab", FMinv, FtG)
    Q = jadd(np.eye(n), jscale(P, -1.0))
    dGF = _jz("ykab,ybj->ykaj", JdG, JF)
    dM = _jsum(
        _jz("ykai,yaj->ykij", JdF, GF),
        _jz("yai,ykaj->ykij", JF, dGF),
        _jz("yib,ykbj->ykij", FtG, JdF),
    )
    dMinv = None
    if dM is not None:
        dMinv = _jneg(_jz("ykil,ylm->ykim", _jz("yij,ykjl->ykil", Minv, dM), Minv))
    dP = _jsum(
        _jz("ykai,yib->ykab", JdF, _jz("yij,yjb->yib", Minv, FtG)),
        _jz("yai,ykib->ykab", JF, _jz("ykij,yjb->ykib", dMinv, FtG)),
        _jz("ykac,ycb->ykab", _jz("yaj,ykcj->ykac", FMinv, JdF), JG),
        _jz("yac,ykcb->ykab", _jz("yaj,ycj->yac", FMinv, JF), JdG),
    )
    return P, Q, dP


def _torsion_from_jets(JG, JdG, JGinv, P, Q, dP):
    """Coordinate torsion components from the defining pairings.

    s(u, v) = tau(Q u, P v) is recovered from g(s, w) = A(u,v,w) + B(u,v,w),
    where A and B expand the two Lie-derivative pairings on the projector
    field extensions; then T(u, v) = s(u, v) - s(v, u).
    """
    dQ = _jneg(dP)
    GP = _jz("yab,ybj->yaj", JG, P)
    GQ = _jz("yab,ybj->yaj", JG, Q)

    def lie_pairing(R1, dR1, R2, GR2):
        # (L_{R1 e_i} g)(R2 e_j, R2 e_l) expanded on projector-field sections:
        #   (R1 u)^k dG_kab (R2 v)^a (R2 w)^b
        #   + g(D_{R2 v} (R1 u), R2 w) + g(R2 v, D_{R2 w} (R1 u))
        t1 = _jz("yijb,ybl->yijl", _jz("yiab,yaj->yijb", _jz("yki,ykab->yiab", R1, JdG), R2), R2)
        dRu = _jz("ymai,ymj->yaij", dR1, R2)  # sum_m (d_m R1)_ai (R2)_mj
        t2 = _jz("yaij,yal->yijl", dRu, GR2)
        dRw = _jz("ymai,yml->yail", dR1, R2)
        t3 = _jz("yail,yaj->yijl", _jz("ybil,yba->yail", dRw, JG), R2)
        return _jsum(t1, t2, t3)

    A_ = lie_pairing(Q, dQ, P, GP)
    A = None if A_ is None else jscale(A_, 0.5)
    B_ = lie_pairing(P, dP, Q, GQ)
    # B pairs (L_{P e_j} g)(Q e_i, Q e_l): swap the first two slots
    B = None if B_ is None else _jz("yjil->yijl", jscale(B_, -0.5))
    C = _jsum(A, B)
    if C is None:
        return None
    s = _jz("ykl,yijl->ykij", JGinv, C)
    return _jsum(s, _jneg(_jswap(s)))


def _contorsion_from_torsion(JG, JGinv, T):
    """K^k_ij = 1/2 g^{kl} (Tl_lij - Tl_jli + Tl_ijl) with lowered torsion."""
    if T is None:
        return None
    Tl = _jz("ymab,ymc->yabc", T, JG)
    inner = _jsum(Tl, _jneg(_jz("yjli->ylij", Tl)), _jz("yijl->ylij", Tl))
    return jscale(_jz("ykl,ylij->ykij", JGinv, inner), 0.5)


def _curvature_from_gamma(gamma, dgamma):
    """R^l_kij = d_i G^l_jk - d_j G^l_ik + G^l_im G^m_jk - G^l_jm G^m_ik."""
    t1 = np.einsum("yiljk->ylkij", dgamma)
    t2 = np.einsum("yjlik->ylkij", dgamma)
    t3 = np.einsum("ylim,ymjk->ylkij", gamma, gamma)
    t4 = np.einsum("yljm,ymik->ylkij", gamma, gamma)
    return t1 - t2 + t3 - t4


def eval_connection(g, E, pts, derivatives=False):
    """Evaluate the adapted-connection pipeline at a batch of points.

    Returns a :class:`ConnectionData` with batched arrays; with
    ``derivatives=True`` the exact coordinate derivatives of the Christoffel
    symbols and torsion, and the curvature tensor, are included (one extra
    expression order and jet sweep).  Constant and coordinate-linear metric
    or frame entries short-circuit the corresponding derivative terms.
    """
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    n = g.n
    nbatch = pts.shape[0]
    order = 2 if derivatives else 1
    G, dG, ddG = g.jets(pts, order=order)
    F, dF, ddF = E.jets(pts, order=order)

    dG_in = None if g.deriv_is_zero else dG
    dF_in = None if E.deriv_is_zero else dF
    if derivatives:
        JG = G if g.deriv_is_zero else Jet(G, np.moveaxis(dG, 1, 0))
        JF = F if E.deriv_is_zero else Jet(F, np.moveaxis(dF, 1, 0))
        JdG = dG_in if g.second_deriv_is_zero else Jet(dG, np.moveaxis(ddG, 1, 0))
        JdF = dF_in if E.second_deriv_is_zero else Jet(dF, np.moveaxis(ddF, 1, 0))
    else:
        JG, JF, JdG, JdF = G, F, dG_in, dF_in

    JGinv = jinv(JG)
    lc = _lc_from_jets(JGinv, JdG)
    P, Q, dP = _projector_jets(JG, JdG, JF, JdF)
    T = _torsion_from_jets(JG, JdG, JGinv, P, Q, dP)
    K = _contorsion_from_torsion(JG, JGinv, T)
    gamma = _jsum(lc, K)

    gshape = (nbatch, n, n, n)

    def mat(x, shape):
        return np.broadcast_to(jval(x), shape) if x is not None else np.zeros(shape)

    data = ConnectionData(
        points=pts,
        G=G,
        Ginv=jval(JGinv),
        dG=dG,
        P=jval(P),
        Q=np.broadcast_to(jval(Q), G.shape),
        dP=mat(dP, gshape),
        gamma_lc=mat(lc, gshape),
        gamma=mat(gamma, gshape),
        T=mat(T, gshape),
    )
    if derivatives:
        dshape = (nbatch, n) + gshape[1:]

        def dmat(x):
            if isinstance(x, Jet) and x.nz:
                return np.moveaxis(x.deriv, 0, 1)  # (y, m, k, i, j)
            return np.zeros(dshape)

        data.dgamma = dmat(gamma)
        data.dT = dmat(T)
        if gamma is None:
            data.R = np.zeros((nbatch, n) + gshape[1:])
        else:
            data.R = _curvature_from_gamma(data.gamma, data.dgamma)
    return data


def _single(p):
    p = np.asarray(p, dtype=float)
    if p.ndim != 1:
        raise ValueError("expected a single point")
    return p


def levi_civita_at(g, p):
    """Standard Christoffel symbols of g from exact metric derivatives."""
    p = _single(p)
    metric_at(g, p)  # SPD check
    G, dG, _ = g.jets(p[None, :], order=1)
    lc = _lc_from_jets(jinv(G), None if g.deriv_is_zero else dG)
    gamma = np.zeros((g.n, g.n, g.n)) if lc is None else jval(lc)[0]
    return ConnectionEval(point=p, kind="levi_civita", gamma=gamma)


def torsion_at(g, E, p):
    """Torsion of the adapted connection in coordinate components."""
    p = _single(p)
    metric_at(g, p)
    data = eval_connection(g, E, p[None, :])
    return TorsionEval(point=p, components=data.T[0])


def canonical_at(g, E, p):
    """The adapted (Levi-Civita w.r.t. E) connection at a point."""
    p = _single(p)
    metric_at(g, p)
    data = eval_connection(g, E, p[None, :])
    return ConnectionEval(point=p, kind="canonical", gamma=data.gamma[0])


def curvature_at(g, E, p):
    """Curvature of the adapted connection, derivatives by dual propagation
    through the full Christoffel pipeline."""
    p = _single(p)
    data = eval_connection(g, E, p[None, :], derivatives=True)
    return CurvatureEval(point=p, components=data.R[0])


def blend(c1, c2, lam):
    """Affine combination (1-lam) c1 + lam c2 of two connection evaluations."""
    if not np.array_equal(c1.point, c2.point):
        raise ValueError("blend requires evaluations at the same point")
    if lam == 0.0:
        return c1
    if lam == 1.0:
        return c2
    gamma = (1.0 - lam) * c1.gamma + lam * c2.gamma
    return ConnectionEval(point=c1.point, kind=f"blend({c1.kind},{c2.kind})", gamma=gamma)


def zero_torsion_field(n):
    """The zero torsion, as a field usable by koszul_pairing."""

    def tau(p):
        return np.zeros((n, n, n))

    return tau


def canonical_torsion_field(g, E):
    """p -> coordinate torsion components of the adapted connection."""

    def tau(p):
        return torsion_at(g, E, p).components

    return tau


def koszul_pairing(g, tau_field, X, Y, Z, p):
    """Nine-term generalized Koszul right-hand side: returns 2 g(D_X Y, Z)(p).

    Three metric-derivative terms, three bracket terms, three torsion terms,
    evaluated exactly as displayed; independent oracle for the contorsion
    route (field derivatives by dual sweeps, no shared assembly code).
    """
    p = _single(p)
    n = g.n
    xp = field_at(X, p)
    yp = field_at(Y, p)
    zp = field_at(Z, p)
    G = g.values(p)

    def dscalar(direction, U, V):
        coords = [Dual(p[k], direction[k]) for k in range(n)]
        s = _metric_scalar(g, U, V, coords)
        return float(value_of(s.b)) if isinstance(s, Dual) else 0.0

    term_x = dscalar(xp, Y, Z)
    term_z = dscalar(zp, X, Y)
    term_y = dscalar(yp, Z, X)

    b_zx = lie_bracket(Z, X, p)
    b_yz = lie_bracket(Y, Z, p)
    b_xy = lie_bracket(X, Y, p)
    g_zx = float(b_zx @ G @ yp)
    g_yz = float(b_yz @ G @ xp)
    g_xy = float(b_xy @ G @ zp)

    T = tau_field(p)

    def tpair(a, b, c):
        return float(np.einsum("kij,i,j,kl,l->", T, a, b, G, c))

    t_zx = tpair(zp, xp, yp)
    t_yz = tpair(yp, zp, xp)
    t_xy = tpair(xp, yp, zp)

    return term_x - term_z + term_y + g_zx - g_yz + g_xy + t_zx - t_yz + t_xy


def covariant_derivative(gamma, X_value, Y_field_jet):
    """(nabla_X Y)^k = X^i d_i Y^k + Gamma^k_ij X^i Y^j from pointwise data.

    ``Y_field_jet`` is the pair (Y(p), D_X Y(p)).
    """
    yp, dxy = Y_field_jet
    return dxy + np.einsum("kij,i,j->k", gamma, X_value, yp)


def _svk_pieces(g, E, X, Y, p):
    data = eval_connection(g, E, p[None, :])
    P, Q, dP, lc = data.P[0], data.Q[0], data.dP[0], data.gamma_lc[0]
    xp = field_at(X, p)
    yp, dxy = field_directional(Y, p, xp)
    return data, P, Q, dP, lc, xp, yp, dxy


def schouten_van_kampen_at(g, E, X, Y, p):
    """(nabla_X Y^tangent)^tangent + (nabla_X Y^normal)^normal with nabla = LC."""
    p = _single(p)
    _, P, Q, dP, lc, xp, yp, dxy = _svk_pieces(g, E, X, Y, p)
    dP_x = np.einsum("m,mab->ab", xp, dP)
    d_PY = dP_x @ yp + P @ dxy
    d_QY = -dP_x @ yp + Q @ dxy
    nab_PY = d_PY + np.einsum("kij,i,j->k", lc, xp, P @ yp)
    nab_QY = d_QY + np.einsum("kij,i,j->k", lc, xp, Q @ yp)
    return P @ nab_PY + Q @ nab_QY


def vranceanu_at(g, E, X, Y, p):
    """Four-term Vranceanu derivative with nabla = LC and projector fields."""
    p = _single(p)
    _, P, Q, dP, lc, xp, yp, dxy = _svk_pieces(g, E, X, Y, p)
    Pxp, Qxp = P @ xp, Q @ xp
    Pyp, Qyp = P @ yp, Q @ yp

    _, dY_Px = field_directional(Y, p, Pxp)
    _, dY_Qx = field_directional(Y, p, Qxp)
    _, dX_Py = field_directional(X, p, Pyp)
    _, dX_Qy = field_directional(X, p, Qyp)

    dP_Px = np.einsum("m,mab->ab", Pxp, dP)
    dP_Qx = np.einsum("m,mab->ab", Qxp, dP)
    dP_Py = np.einsum("m,mab->ab", Pyp, dP)
    dP_Qy = np.einsum("m,mab->ab", Qyp, dP)

    # term 1: (nabla_{X^T} Y^T)^T
    d_PY_Px = dP_Px @ yp + P @ dY_Px
    t1 = P @ (d_PY_Px + np.einsum("kij,i,j->k", lc, Pxp, Pyp))
    # term 2: (nabla_{X^N} Y^N)^N
    d_QY_Qx = -dP_Qx @ yp + Q @ dY_Qx
    t2 = Q @ (d_QY_Qx + np.einsum("kij,i,j->k", lc, Qxp, Qyp))
    # term 3: [X^N, Y^T]^T
    d_PY_Qx = dP_Qx @ yp + P @ dY_Qx
    d_QX_Py = -dP_Py @ xp + Q @ dX_Py
    t3 = P @ (d_PY_Qx - d_QX_Py)
    # term 4: [X^T, Y^N]^N
    d_QY_Px = -dP_Px @ yp + Q @ dY_Px
    d_PX_Qy = dP_Qy @ xp + P @ dX_Qy
    t4 = Q @ (d_QY_Px - d_PX_Qy)
    return t1 + t2 + t3 + t4


def schouten_van_kampen_christoffels(g, E, p):
    """Coefficient table of the Schouten-Van Kampen connection."""
    p = _single(p)
    data = eval_connection(g, E, p[None, :])
    P, Q, dP, lc = data.P[0], data.Q[0], data.dP[0], data.gamma_lc[0]
    # nabla^o_{d_i} d_j = P (d_i(P) e_j + LC(d_i, P e_j)) + Q (d_i(Q) e_j + LC(d_i, Q e_j))
    lcP = np.einsum("kim,mj->kij", lc, P)
    lcQ = np.einsum("kim,mj->kij", lc, Q)
    inner_P = np.einsum("iaj->aij", dP) + lcP
    inner_Q = -np.einsum("iaj->aij", dP) + lcQ
    gamma = np.einsum("ka,aij->kij", P, inner_P) + np.einsum("ka,aij->kij", Q, inner_Q)
    return ConnectionEval(point=p, kind="schouten_van_kampen", gamma=gamma)


def vranceanu_christoffels(g, E, p):
    """Coefficient table of the Vranceanu connection."""
    p = _single(p)
    data = eval_connection(g, E, p[None, :])
    P, Q, dP, lc = data.P[0], data.Q[0], data.dP[0], data.gamma_lc[0]
    dP_P = np.einsum("mi,mab->iab", P, dP)   # direction P e_i
    dP_Q = np.einsum("mi,mab->iab", Q, dP)
    lcPP = np.einsum("kam,ai,mj->kij", lc, P, P)
    lcQQ = np.einsum("kam,ai,mj->kij", lc, Q, Q)
    # term 1: P [ (sum_m P_mi dP[m]) e_j + LC(P e_i, P e_j) ]
    t1 = np.einsum("ka,iaj->kij", P, dP_P) + np.einsum("ka,aij->kij", P, lcPP)
    # term 2: Q [ -(sum_m Q_mi dP[m]) e_j + LC(Q e_i, Q e_j) ]
    t2 = -np.einsum("ka,iaj->kij", Q, dP_Q) + np.einsum("ka,aij->kij", Q, lcQQ)
    # term 3: P [ (sum_m Q_mi dP[m]) e_j + (sum_m P_mj dP[m]) e_i ]
    t3 = np.einsum("ka,iaj->kij", P, dP_Q) + np.einsum("ka,jai->kij", P, dP_P)
    # term 4: Q [ -(sum_m P_mi dP[m]) e_j - (sum_m Q_mj dP[m]) e_i ]
    t4 = -np.einsum("ka,iaj->kij", Q, dP_P) - np.einsum("ka,jai->kij", Q, dP_Q)
    return ConnectionEval(point=p, kind="vranceanu", gamma=t1 + t2 + t3 + t4)


def _norm_g(G, v):
    return float(np.sqrt(max(v @ G @ v, 0.0)))


def bott_at(g, E, X, xi, p):
    """Bott derivative Q [X, xi](p) and compatibility defect (L_X g)(xi, xi)(p).

    Requires X(p) in E_p and xi(p) in E_p-perp (relative tolerance 1e-8).
    """
    p = _single(p)
    from .geometry import projector_at

    pair = projector_at(g, E, p)
    G = metric_at(g, p)
    xp = field_at(X, p)
    xip = field_at(xi, p)
    if _norm_g(G, pair.Q @ xp) > 1e-8 * max(1.0, _norm_g(G, xp)):
        raise PreconditionError("X(p) is not tangent to E")
    if _norm_g(G, pair.P @ xip) > 1e-8 * max(1.0, _norm_g(G, xip)):
        raise PreconditionError("xi(p) is not normal to E")
    deriv = pair.Q @ lie_bracket(X, xi, p)
    defect = lie_derivative_metric(g, X, xi, xi, p)
    return deriv, float(defect)


def bott_defect_residual(g, E, X, xi, eta, p):
    """|X(g(xi,eta)) - g(D_X xi, eta) - g(xi, D_X eta) - (L_X g)(xi, eta)| at p."""
    p = _single(p)
    from .geometry import projector_at

    pair = projector_at(g, E, p)
    G = metric_at(g, p)
    n = g.n
    xp = field_at(X, p)
    coords = [Dual(p[k], xp[k]) for k in range(n)]
    s = _metric_scalar(g, xi, eta, coords)
    lhs_d = float(value_of(s.b)) if isinstance(s, Dual) else 0.0
    d_xi = pair.Q @ lie_bracket(X, xi, p)
    d_eta = pair.Q @ lie_bracket(X, eta, p)
    xip = field_at(xi, p)
    etap = field_at(eta, p)
    lhs = lhs_d - float(d_xi @ G @ etap) - float(xip @ G @ d_eta)
    rhs = lie_derivative_metric(g, X, xi, eta, p)
    return abs(lhs - rhs)
