import math

import numpy as np
import pytest

from foliage.errors import DegenerateFrameError, MetricError
from foliage.expr import parse_expression
from foliage.geometry import (
    Box,
    ConstantField,
    DistributionSpec,
    ExpressionField,
    MetricField,
    ProjectedField,
    ScaledField,
    adapted_frame_at,
    field_at,
    involutivity_residual,
    lie_bracket,
    lie_derivative_metric,
    metric_at,
    projector_at,
)
from foliage.scenarios import BUILTIN_SCENARIOS, get_scenario, probe_points

from conftest import finite_difference_directional


def pe(text, n=3):
    return parse_expression(text, n)


class TestBox:
    def test_contains(self):
        box = Box((-1.0, 0.0), (1.0, 2.0))
        assert box.contains([0.0, 1.0])
        assert not box.contains([0.0, 2.5])
        assert not box.contains([0.0, 2.0])  # open box

    def test_shrink(self):
        box = Box((0.0,), (10.0,)).shrink(0.1)
        assert box.lower == (0.5,) and box.upper == (9.5,)

    def test_empty_box_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            Box((0.0, 1.0), (1.0, 1.0))


class TestMetricAt:
    def test_euclidean_identity(self, scn):
        s = scn("euclidean_planes")
        np.testing.assert_array_equal(metric_at(s.g, [0.3, -0.5, 1.0]), np.eye(3))

    def test_warped_at_zero(self, scn):
        s = scn("warped_product")
        np.testing.assert_allclose(metric_at(s.g, [0.5, 0.5, 0.0]), np.eye(3))

    def test_warped_at_one(self, scn):
        # expected values computed by evaluating the warp factor numerically
        s = scn("warped_product")
        f2 = math.exp(1.0) ** 2
        got = metric_at(s.g, [0.0, 0.0, 1.0 - 1e-12])
        np.testing.assert_allclose(got, np.diag([f2, f2, 1.0]), rtol=1e-10)

    def test_not_positive_definite_is_error(self):
        g = MetricField(2, [pe("x1", 2), pe("0", 2), pe("1", 2)], Box((-2, -2), (2, 2)))
        with pytest.raises(MetricError, match="smallest eigenvalue"):
            metric_at(g, [-0.5, 0.0])


class TestProjector:
    def test_euclidean_planes(self, scn):
        s = scn("euclidean_planes")
        pair = projector_at(s.g, s.E, [0.1, 0.2, 0.3])
        np.testing.assert_allclose(pair.P, np.diag([1.0, 1.0, 0.0]), atol=1e-14)

    def test_contact_at_y0(self, scn):
        s = scn("contact3d")
        pair = projector_at(s.g, s.E, [0.5, 0.0, -0.3])
        np.testing.assert_allclose(pair.P, np.diag([1.0, 1.0, 0.0]), atol=1e-14)

    def test_contact_at_y1_normal_component(self, scn):
        # Q e3 has squared g-norm 1/2, from solving the 2x2 Gram system by hand:
        # E = span{(0,1,0),(1,0,1)}; proj of e3 is (1/2,0,1/2); residual (−1/2,0,1/2).
        s = scn("contact3d")
        pair = projector_at(s.g, s.E, [0.0, 1.0, 0.0])
        q3 = pair.Q @ np.array([0.0, 0.0, 1.0])
        assert q3 @ q3 == pytest.approx(0.5, abs=1e-12)

    def test_invariants_on_all_scenarios(self, every_scenario):
        s = every_scenario
        pts = probe_points(s, 200)
        G = metric_at(s.g, pts)
        pair = projector_at(s.g, s.E, pts)
        P, Q = pair.P, pair.Q
        assert np.abs(P @ P - P).max() <= 1e-10
        assert np.abs(G @ P - np.swapaxes(P, -1, -2) @ G).max() <= 1e-10
        assert np.abs(np.trace(P, axis1=-2, axis2=-1) - s.E.r).max() <= 1e-10
        rng = np.random.default_rng(0)
        v = rng.normal(size=(200, s.g.n))
        w = rng.normal(size=(200, s.g.n))
        Pv, Qv = pair.decompose(v)
        np.testing.assert_array_equal(Pv + Qv, v)  # exact by construction
        cross = np.einsum("ya,yab,yb->y", Pv, G, np.einsum("yab,yb->ya", Q, w))
        assert np.abs(cross).max() <= 1e-10

    def test_degenerate_frame_is_error(self):
        g = MetricField(2, [pe("1", 2), pe("0", 2), pe("1", 2)], Box((-2, -2), (2, 2)))
        E = DistributionSpec(2, [[pe("x1", 2), pe("0", 2)]])
        with pytest.raises(DegenerateFrameError):
            E.values(np.array([0.0, 1.0]))


class TestAdaptedFrame:
    def test_euclidean(self, scn):
        s = scn("euclidean_planes")
        fr = adapted_frame_at(s.g, s.E, np.zeros(3))
        np.testing.assert_allclose(fr.vectors, np.eye(3), atol=1e-15)

    def test_scaling_removed(self):
        g = MetricField(3, [pe(s) for s in ["1", "0", "0", "1", "0", "1"]], Box((-2,) * 3, (2,) * 3))
        E = DistributionSpec(3, [[pe("2"), pe("0"), pe("0")], [pe("0"), pe("3"), pe("0")]])
        fr = adapted_frame_at(g, E, np.zeros(3))
        np.testing.assert_allclose(fr.vectors, np.eye(3), atol=1e-15)

    def test_sphere_frame_structure(self, scn):
        s = scn("sphere_foliation")
        p = np.array([0.0, 0.0, 2.0])
        fr = adapted_frame_at(s.g, s.E, p)
        G = metric_at(s.g, p)
        gram = fr.vectors.T @ G @ fr.vectors
        np.testing.assert_allclose(gram, np.eye(3), atol=1e-10)
        pair = projector_at(s.g, s.E, p)
        # first two columns lie in the sphere tangent plane, third is radial
        assert np.abs(pair.P @ fr.tangent - fr.tangent).max() <= 1e-10
        radial = p / np.linalg.norm(p)
        assert abs(abs(fr.normal[:, 0] @ radial) - 1.0) <= 1e-10


class TestLieBracket:
    def test_constant_fields_commute(self):
        U = ConstantField([1.0, 2.0, 3.0])
        V = ConstantField([-1.0, 0.5, 0.0])
        np.testing.assert_array_equal(lie_bracket(U, V, np.zeros(3)), np.zeros(3))

    def test_contact_bracket(self):
        # [d_y, d_x + y d_z] = d_z, checked against a hand derivative
        U = ExpressionField([pe("0"), pe("1"), pe("0")])
        V = ExpressionField([pe("1"), pe("0"), pe("x2")])
        np.testing.assert_allclose(lie_bracket(U, V, np.array([0.3, -0.7, 0.1])), [0, 0, 1])

    def test_antisymmetry(self, exprgen):
        rng = np.random.default_rng(5)
        for _ in range(10):
            U = ExpressionField([pe(exprgen(rng, 3, 2)) for _ in range(3)])
            V = ExpressionField([pe(exprgen(rng, 3, 2)) for _ in range(3)])
            p = rng.uniform(-1, 1, size=3)
            b1 = lie_bracket(U, V, p)
            b2 = lie_bracket(V, U, p)
            assert np.abs(b1 + b2).max() <= 1e-12 * (1 + np.abs(b1).max())


class TestLieDerivativeMetric:
    def test_flat_constant_fields(self, scn):
        s = scn("euclidean_planes")
        W = ConstantField([0.2, -1.0, 0.5])
        U = ConstantField([1.0, 0.0, 0.0])
        assert lie_derivative_metric(s.g, W, U, U, np.zeros(3)) == 0.0

    def test_warped_profile(self, scn):
        # (L_dz g)(dx, dx) = 2 f f' at each z; oracle: finite differences of
        # g(dx,dx) along the flow of dz (constant fields commute with dz).
        s = scn("warped_product")
        W = ConstantField([0.0, 0.0, 1.0])
        U = ConstantField([1.0, 0.0, 0.0])
        for z in (-0.5, 0.0, 0.7):
            p = np.array([0.4, -1.0, z])
            fd = finite_difference_directional(
                lambda q: metric_at(s.g, q)[0, 0], p, np.array([0.0, 0.0, 1.0])
            )
            got = lie_derivative_metric(s.g, W, U, U, p)
            assert got == pytest.approx(fd, rel=1e-9)
            assert got == pytest.approx(2.0 * math.exp(2.0 * z), rel=1e-12)

    def test_symmetry_in_last_two_slots(self, exprgen):
        rng = np.random.default_rng(11)
        s = get_scenario("warped_product")
        for _ in range(10):
            W = ExpressionField([pe(exprgen(rng, 3, 2)) for _ in range(3)])
            U = ExpressionField([pe(exprgen(rng, 3, 2)) for _ in range(3)])
            V = ExpressionField([pe(exprgen(rng, 3, 2)) for _ in range(3)])
            p = rng.uniform(-0.8, 0.8, size=3)
            a = lie_derivative_metric(s.g, W, U, V, p)
            b = lie_derivative_metric(s.g, W, V, U, p)
            assert abs(a - b) <= 1e-12 * (1 + abs(a))

    def test_function_linearity_of_restricted_tensor(self, every_scenario):
        # with W normal and U, V tangent the trilinear form is C-infinity
        # linear: scaling any argument field by (1 + x1^2) scales the value.
        s = every_scenario
        if s.E.r == s.g.n:
            pytest.skip("no normal directions")
        rng = np.random.default_rng(3)
        factor_expr = pe("1 + x1^2", s.g.n)
        p = s.center + 0.05
        fval = 1.0 + p[0] ** 2
        W = ProjectedField(s.g, s.E, rng.normal(size=s.g.n), "normal")
        U = ProjectedField(s.g, s.E, rng.normal(size=s.g.n), "tangent")
        V = ProjectedField(s.g, s.E, rng.normal(size=s.g.n), "tangent")
        base = lie_derivative_metric(s.g, W, U, V, p)
        for slot, fields in enumerate(
            [(ScaledField(factor_expr, W), U, V),
             (W, ScaledField(factor_expr, U), V),
             (W, U, ScaledField(factor_expr, V))]
        ):
            scaled = lie_derivative_metric(s.g, *fields, p)
            assert scaled == pytest.approx(fval * base, abs=1e-8 * (1 + abs(base)))


class TestInvolutivityResidual:
    def test_planes_zero(self, scn):
        s = scn("euclidean_planes")
        assert involutivity_residual(s.g, s.E, np.array([0.3, 0.1, -0.9])) <= 1e-12

    def test_contact_at_origin_is_one(self, scn):
        # bracket of the declared fields is e3; at the origin Q e3 = e3 with
        # Euclidean norm exactly 1.
        s = scn("contact3d")
        assert involutivity_residual(s.g, s.E, np.zeros(3)) == pytest.approx(1.0, abs=1e-12)

    def test_sphere_involutive(self, scn):
        s = scn("sphere_foliation")
        for p in probe_points(s, 20):
            assert involutivity_residual(s.g, s.E, p) <= 1e-10

    def test_frame_recombination_invariance(self, every_scenario):
        s = every_scenario
        rng = np.random.default_rng(17)
        C = rng.normal(size=(s.E.r, s.E.r))
        while abs(np.linalg.det(C)) < 0.3:
            C = rng.normal(size=(s.E.r, s.E.r))
        mixed = []
        for i in range(s.E.r):
            comps = []
            for a in range(s.g.n):
                terms = " + ".join(
                    f"({float(C[j, i])!r}) * ({s.config.frame[j][a]})" for j in range(s.E.r)
                )
                comps.append(parse_expression(terms, s.g.n))
            mixed.append(comps)
        E2 = DistributionSpec(s.g.n, mixed)
        for p in probe_points(s, 10):
            r1 = involutivity_residual(s.g, s.E, p)
            r2 = involutivity_residual(s.g, E2, p)
            assert abs(r1 - r2) <= 1e-8 * (1.0 + r1)


class TestProjectedField:
    def test_matches_projector(self, every_scenario):
        s = every_scenario
        rng = np.random.default_rng(2)
        v = rng.normal(size=s.g.n)
        p = s.center + 0.03
        pair = projector_at(s.g, s.E, p)
        tangent = field_at(ProjectedField(s.g, s.E, v, "tangent"), p)
        normal = field_at(ProjectedField(s.g, s.E, v, "normal"), p)
        np.testing.assert_allclose(tangent, pair.P @ v, atol=1e-12)
        np.testing.assert_allclose(normal, pair.Q @ v, atol=1e-12)
