import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cavityshape import ballmodes, geomquad, lab
from cavityshape.errors import DegenerateJacobian
from cavityshape.geomquad import QuadOrder, build_ball_quadrature, build_sphere_surface, map_surface
from cavityshape.transplant import Dilation, Displacement, Identity, Linear, Translation


def test_quad_order_validation():
    with pytest.raises(ValueError):
        QuadOrder(3, 8, 8)
    assert QuadOrder(4, 5, 6).doubled().as_tuple() == (8, 10, 12)
    assert QuadOrder.coerce([6, 7, 8]) == QuadOrder(6, 7, 8)


def test_ball_rule_invariants():
    R = 1.7
    q = build_ball_quadrature(R, QuadOrder(12, 10, 20))
    assert abs(q.weights.sum() - 4 * math.pi * R ** 3 / 3) < 1e-12
    r = np.linalg.norm(q.nodes, axis=1)
    assert np.all(r > 0) and np.all(r < R)
    assert np.all(np.hypot(q.nodes[:, 0], q.nodes[:, 1]) > 0)


def test_ball_monomials():
    q = build_ball_quadrature(1.0, QuadOrder(10, 10, 20))
    assert abs(q.integrate(np.ones(q.size)) - 4 * math.pi / 3) < 1e-13
    assert abs(q.integrate(q.nodes[:, 2] ** 2) - 4 * math.pi / 15) < 1e-13
    assert abs(q.integrate(q.nodes[:, 0] ** 2 * q.nodes[:, 1] ** 2 * q.nodes[:, 2] ** 2) - 4 * math.pi / 945) < 1e-14


def test_first_tm_mode_normalized():
    q = build_ball_quadrature(1.0)
    md = ballmodes.make_mode(ballmodes.Family.TM, 1, 0)
    E = ballmodes.field_values(md, q.nodes)
    assert abs(q.integrate(np.einsum("qi,qi->q", E, E)) - 1.0) < 1e-9


def test_sphere_surface():
    R = 1.3
    s = build_sphere_surface(R, QuadOrder(4, 24, 48))
    assert abs(s.area - 4 * math.pi * R ** 2) < 1e-12
    assert np.max(np.abs(np.linalg.norm(s.normals, axis=1) - 1)) < 1e-13
    assert np.all(s.mean_curvature == 2.0 / R)
    xn = np.einsum("si,si->s", s.nodes, s.normals)
    assert abs(s.integrate(xn) - 4 * math.pi * R ** 3) < 1e-11


def test_identity_map_reproduces_surface():
    s = build_sphere_surface(1.0, QuadOrder(4, 16, 32))
    m = map_surface(Identity(), s)
    assert np.array_equal(m.nodes, s.nodes)
    assert np.max(np.abs(m.weights - s.weights)) < 1e-14
    assert np.max(np.abs(m.normals - s.normals)) < 1e-14


@pytest.mark.parametrize("eps", [-0.1, 0.05, 0.2])
def test_dilation_surface(eps):
    s = build_sphere_surface(1.0, QuadOrder(4, 16, 32))
    m = map_surface(Dilation(eps), s)
    assert abs(m.area - (1 + eps) ** 2 * 4 * math.pi) < 1e-12
    assert np.max(np.abs(m.mean_curvature - 2 / (1 + eps))) < 1e-6


def test_translation_keeps_geometry():
    s = build_sphere_surface(1.0, QuadOrder(4, 16, 32))
    m = map_surface(Translation([0.3, 0.1, -0.2]), s)
    assert np.allclose(m.normals, s.normals, atol=1e-14)
    assert np.max(np.abs(m.mean_curvature - 2.0)) < 1e-6


def test_ellipsoid_curvature_and_area():
    a, b, c = 1.3, 0.9, 0.7
    s = build_sphere_surface(1.0, QuadOrder(4, 64, 128))
    m = map_surface(Linear(np.diag([a, b, c])), s)
    # Gauss-Bonnet style check: mean curvature from the implicit-surface formula
    x = m.nodes
    g = np.stack([x[:, 0] / a ** 2, x[:, 1] / b ** 2, x[:, 2] / c ** 2], 1)
    ng = np.linalg.norm(g, axis=1)
    hess = np.array([1 / a ** 2, 1 / b ** 2, 1 / c ** 2])
    H = (np.einsum("si,i->s", g ** 2, hess).__neg__() / ng ** 2 + hess.sum()) / ng
    assert np.max(np.abs(m.mean_curvature - H)) < 1e-6
    assert np.allclose(m.normals, g / ng[:, None], atol=1e-13)
    # Knud Thomsen is approximate; compare with a fine sphere parametrization instead
    fine = map_surface(Linear(np.diag([a, b, c])), build_sphere_surface(1.0, QuadOrder(4, 128, 256)))
    assert abs(m.area - fine.area) < 1e-9 * fine.area


def test_volume_perimeter_functionals():
    q = build_ball_quadrature(1.0, QuadOrder(8, 8, 16))
    s = build_sphere_surface(1.0, QuadOrder(4, 16, 32))
    assert abs(geomquad.volume(Identity(), q) - 4 * math.pi / 3) < 1e-13
    assert abs(geomquad.perimeter(Identity(), s) - 4 * math.pi) < 1e-12
    assert abs(geomquad.volume(Dilation(0.1), q) - 1.1 ** 3 * 4 * math.pi / 3) < 1e-12
    shear = Displacement(lab.velocity_field("shear"), 0.3)
    assert abs(geomquad.volume(shear, q) - 4 * math.pi / 3) < 1e-13


@given(st.lists(st.floats(-0.3, 0.3), min_size=9, max_size=9))
def test_linear_volume_property(entries):
    A = np.eye(3) + np.array(entries).reshape(3, 3)
    d = np.linalg.det(A)
    if d < 0.2:
        return
    q = build_ball_quadrature(1.0, QuadOrder(6, 6, 12))
    assert abs(geomquad.volume(Linear(A), q) - d * 4 * math.pi / 3) < 1e-12


def test_degenerate_map_rejected():
    s = build_sphere_surface(1.0, QuadOrder(4, 8, 16))

    class Flat(Identity):
        family = "flat"

        def jacobian(self, x):
            J = np.zeros(np.shape(x) + (3,))
            J[..., 0, 0] = J[..., 1, 1] = 1.0
            return J

    with pytest.raises(DegenerateJacobian):
        map_surface(Flat(), s)


def test_quadrature_doubling_gate():
    md = ballmodes.make_mode(ballmodes.Family.TE, 2, 1)
    vals = []
    for order in (QuadOrder(), QuadOrder().doubled()):
        q = build_ball_quadrature(1.0, order)
        E = ballmodes.field_values(md, q.nodes)
        vals.append(q.integrate(np.einsum("qi,qi->q", E, E)))
    assert abs(vals[0] - vals[1]) < 1e-9
