import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.spatial.transform import Rotation

from cavityshape import ballmodes, lab, shapederiv
from cavityshape.ballmodes import Family
from cavityshape.errors import GramNotIdentity
from cavityshape.geomquad import QuadOrder, build_sphere_surface
from cavityshape.transplant import IdentityField, PolynomialField, VectorField

SURF = build_sphere_surface(1.0, QuadOrder(4, 32, 64))
floats = st.floats(-5.0, 5.0, allow_nan=False)


@pytest.fixture(scope="module")
def tm1():
    return ballmodes.eigenspace(Family.TM, 1)


def test_symmetric_examples():
    assert shapederiv.elementary_symmetric([1, 2, 3], 1) == 6
    assert shapederiv.elementary_symmetric([1, 2, 3], 2) == 11
    assert shapederiv.elementary_symmetric([1, 2, 3], 3) == 6
    assert shapederiv.hat_symmetric([1, 2, 3], 3) == 24
    with pytest.raises(ValueError):
        shapederiv.elementary_symmetric([1, 2], 3)


@given(st.lists(floats, min_size=1, max_size=7), st.data())
def test_symmetric_matches_brute_force(values, data):
    s = data.draw(st.integers(1, len(values)))
    bf = shapederiv.brute_force_symmetric(values, s)
    assert abs(shapederiv.elementary_symmetric(values, s) - bf) < 1e-9 * max(1.0, abs(bf))


@given(st.lists(floats, min_size=1, max_size=6))
def test_hat_conversion_round_trip(values):
    sf = shapederiv.SymmetricFunctionSet.of(values)
    m = len(values)
    scale = max(1.0, max(abs(v) for v in values) + 1) ** m * 2 ** m
    for s in range(1, m + 1):
        assert abs(shapederiv.symmetric_from_hat(sf.hat, m, s) - sf.lam[s - 1]) < 1e-11 * scale
        assert abs(shapederiv.hat_from_symmetric(sf.lam, m, s) - sf.hat[s - 1]) < 1e-11 * scale


def test_dilation_matrix(tm1):
    lam = tm1.eigenvalue
    M = shapederiv.ball_hadamard(tm1, SURF, IdentityField())
    assert np.max(np.abs(M.M + 2 * lam * np.eye(3))) < 1e-9 * lam
    assert abs(shapederiv.symmetric_function_derivative(lam, 3, 1, M) + 6 * lam) < 1e-8 * lam
    assert abs(shapederiv.symmetric_function_derivative(lam, 3, 3, M) + 6 * lam ** 3) < 1e-8 * lam ** 3
    assert np.allclose(shapederiv.nagy_slopes(M), -2 * lam, rtol=1e-9)


def test_trace_consistency(tm1):
    M = shapederiv.ball_hadamard(tm1, SURF, lab.velocity_field("mixed"))
    lam = tm1.eigenvalue
    for s in (1, 2, 3):
        d = shapederiv.symmetric_function_derivative(lam, 3, s, M)
        assert abs(d - math.comb(2, s - 1) * lam ** (s - 1) * np.trace(M.M)) < 1e-12 * abs(d) + 1e-12
    assert abs(np.sum(shapederiv.nagy_slopes(M)) - np.trace(M.M)) < 1e-10 * lam


def test_translation_and_zero_velocity(tm1):
    lam = tm1.eigenvalue
    M = shapederiv.ball_hadamard(tm1, SURF, PolynomialField.constant([0.3, -0.2, 0.5]))
    assert np.max(np.abs(M.M)) < 1e-9 * lam
    M = shapederiv.ball_hadamard(tm1, SURF, np.zeros(3))
    assert np.all(M.M == 0.0)


class _Rotated(VectorField):
    def __init__(self, base, Q):
        self.base, self.Q = base, Q

    def __call__(self, x):
        return self.base(np.asarray(x) @ self.Q) @ self.Q.T


@given(st.lists(st.floats(-3.0, 3.0), min_size=3, max_size=3))
def test_rotation_equivariance(rv):
    sp = ballmodes.eigenspace(Family.TE, 1)
    Q = Rotation.from_rotvec(rv).as_matrix()
    v = lab.velocity_field("mixed")
    a = shapederiv.nagy_slopes(shapederiv.ball_hadamard(sp, SURF, v))
    b = shapederiv.nagy_slopes(shapederiv.ball_hadamard(sp, SURF, _Rotated(v, Q)))
    assert np.max(np.abs(a - b)) < 1e-8 * sp.eigenvalue


def test_conjugation_invariance(tm1, rng):
    E, C, _ = ballmodes.mode_arrays(tm1.modes, SURF.nodes)
    O = np.linalg.qr(rng.standard_normal((3, 3)))[0]
    v = lab.velocity_field("shear")
    M1 = shapederiv.hadamard_matrix(E, C, SURF, tm1.eigenvalue, v)
    M2 = shapederiv.hadamard_matrix(np.einsum("ab,bsi->asi", O, E), np.einsum("ab,bsi->asi", O, C),
                                    SURF, tm1.eigenvalue, v)
    assert np.max(np.abs(M2.M - O @ M1.M @ O.T)) < 1e-10 * tm1.eigenvalue
    assert np.allclose(shapederiv.nagy_slopes(M1), shapederiv.nagy_slopes(M2), atol=1e-9 * tm1.eigenvalue)


def test_gram_guard(tm1):
    E, C, _ = ballmodes.mode_arrays(tm1.modes, SURF.nodes)
    with pytest.raises(GramNotIdentity):
        shapederiv.hadamard_matrix(E, C, SURF, tm1.eigenvalue, IdentityField(), gram=2 * np.eye(3))


def test_geometric_derivatives():
    assert abs(shapederiv.volume_derivative(IdentityField(), SURF) - 4 * math.pi) < 1e-12
    assert abs(shapederiv.perimeter_derivative(IdentityField(), SURF) - 8 * math.pi) < 1e-11
    t = PolynomialField.constant([1.0, 2.0, 3.0])
    assert abs(shapederiv.volume_derivative(t, SURF)) < 1e-12
    assert abs(shapederiv.perimeter_derivative(t, SURF)) < 1e-12


def test_report_contents(tm1):
    rep = shapederiv.shape_derivative_report(shapederiv.ball_hadamard(tm1, SURF, IdentityField()))
    assert rep["multiplicity"] == 3 and len(rep["slopes"]) == 3
    assert len(rep["symmetric_function_derivatives"]) == 3
