import math

import numpy as np
import pytest

from cavityshape import ballmodes, specfun
from cavityshape.ballmodes import Family
from cavityshape.errors import CutoffTooLow, DegreeTooLarge
from cavityshape.geomquad import QuadOrder, build_ball_quadrature, build_sphere_surface

H = 1e-4


def _fd_jac(f, x, h=H):
    return np.stack([(f(x + h * e) - f(x - h * e)) / (2 * h) for e in np.eye(3)], axis=-1)


def _fd_curl(f, x, h=H):
    J = _fd_jac(f, x, h)
    return np.stack([J[..., 2, 1] - J[..., 1, 2], J[..., 0, 2] - J[..., 2, 0], J[..., 1, 0] - J[..., 0, 1]], -1)


def _sph(x):
    rho = np.linalg.norm(x, axis=-1)
    return rho, np.arccos(x[..., 2] / rho), np.arctan2(x[..., 1], x[..., 0])


def _interior(rng, n=30, r=0.9):
    x = rng.standard_normal((n, 3))
    return x / np.linalg.norm(x, axis=1)[:, None] * rng.uniform(0.2, r, n)[:, None]


def _lowest_modes(count=20):
    out = []
    for e in ballmodes.maxwell_spectrum(1.0, 12, 10):
        out.extend(ballmodes.eigenspace_of(e).modes)
        if len(out) >= count:
            break
    return out[:count]


def test_first_spectrum_rows():
    sp = ballmodes.maxwell_spectrum(1.0, 12, 10)
    assert sp[0].family is Family.TM and sp[0].n == 1 and sp[0].multiplicity == 3
    assert abs(math.sqrt(sp[0].eigenvalue) - 2.7437072699922693) < 1e-12
    assert sp[1].family is Family.TM and sp[1].n == 2
    assert sp[2].family is Family.TE and sp[2].n == 1
    assert abs(sp[2].eigenvalue - specfun.dimensionless_zeros(specfun.ZeroKind.PSI, 1, 1)[0] ** 2) < 1e-12
    vals = [e.eigenvalue for e in sp]
    assert vals == sorted(vals)


def test_tm_field_matches_curl_curl_of_debye_potential(rng):
    md = ballmodes.make_mode(Family.TM, 1, 0)
    k = md.wavenumber

    def pot(x):
        rho, th, ph = _sph(x)
        return (specfun.real_spherical_harmonic((1, 0), th, ph) * specfun.riccati_bessel(1, k * rho))[..., None] * x / rho[..., None]

    pts = np.array([[0.5, 0.0, 0.0], [0.1, 0.3, 0.4], [-0.2, 0.1, -0.6]])
    want = _fd_curl(lambda p: _fd_curl(pot, p, 1e-3), pts, 1e-3)
    got = ballmodes.field_values(md, pts)
    ratio = np.sum(got * want) / np.sum(want * want)
    assert np.max(np.abs(got - ratio * want)) < 1e-5 * np.max(np.abs(got))


@pytest.mark.parametrize("fam,n,m,s", [(Family.TE, 1, 0, 1), (Family.TE, 3, -2, 2), (Family.TM, 2, 1, 1),
                                       (Family.TM, 4, 4, 2), (Family.GRAD, 0, 0, 1), (Family.GRAD, 3, -1, 2)])
def test_two_routes_agree(rng, fam, n, m, s):
    md = ballmodes.make_mode(fam, n, m, s)
    x = _interior(rng)
    assert np.max(np.abs(ballmodes.evaluate_field(md, x) - ballmodes.field_values(md, x))) < 1e-12
    if fam is not Family.GRAD:
        assert np.max(np.abs(ballmodes.evaluate_magnetic(md, x) - ballmodes.magnetic_profile(md, x))) < 1e-11


def test_gram_of_lowest_modes():
    G = ballmodes.gram_matrix(_lowest_modes(20))
    assert np.max(np.abs(G - np.eye(20))) < 1e-10


def test_boundary_conditions():
    s = build_sphere_surface(1.0, QuadOrder(4, 12, 24))
    for md in _lowest_modes(20):
        E = ballmodes.field_values(md, s.nodes)
        h = ballmodes.magnetic_profile(md, s.nodes)
        assert np.max(np.linalg.norm(np.cross(E, s.normals), axis=1)) < 1e-12
        assert np.max(np.abs(np.einsum("si,si->s", h, s.normals))) < 1e-12


def test_maxwell_equations_pointwise(rng):
    x = _interior(rng, 10)
    for md in _lowest_modes(20)[::3]:
        lam = md.eigenvalue()
        E = lambda p: ballmodes.field_values(md, p)
        div = np.trace(_fd_jac(E, x), axis1=-2, axis2=-1)
        assert np.max(np.abs(div)) < 1e-6 * lam
        curl = ballmodes.curl_values(md, x)
        assert np.max(np.abs(curl - _fd_curl(E, x))) < 1e-6 * lam
        cc = _fd_curl(lambda p: ballmodes.curl_values(md, p), x)
        assert np.max(np.abs(cc - lam * E(x))) < 1e-6 * lam ** 1.5


def test_gradient_modes_are_gradients(rng):
    md = ballmodes.make_mode(Family.GRAD, 2, 1, 1)
    x = _interior(rng, 10)
    assert np.max(np.abs(ballmodes.curl_values(md, x))) < 1e-12
    div = np.trace(_fd_jac(lambda p: ballmodes.field_values(md, p), x), axis1=-2, axis2=-1)
    assert np.max(np.abs(div)) > 1.0


def test_magnetic_normalization():
    q = build_ball_quadrature(1.0)
    for md in _lowest_modes(10):
        h = ballmodes.magnetic_profile(md, q.nodes)
        assert abs(q.integrate(np.einsum("qi,qi->q", h, h)) - 1.0) < 1e-9


def test_jacobians_match_fd(rng):
    x = _interior(rng, 8)
    for md in [ballmodes.make_mode(Family.TM, 2, 1), ballmodes.make_mode(Family.TE, 3, -1, 2),
               ballmodes.make_mode(Family.GRAD, 1, 0)]:
        vals, curls, jac = ballmodes.mode_arrays([md], x, want_jac=True)
        fd = _fd_jac(lambda p: ballmodes.field_values(md, p), x)
        # jac[..., i, j] = d u_j / d x_i
        assert np.max(np.abs(jac[0] - np.swapaxes(fd, -1, -2))) < 1e-6 * md.wavenumber ** 2


def test_axis_and_origin_regular():
    pts = np.array([[0.0, 0.0, 0.0], [0.0, 0.0, 0.5], [0.0, 0.0, -1.0]])
    for md in _lowest_modes(20):
        assert np.all(np.isfinite(ballmodes.field_values(md, pts)))


def test_radius_scaling():
    a = ballmodes.maxwell_spectrum(1.0, 12, 10)
    b = ballmodes.maxwell_spectrum(2.0, 12, 10)
    for x, y in zip(a, b):
        assert abs(y.eigenvalue - x.eigenvalue / 4) < 1e-12 * x.eigenvalue
        assert (x.family, x.n, x.multiplicity) == (y.family, y.n, y.multiplicity)


def test_helmholtz_modes():
    h = ballmodes.helmholtz_modes(1.0, 12, 3)
    assert abs(h[0].eigenvalue - math.pi ** 2) < 1e-12 and h[0].n == 0 and h[0].multiplicity == 1
    assert abs(math.sqrt(h[1].eigenvalue) - 4.493409457909064) < 1e-12 and h[1].multiplicity == 3


def test_spectrum_errors():
    with pytest.raises(CutoffTooLow):
        ballmodes.maxwell_spectrum(1.0, 1, 10)
    assert len(ballmodes.maxwell_spectrum(1.0, 1, 10, strict=False)) < 10
    with pytest.raises(DegreeTooLarge):
        ballmodes.maxwell_spectrum(1.0, 13, 10)
    with pytest.raises(ValueError):
        ballmodes.make_mode(Family.TE, 0, 0)
    with pytest.raises(ValueError):
        ballmodes.make_mode(Family.TM, 2, 3)


def test_spectrum_csv():
    text = ballmodes.spectrum_csv(ballmodes.maxwell_spectrum(1.0, 12, 3))
    lines = text.strip().split("\n")
    assert lines[0] == "lambda,family,n,radial_index,multiplicity"
    assert len(lines) == 4 and lines[1].split(",")[1:] == ["TM", "1", "1", "3"]
