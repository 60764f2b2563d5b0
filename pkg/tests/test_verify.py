import math
from dataclasses import replace

import numpy as np
import pytest

from cavityshape import ballmodes, lab, solver, verify
from cavityshape.ballmodes import Family
from cavityshape.errors import IncompleteEigenspace, UnmatchedEigenvalue
from cavityshape.geomquad import QuadOrder, build_sphere_surface, map_surface
from cavityshape.transplant import Displacement, Identity

SURF = build_sphere_surface(1.0, QuadOrder(4, 32, 64))


@pytest.mark.parametrize("fam,n,m,s", [(Family.TM, 1, 0, 1), (Family.TE, 2, 1, 1), (Family.TM, 3, -2, 2)])
def test_companion_value_is_two(fam, n, m, s):
    md = ballmodes.make_mode(fam, n, m, s)
    assert abs(verify.companion_integral(md, SURF) - 2.0) < 1e-10
    assert verify.companion_residual(md, surface=SURF) < 1e-10
    assert verify.rellich_pohozaev_residual(md, SURF) < 1e-10


def test_quadrature_doubling_converged():
    md = ballmodes.make_mode(Family.TE, 3, 2, 1)
    fine = build_sphere_surface(1.0, QuadOrder(4, 64, 128))
    assert abs(verify.companion_integral(md, SURF) - verify.companion_integral(md, fine)) < 1e-12


def test_criticality_complete_space():
    sp = ballmodes.eigenspace(Family.TM, 1)
    res = verify.criticality_residual(sp, SURF)
    assert res.residual < 1e-10
    assert abs(res.best_c - verify.criticality_constant(sp.eigenvalue, 3, 1.0)) < 1e-8 * abs(res.best_c)


def test_incomplete_space_refused():
    sp = ballmodes.eigenspace(Family.TM, 1)
    with pytest.raises(IncompleteEigenspace):
        verify.criticality_residual(sp.modes[:2], SURF)
    res = verify.criticality_residual(sp.modes[:1], SURF, require_complete=False)
    assert res.residual > 0.01
    with pytest.raises(IncompleteEigenspace):
        verify.criticality_residual([sp.modes[0], ballmodes.make_mode(Family.TE, 1, 0)], SURF)


def test_rebasis_invariance(rng):
    sp = ballmodes.eigenspace(Family.TE, 2)
    E, C, _ = ballmodes.mode_arrays(sp.modes, SURF.nodes)
    O = np.linalg.qr(rng.standard_normal((5, 5)))[0]
    a = verify.criticality_from_arrays(E, C, sp.eigenvalue, SURF)
    b = verify.criticality_from_arrays(np.einsum("ab,bsi->asi", O, E), np.einsum("ab,bsi->asi", O, C),
                                       sp.eigenvalue, SURF)
    assert np.max(np.abs(a.values - b.values)) < 1e-10 * sp.eigenvalue


def test_volume_and_perimeter_agree_on_sphere():
    R = 1.5
    sp = ballmodes.eigenspace(Family.TM, 2, R=R)
    s = build_sphere_surface(R, QuadOrder(4, 32, 64))
    v = verify.criticality_residual(sp, s, verify.Constraint.VOLUME)
    p = verify.criticality_residual(sp, s, verify.Constraint.PERIMETER)
    assert abs(v.residual - p.residual) < 1e-12
    assert abs(p.best_c / v.best_c - R / 2) < 1e-12


def test_radial_sums():
    for fam, n in [(Family.TM, 1), (Family.TE, 2), (Family.TM, 3)]:
        dE, dC = verify.radial_sum_deviation(ballmodes.eigenspace(fam, n), 0.6, 200, 3)
        assert dE < 1e-12 and dC < 1e-12


def test_boundary_residuals():
    tang, ncurl, div = verify.boundary_condition_residuals(ballmodes.make_mode(Family.TM, 2, 1), SURF)
    assert tang < 1e-12 and ncurl < 1e-12 and div < 1e-10
    _, _, div = verify.boundary_condition_residuals(ballmodes.make_mode(Family.GRAD, 1, 0), SURF)
    assert div > 1.0


def test_analytic_multiplicity():
    sp = ballmodes.maxwell_spectrum(1.0, 12, 3)
    assert verify.analytic_multiplicity(sp[0].eigenvalue) == 3
    assert verify.analytic_multiplicity(sp[1].eigenvalue) == 5
    assert verify.analytic_multiplicity(8.0) == 0


CFG = solver.SolverConfig(n_max=2, radial_count=2, tau=1.37, auto_shift=False)


def test_discrete_trace_on_sheared_ball():
    phi = Displacement(lab.velocity_field("shear"), 0.05)
    rep = solver.eigenvalues_of_shape(phi, CFG, keep=True)
    surf = map_surface(phi, build_sphere_surface(1.0, QuadOrder(4, 16, 32)))
    idx = rep.labels.index(solver.MAXWELL)
    tang, ncurl, _ = verify.discrete_boundary_residuals(rep, idx, phi, surf)
    assert tang < 1e-5 and ncurl < 1e-5 * rep.eigenvalues[idx]


def test_union_check():
    rep = solver.eigenvalues_of_shape(Identity(), CFG)
    u = verify.union_structure_check(rep)
    assert not u.unmatched and u.mu_monotone and u.tau == 1.37
    bad = replace(rep, eigenvalues=[5.0] + rep.eigenvalues[1:])
    with pytest.raises(UnmatchedEigenvalue):
        verify.union_structure_check(bad)
    assert verify.union_structure_check(bad, strict=False).unmatched == [5.0]
