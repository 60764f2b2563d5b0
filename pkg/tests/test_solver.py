import json
import math
from dataclasses import replace

import numpy as np
import pytest

from cavityshape import ballmodes, solver
from cavityshape.ballmodes import Family
from cavityshape.errors import FactorizationFailure
from cavityshape.geomquad import QuadOrder
from cavityshape.solver import SolverConfig, assemble, build_basis, eigenvalues_of_shape, solve
from cavityshape.transplant import Dilation, Identity

CFG = SolverConfig(n_max=2, radial_count=2, tau=1.37, auto_shift=False)


@pytest.fixture(scope="module")
def basis():
    return build_basis(1.0, 2, 2)


def test_identity_forms_are_exact(basis):
    pair = assemble(Identity(), basis, tau=1.5)
    diag = [md.eigenvalue(1.5) for md in basis.modes]
    assert np.max(np.abs(pair.B - np.eye(basis.dimension))) < 1e-12
    assert np.max(np.abs(pair.A - np.diag(diag))) < 1e-10 * max(diag)


def test_identity_spectrum_is_union():
    rep = eigenvalues_of_shape(Identity(), CFG)
    maxwell = [e.eigenvalue for e in ballmodes.maxwell_spectrum(1.0, 12, 50)]
    dirichlet = [1.37 * e.eigenvalue for e in ballmodes.helmholtz_modes(1.0, 12, 30)]
    for lam, lab in zip(rep.eigenvalues, rep.labels):
        ref = maxwell if lab == solver.MAXWELL else dirichlet
        assert min(abs(lam - r) for r in ref) < 1e-9 * lam
    assert rep.labels[0] == solver.MAXWELL and abs(rep.eigenvalues[0] - 7.527929578) < 1e-8


@pytest.mark.parametrize("tau", [0.5, 1.0, 2.0, 5.0])
def test_penalty_scales_helmholtz_branch(tau):
    rep = eigenvalues_of_shape(Identity(), replace(CFG, tau=tau))
    hel = [v for v, l in zip(rep.eigenvalues, rep.labels) if l == solver.HELMHOLTZ]
    if tau * math.pi ** 2 < rep.certified_cutoff:
        assert abs(hel[0] - tau * math.pi ** 2) < 1e-9 * tau * math.pi ** 2
    else:
        assert not hel
    mx = [v for v, l in zip(rep.eigenvalues, rep.labels) if l == solver.MAXWELL]
    assert abs(mx[0] - 7.527929578) < 1e-8


def test_auto_shift_moves_resonant_tau():
    rep = eigenvalues_of_shape(Identity(), replace(CFG, tau=1.0, auto_shift=True))
    assert rep.shifts >= 1 and rep.tau == pytest.approx(1.37 ** rep.shifts)
    assert not solver.find_resonances(eigenvalues_of_shape(Identity(), replace(CFG, tau=rep.tau, auto_shift=False),
                                                           keep=True).solution, 1e-3,
                                      upto=rep.certified_cutoff)


def test_residuals_and_orthonormality():
    phi = Dilation(0.07)
    rep = eigenvalues_of_shape(phi, CFG, keep=True)
    sol, pair = rep.solution, rep.pair
    X = sol.eigenvectors
    assert np.max(np.abs(X.T @ pair.B @ X - np.eye(X.shape[1]))) < 1e-10
    R = pair.A @ X - pair.B @ X * sol.eigenvalues
    rel = np.linalg.norm(R, axis=0) / (np.abs(sol.eigenvalues) * np.linalg.norm(X, axis=0))
    assert np.max(rel) < 1e-8 and np.max(sol.residuals) < 1e-8


def test_dilation_scaling(basis):
    eps = 0.1
    p0 = assemble(Identity(), basis)
    p1 = assemble(Dilation(eps), basis)
    assert np.max(np.abs(p1.B - (1 + eps) * p0.B)) < 1e-12
    assert np.max(np.abs(p1.A_curl - p0.A_curl / (1 + eps))) < 1e-10 * np.max(np.abs(p0.A_curl))
    r0 = eigenvalues_of_shape(Identity(), CFG)
    r1 = eigenvalues_of_shape(Dilation(eps), CFG)
    m0 = [v for v, l in zip(r0.eigenvalues, r0.labels) if l == solver.MAXWELL]
    m1 = [v for v, l in zip(r1.eigenvalues, r1.labels) if l == solver.MAXWELL]
    n = min(len(m0), len(m1))
    assert np.allclose(np.array(m1[:n]) * (1 + eps) ** 2, m0[:n], rtol=1e-10)


def test_factorization_failure(basis):
    pair = assemble(Identity(), basis)
    with pytest.raises(FactorizationFailure):
        solve(replace(pair, B=-pair.B))


def test_invalid_tau(basis):
    with pytest.raises(ValueError):
        assemble(Identity(), basis, tau=0.0)


def test_report_json():
    rep = eigenvalues_of_shape(Dilation(0.02), CFG)
    d = json.loads(json.dumps(rep.to_dict()))
    assert d["shape"] == "dilation(eps=0.02)"
    assert d["eigenpairs"] and {"lambda", "label", "div_indicator", "residual"} <= set(d["eigenpairs"][0])
    assert all(p["lambda"] < d["certified_cutoff"] for p in d["eigenpairs"])


def test_config_round_trip():
    cfg = SolverConfig(n_max=4, tau=2.5, quad=QuadOrder(20, 12, 24), window=7)
    assert SolverConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg


def test_clusters():
    assert solver.clusters([1.0, 1.0 + 1e-9, 2.0, 3.0, 3.0], 1e-6) == [[0, 1], [2], [3, 4]]


def test_window():
    rep = eigenvalues_of_shape(Identity(), replace(CFG, window=5))
    assert len(rep.eigenvalues) == 5
