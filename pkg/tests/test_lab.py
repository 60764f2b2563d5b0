import csv
import io
import math

import numpy as np
import pytest

from cavityshape import lab, solver
from cavityshape.errors import BranchAmbiguity, IoFailure

CFG = solver.SolverConfig(n_max=2, radial_count=2, tau=1.37, auto_shift=False)
GRID = (-0.01, -0.005, -0.002, 0.0, 0.002, 0.005, 0.01)


@pytest.fixture(scope="module")
def dilation_sweep():
    return lab.sweep(lab.make_family("dilation"), 0, GRID, CFG)


@pytest.fixture(scope="module")
def shear_sweep():
    return lab.sweep(lab.make_family("displacement", "shear"), 0, (-0.02, -0.01, -0.005, 0.0, 0.005, 0.01, 0.02), CFG)


def test_fit_slope_exact_on_cubic():
    e = [0.002, 0.005, 0.01, 0.02, 0.04]
    g = [5 + 2 * x - 3 * x ** 2 + 7 * x ** 3 for x in e]
    assert abs(lab.fit_slope(e, g, 5.0) - 2.0) < 1e-9
    assert abs(lab.fit_slope([-x for x in e], [5 - 2 * x - 3 * x ** 2 - 7 * x ** 3 for x in e], 5.0) - 2.0) < 1e-9


def test_central_difference_order():
    h = [0.04, 0.02, 0.01]
    errs, orders = lab.central_difference_order([math.sin(x) for x in h], [math.sin(-x) for x in h], h, 1.0)
    assert all(abs(o - 2) < 0.01 for o in orders)


def test_select_cluster():
    vals = [1.0, 2.0, 2.0, 2.0, 3.0, 5.0]
    labs = [solver.MAXWELL, solver.MAXWELL, solver.MAXWELL, solver.MAXWELL, solver.HELMHOLTZ, solver.MAXWELL]
    assert lab.select_cluster(vals, labs, 1) == [1, 2, 3]
    assert lab.select_cluster(vals, labs, 2) == [5]
    with pytest.raises(ValueError):
        lab.select_cluster(vals, labs, 3)


def test_grid_validation():
    with pytest.raises(ValueError):
        lab.sweep(lab.make_family("dilation"), 0, (0.01, 0.02), CFG)
    with pytest.raises(ValueError):
        lab.velocity_field("nope")


def test_dilation_branch_law(dilation_sweep):
    r = dilation_sweep
    assert r.multiplicity == 3 and len(r.branches) == 3
    lam0 = r.eigenvalue0
    for br in r.branches:
        for e, v in zip(r.eps, br):
            assert abs(v - lam0 / (1 + e) ** 2) < 1e-9 * lam0
    assert np.allclose(r.predicted_slopes, -2 * lam0, rtol=1e-8)
    assert max(abs(s + 2 * lam0) for s in r.right_slopes + r.left_slopes) < 1e-4 * lam0


def test_shear_slopes(shear_sweep):
    r = shear_sweep
    pred = np.array(r.predicted_slopes)
    bound = (1e-3 + 10 * 0.005 ** 2) * r.eigenvalue0
    assert np.max(np.abs(np.array(r.right_slopes) - pred)) < bound
    assert np.max(np.abs(np.array(r.left_slopes) - pred)) < bound


def test_symmetric_function_smoothness(shear_sweep):
    r = shear_sweep
    eps = np.array(r.eps)
    sums = np.array(r.symmetric_sums())
    resid = sums - np.polyval(np.polyfit(eps, sums, 2), eps)
    assert np.max(np.abs(resid)) < 10 * r.eigenvalue0 * np.max(np.abs(eps)) ** 3


def test_csv_export(dilation_sweep):
    rows = list(csv.reader(io.StringIO(lab.to_csv(dilation_sweep))))
    assert rows[0] == ["epsilon", "branch_id", "lambda", "label"]
    assert len(rows) == 1 + len(GRID) * 3


def test_zero_grid_table():
    r = lab.sweep(lab.make_family("dilation"), 0, (0.0,), CFG)
    rows = list(csv.reader(io.StringIO(lab.to_csv(r))))[1:]
    assert {row[0] for row in rows} == {"0.0"} and len(rows) == r.multiplicity
    assert r.right_slopes == [] and r.left_slopes == []


def test_json_round_trip(dilation_sweep, tmp_path):
    p = tmp_path / "s.json"
    lab.export(dilation_sweep, "json", p)
    back = lab.import_json(p)
    assert back == dilation_sweep
    assert lab.to_json(back) == lab.to_json(dilation_sweep)


def test_svg(dilation_sweep):
    a = lab.to_svg(dilation_sweep)
    assert a == lab.to_svg(lab.from_json(lab.to_json(dilation_sweep)))
    assert 'viewBox="0 0 1000 700"' in a
    assert a.count("<polyline") == 3


def test_export_errors(dilation_sweep, tmp_path):
    with pytest.raises(IoFailure):
        lab.export(dilation_sweep, "csv", tmp_path / "missing" / "x.csv")
    with pytest.raises(IoFailure):
        lab.import_json(tmp_path / "none.json")
    with pytest.raises(ValueError):
        lab.export(dilation_sweep, "png", tmp_path / "x.png")


def test_ambiguity_reported(monkeypatch):
    base = solver.eigenvalues_of_shape(None, CFG)
    lam0 = base.eigenvalues[0]

    def fake(args):
        vals = [lam0, lam0, lam0, lam0 * (1 + 1e-12)] + base.eigenvalues[3:]
        return vals, [solver.MAXWELL] * 4 + base.labels[3:]

    monkeypatch.setattr(lab, "_solve_one", fake)
    r = lab.sweep(lab.make_family("dilation"), 0, (0.0, 0.01), CFG)
    assert r.ambiguities
    with pytest.raises(BranchAmbiguity):
        lab.sweep(lab.make_family("dilation"), 0, (0.0, 0.01), CFG, strict=True)


def test_parallel_matches_serial(dilation_sweep):
    r = lab.sweep(lab.make_family("dilation"), 0, GRID, CFG, workers=2)
    assert r.to_dict() == dilation_sweep.to_dict()
