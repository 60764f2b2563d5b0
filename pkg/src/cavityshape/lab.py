"""One-parameter perturbation sweeps and branch tracking."""
from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import ballmodes, shapederiv, solver
from .errors import BranchAmbiguity, IoFailure
from .geomquad import QuadOrder, build_sphere_surface
from .transplant import ShapeFamily, VectorField, field_from_dict

DEFAULT_GRID = (-0.04, -0.02, -0.01, -0.005, -0.002, 0.0, 0.002, 0.005, 0.01, 0.02, 0.04)
CLUSTER_GAP = 1e-6
FIT_POINTS = 4
FIT_DEGREE = 3

# named velocity fields; "mixed" has no parity symmetry, so Lambda_{F,1}(eps) is not even
FIELD_PRESETS = {
    "identity": {"kind": "identity"},
    "shear": {"kind": "polynomial", "terms": [[[1.0, 0, 1, 0]], [], []]},
    "quadratic": {"kind": "polynomial", "terms": [[[1.0, 2, 0, 0]], [[1.0, 0, 2, 0]], [[-0.5, 0, 0, 2]]]},
    "mixed": {"kind": "polynomial", "terms": [[[1.0, 1, 0, 0], [0.5, 0, 2, 0]], [[0.3, 1, 0, 1]],
                                              [[0.2, 0, 0, 1], [0.4, 2, 0, 0]]]},
}


def velocity_field(spec) -> VectorField:
    """A VectorField from a preset name or a field dictionary."""
    if isinstance(spec, VectorField):
        return spec
    if isinstance(spec, str):
        if spec not in FIELD_PRESETS:
            raise ValueError(f"unknown velocity preset '{spec}'")
        spec = FIELD_PRESETS[spec]
    return field_from_dict(spec)


def make_family(kind: str, velocity="shear", radius: float = 1.0, t=(1.0, 0.0, 0.0)) -> ShapeFamily:
    if kind == "dilation":
        return ShapeFamily.dilation(radius)
    if kind == "translation":
        return ShapeFamily.translation(t, radius)
    if kind == "displacement":
        return ShapeFamily.displacement(velocity_field(velocity), radius)
    raise ValueError(f"unknown family '{kind}'")


@dataclass
class SweepResult:
    family: dict
    eps: List[float]
    eigenvalues: List[List[float]]          # per eps, reported eigenvalues
    labels: List[List[str]]
    branches: List[List[float]]             # m x len(eps)
    cluster_index: int
    eigenvalue0: float
    multiplicity: int
    tau: float
    right_slopes: List[float] = field(default_factory=list)
    left_slopes: List[float] = field(default_factory=list)
    predicted_slopes: List[float] = field(default_factory=list)
    hadamard: List[List[float]] = field(default_factory=list)
    ambiguities: List[Tuple[float, int]] = field(default_factory=list)
    solver: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "family": self.family, "eps": self.eps, "eigenvalues": self.eigenvalues,
            "labels": self.labels, "branches": self.branches, "cluster_index": self.cluster_index,
            "eigenvalue0": self.eigenvalue0, "multiplicity": self.multiplicity, "tau": self.tau,
            "right_slopes": self.right_slopes, "left_slopes": self.left_slopes,
            "predicted_slopes": self.predicted_slopes, "hadamard": self.hadamard,
            "ambiguities": [list(a) for a in self.ambiguities], "solver": self.solver,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SweepResult":
        d = dict(d)
        d["ambiguities"] = [tuple(a) for a in d.get("ambiguities", [])]
        return cls(**d)

    def symmetric_sums(self) -> List[float]:
        """Lambda_{F,1} of the tracked cluster at each grid point."""
        return [float(sum(col)) for col in zip(*self.branches)]


def select_cluster(values: Sequence[float], labels: Sequence[str], index: int,
                   gap: float = CLUSTER_GAP) -> List[int]:
    idx = [i for i, l in enumerate(labels) if l == solver.MAXWELL]
    vals = [values[i] for i in idx]
    groups = solver.clusters(vals, gap)
    if index >= len(groups):
        raise ValueError(f"only {len(groups)} Maxwell clusters available")
    return [idx[i] for i in groups[index]]


def fit_slope(eps: Sequence[float], vals: Sequence[float], g0: float,
              points: int = FIT_POINTS, degree: int = FIT_DEGREE) -> float:
    """One-sided slope at 0 from a least-squares polynomial anchored at g(0).

    Uses the ``points`` grid values nearest to 0 on one side.
    """
    e = np.asarray(eps, float)
    v = np.asarray(vals, float)
    order = np.argsort(np.abs(e))[:points]
    e, v = e[order], v[order]
    deg = max(1, min(degree, e.size))
    V = np.stack([e ** p for p in range(1, deg + 1)], axis=1)
    coef, *_ = np.linalg.lstsq(V, v - g0, rcond=None)
    return float(coef[0])


def _solve_one(args):
    family_d, eps, cfg_d = args
    fam = ShapeFamily.from_dict(family_d)
    cfg = solver.SolverConfig.from_dict(cfg_d)
    rep = solver.eigenvalues_of_shape(fam.at(eps), cfg)
    return rep.eigenvalues, rep.labels


def _track(eps_side, cols, start_vals, lam0, m, ambiguities):
    """Nearest-value continuation along one side of the grid."""
    out = [list(start_vals)]
    hist_eps = [0.0]
    for e, (vals, labels) in zip(eps_side, cols):
        cand = np.array([v for v, l in zip(vals, labels) if l == solver.MAXWELL])
        prev = np.array(out[-1])
        if len(out) >= 2:
            pred = prev + (prev - np.array(out[-2])) / (hist_eps[-1] - hist_eps[-2]) * (e - hist_eps[-1])
        else:
            pred = prev
        if cand.size < m:
            raise BranchAmbiguity(f"only {cand.size} Maxwell candidates at eps={e}")
        near = np.argsort(np.abs(cand - pred.mean()))[: m + 2]
        sub = cand[near]
        cost = np.abs(sub[None, :] - pred[:, None])
        rows, cols_ = linear_sum_assignment(cost)
        new = np.empty(m)
        new[rows] = sub[cols_]
        if len(out) < 2:
            new = np.sort(new)
        used = set(cols_.tolist())
        for i in range(m):
            e1 = abs(new[i] - pred[i])
            for j in range(sub.size):
                if j in used:
                    continue
                if abs(sub[j] - pred[i]) <= 10.0 * e1 + 1e-9 * lam0:
                    ambiguities.append((float(e), int(i)))
                    break
        out.append(new.tolist())
        hist_eps.append(e)
    return out[1:]


def predicted_hadamard(family: ShapeFamily, lam0: float, R: float,
                       surface_order=QuadOrder(48, 48, 96)) -> shapederiv.HadamardMatrix:
    """Rellich-Nagy matrix of the analytic ball eigenspace at lam0."""
    for e in ballmodes.maxwell_spectrum(R, 12, 60, strict=False):
        if abs(e.eigenvalue - lam0) <= 1e-6 * lam0:
            space = ballmodes.eigenspace_of(e, R)
            surf = build_sphere_surface(R, surface_order)
            return shapederiv.ball_hadamard(space, surf, family.velocity)
    raise ValueError(f"no analytic ball eigenvalue near {lam0}")


def sweep(family: ShapeFamily, cluster: int = 0, eps_grid: Sequence[float] = DEFAULT_GRID,
          config: solver.SolverConfig = solver.SolverConfig(), workers: int = 1,
          strict: bool = False) -> SweepResult:
    grid = sorted(float(e) for e in eps_grid)
    if 0.0 not in grid:
        raise ValueError("the eps grid must contain 0")
    if len(set(grid)) != len(grid):
        raise ValueError("duplicate eps values")
    # the penalty is fixed at its eps = 0 value so branches stay smooth in eps
    base = solver.eigenvalues_of_shape(family.at(0.0), config)
    cfg = replace(config, tau=base.tau, auto_shift=False)
    sel = select_cluster(base.eigenvalues, base.labels, cluster)
    lam0 = float(np.mean([base.eigenvalues[i] for i in sel]))
    m = len(sel)
    others = [e for e in grid if e != 0.0]
    jobs = [(family.to_dict(), e, cfg.to_dict()) for e in others]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_solve_one, jobs))
    else:
        results = [_solve_one(j) for j in jobs]
    by_eps = dict(zip(others, results))
    by_eps[0.0] = (base.eigenvalues, base.labels)
    start = sorted(base.eigenvalues[i] for i in sel)
    ambiguities: List[Tuple[float, int]] = []
    right_eps = [e for e in grid if e > 0]
    left_eps = [e for e in reversed(grid) if e < 0]
    right = _track(right_eps, [by_eps[e] for e in right_eps], start, lam0, m, ambiguities)
    left = _track(left_eps, [by_eps[e] for e in left_eps], start, lam0, m, ambiguities)
    if ambiguities and strict:
        raise BranchAmbiguity(f"ambiguous branch matches at {ambiguities}")
    table = {0.0: start}
    table.update(zip(right_eps, right))
    table.update(zip(left_eps, left))
    branches = [[table[e][i] for e in grid] for i in range(m)]
    rs, ls = [], []
    for i in range(m):
        if right_eps:
            rs.append(fit_slope(right_eps, [table[e][i] for e in right_eps], start[i]))
        if left_eps:
            ls.append(fit_slope(left_eps, [table[e][i] for e in left_eps], start[i]))
    M = predicted_hadamard(family, lam0, config.radius)
    return SweepResult(
        family=family.to_dict(), eps=grid,
        eigenvalues=[list(map(float, by_eps[e][0])) for e in grid],
        labels=[list(by_eps[e][1]) for e in grid],
        branches=branches, cluster_index=cluster, eigenvalue0=lam0, multiplicity=m,
        tau=cfg.tau, right_slopes=sorted(rs), left_slopes=sorted(ls),
        predicted_slopes=shapederiv.nagy_slopes(M).tolist(), hadamard=M.M.tolist(),
        ambiguities=ambiguities, solver=cfg.to_dict())


def central_difference_order(lam_plus: Sequence[float], lam_minus: Sequence[float],
                             steps: Sequence[float], exact: float):
    """Errors of (f(h) - f(-h))/2h against ``exact`` and the observed orders."""
    errs = [abs((p - q) / (2 * h) - exact) for p, q, h in zip(lam_plus, lam_minus, steps)]
    orders = [math.log(errs[i] / errs[i + 1]) / math.log(steps[i] / steps[i + 1])
              for i in range(len(errs) - 1)]
    return errs, orders


# --------------------------------------------------------------------------
# export


def to_csv(result: SweepResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if result.multiplicity == 0 or not result.branches:
        w.writerow(["epsilon"])
        for e in result.eps:
            w.writerow([repr(e)])
        return buf.getvalue()
    w.writerow(["epsilon", "branch_id", "lambda", "label"])
    for j, e in enumerate(result.eps):
        for i, br in enumerate(result.branches):
            w.writerow([repr(e), i, repr(br[j]), solver.MAXWELL])
    return buf.getvalue()


def to_json(result: SweepResult) -> str:
    return json.dumps(result.to_dict(), indent=2, sort_keys=True) + "\n"


def from_json(text: str) -> SweepResult:
    return SweepResult.from_dict(json.loads(text))


def _fmt(v: float) -> str:
    return f"{v:.3f}"


def to_svg(result: SweepResult, width: int = 1000, height: int = 700) -> str:
    """Branch diagram with slope tangents at 0 (deterministic output)."""
    pad = 70
    eps = np.asarray(result.eps, float)
    br = np.asarray(result.branches, float) if result.branches else np.zeros((0, eps.size))
    lo = float(br.min()) if br.size else 0.0
    hi = float(br.max()) if br.size else 1.0
    if hi - lo < 1e-12:
        lo, hi = lo - 0.5, hi + 0.5
    elo, ehi = (float(eps.min()), float(eps.max())) if eps.size > 1 else (-1.0, 1.0)
    if ehi - elo < 1e-15:
        elo, ehi = elo - 1.0, ehi + 1.0

    def X(e):
        return pad + (e - elo) / (ehi - elo) * (width - 2 * pad)

    def Y(v):
        return height - pad - (v - lo) / (hi - lo) * (height - 2 * pad)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {width} {height}" '
           f'width="{width}" height="{height}">',
           f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
           f'<line x1="{_fmt(X(0.0))}" y1="{pad}" x2="{_fmt(X(0.0))}" y2="{height - pad}" '
           'stroke="#bbbbbb" stroke-dasharray="4,4"/>',
           f'<text x="{width / 2:.1f}" y="{height - 20}" text-anchor="middle" font-size="16">epsilon</text>',
           f'<text x="20" y="{height / 2:.1f}" font-size="16" transform="rotate(-90 20 {height / 2:.1f})" '
           'text-anchor="middle">lambda</text>']
    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2",
              "#7f7f7f", "#bcbd22", "#17becf", "#000000"]
    for i, row in enumerate(br):
        pts = " ".join(f"{_fmt(X(e))},{_fmt(Y(v))}" for e, v in zip(eps, row))
        out.append(f'<polyline fill="none" stroke="{colors[i % len(colors)]}" stroke-width="2" points="{pts}"/>')
    span = 0.25 * (ehi - elo)
    for s in result.predicted_slopes:
        out.append(f'<line x1="{_fmt(X(-span))}" y1="{_fmt(Y(result.eigenvalue0 - s * span))}" '
                   f'x2="{_fmt(X(span))}" y2="{_fmt(Y(result.eigenvalue0 + s * span))}" '
                   'stroke="#444444" stroke-width="1" stroke-dasharray="6,3"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def export(result: SweepResult, fmt: str, path) -> str:
    writers = {"csv": to_csv, "json": to_json, "svg": to_svg}
    if fmt not in writers:
        raise ValueError(f"unknown export format '{fmt}'")
    text = writers[fmt](result)
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc
    return str(path)


def import_json(path) -> SweepResult:
    try:
        with open(path, encoding="utf-8") as fh:
            return from_json(fh.read())
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
