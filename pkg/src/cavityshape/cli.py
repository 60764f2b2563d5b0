"""Command line front end.

Subcommands write artifacts with stable names under ``--out-dir`` and print a
short table.  Exit status: 0 when every configured tolerance is met, 1 when a
check fails, 2 on usage errors, 3 on library errors and 4 on invalid
configuration.  Errors are reported as one JSON object on stdout.
"""
from __future__ import annotations

import argparse
import copy
import hashlib
import json
import os
import sys
from dataclasses import asdict
from pathlib import Path
from typing import Optional

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
import tomli_w

from . import __version__, ballmodes, lab, shapederiv, solver, verify
from .errors import CavityError, ConfigInvalid, IoFailure
from .geomquad import QuadOrder, build_sphere_surface, map_surface
from .transplant import Identity, Linear

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_ERROR, EXIT_CONFIG = 0, 1, 2, 3, 4

# 0 stands for "unset" where TOML has no null
DEFAULTS = {
    "shape": {
        "family": "identity",       # identity | dilation | translation | linear | displacement
        "eps": 0.0,
        "velocity": "shear",        # preset name or {kind = "polynomial", terms = [...]}
        "t": [1.0, 0.0, 0.0],
        "A": [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        "b": [0.0, 0.0, 0.0],
        "radius": 1.0,
    },
    "solver": {
        "n_max": 3,
        "radial_count": 2,
        "grad_n_max": 0,
        "grad_radial_count": 0,
        "tau": 1.0,
        "auto_shift": True,
        "shift_factor": 1.37,
        "max_shifts": 8,
        "resonance_gap": 1e-3,
        "div_threshold": 1e-6,
        "fraction_threshold": 1e-2,
        "window": 0,
        "fd_step": 1e-5,
        "check_quadrature": False,
    },
    "quadrature": {
        "solver": [24, 16, 32],
        "surface": [48, 48, 96],
    },
    "sweep": {
        "family": "displacement",
        "velocity": "shear",
        "cluster": 0,
        "eps": list(lab.DEFAULT_GRID),
        "strict": False,
        "formats": ["csv", "json", "svg"],
    },
    "tolerances": {
        **{k: v for k, v in asdict(verify.Tolerances()).items()},
        "solve_residual": 1e-8,
        "slope": 1e-3,
        "discrete_trace": 1e-5,
        "clusters": 3,
    },
}

SHAPE_ALIASES = {"identity", "dilation", "translation", "linear", "displacement"}


# --------------------------------------------------------------------------
# configuration


def _check_type(key, default, value):
    if key in ("shape.velocity", "sweep.velocity"):
        if isinstance(value, (str, dict)):
            return value
        raise ConfigInvalid(f"{key} must be a preset name or a field table", key)
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigInvalid(f"{key} must be a boolean", key)
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigInvalid(f"{key} must be a number", key)
        return float(value)
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigInvalid(f"{key} must be an integer", key)
        return value
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigInvalid(f"{key} must be a string", key)
        return value
    if isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigInvalid(f"{key} must be an array", key)
        return value
    return value


def merge_config(user: Optional[dict]) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    for section, body in (user or {}).items():
        if section not in cfg:
            raise ConfigInvalid(f"unknown section [{section}]", section)
        if not isinstance(body, dict):
            raise ConfigInvalid(f"[{section}] must be a table", section)
        for k, v in body.items():
            key = f"{section}.{k}"
            if k not in cfg[section]:
                raise ConfigInvalid(f"unknown key {key}", key)
            cfg[section][k] = _check_type(key, cfg[section][k], v)
    _validate(cfg)
    return cfg


def _validate(cfg):
    if cfg["shape"]["family"] not in SHAPE_ALIASES:
        raise ConfigInvalid(f"shape.family must be one of {sorted(SHAPE_ALIASES)}", "shape.family")
    if cfg["sweep"]["family"] not in ("dilation", "translation", "displacement"):
        raise ConfigInvalid("sweep.family must be dilation, translation or displacement", "sweep.family")
    if cfg["shape"]["radius"] <= 0:
        raise ConfigInvalid("shape.radius must be positive", "shape.radius")
    for name in ("solver", "surface"):
        q = cfg["quadrature"][name]
        if len(q) != 3 or any(not isinstance(v, int) or v < 4 for v in q):
            raise ConfigInvalid(f"quadrature.{name} needs three integers >= 4", f"quadrature.{name}")
    s = cfg["solver"]
    if not 1 <= s["n_max"] <= 12:
        raise ConfigInvalid("solver.n_max must lie in 1..12", "solver.n_max")
    if s["radial_count"] < 1:
        raise ConfigInvalid("solver.radial_count must be >= 1", "solver.radial_count")
    if s["tau"] <= 0:
        raise ConfigInvalid("solver.tau must be positive", "solver.tau")
    if 0.0 not in [float(e) for e in cfg["sweep"]["eps"]]:
        raise ConfigInvalid("sweep.eps must contain 0", "sweep.eps")
    for f in cfg["sweep"]["formats"]:
        if f not in ("csv", "json", "svg"):
            raise ConfigInvalid(f"unknown export format '{f}'", "sweep.formats")
    for key in ("shape.velocity", "sweep.velocity"):
        sec, k = key.split(".")
        try:
            lab.velocity_field(cfg[sec][k])
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigInvalid(f"{key}: {exc}", key) from exc


def load_config(path: Optional[str]) -> dict:
    if path is None:
        return merge_config(None)
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise IoFailure(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigInvalid(f"config is not valid TOML: {exc}", "") from exc
    return merge_config(data)


def solver_config(cfg: dict) -> solver.SolverConfig:
    s = dict(cfg["solver"])
    for k in ("grad_n_max", "grad_radial_count", "window"):
        s[k] = s[k] or None
    return solver.SolverConfig(radius=cfg["shape"]["radius"], quad=QuadOrder.coerce(cfg["quadrature"]["solver"]), **s)


def tolerances(cfg: dict) -> verify.Tolerances:
    names = set(asdict(verify.Tolerances()))
    return verify.Tolerances(**{k: v for k, v in cfg["tolerances"].items() if k in names})


def build_shape(cfg: dict):
    sh = cfg["shape"]
    fam = sh["family"]
    if fam == "identity":
        return Identity()
    if fam == "linear":
        return Linear(sh["A"], sh["b"])
    return lab.make_family(fam, sh["velocity"], sh["radius"], sh["t"]).at(sh["eps"])


def apply_shape_flag(cfg: dict, shape: Optional[str], eps: Optional[float]):
    if shape is not None:
        if shape in SHAPE_ALIASES:
            cfg["shape"]["family"] = shape
        elif shape in lab.FIELD_PRESETS:
            cfg["shape"]["family"] = "displacement"
            cfg["shape"]["velocity"] = shape
        else:
            raise ConfigInvalid(f"unknown shape '{shape}'", "shape.family")
    if eps is not None:
        cfg["shape"]["eps"] = float(eps)


# --------------------------------------------------------------------------
# cache and artifacts


class DiskCache:
    """JSON results keyed by a content hash of the inputs that determine them."""

    def __init__(self, root: Optional[Path]):
        self.root = root

    def _path(self, kind: str, key) -> Path:
        blob = json.dumps({"kind": kind, "version": __version__, "key": key}, sort_keys=True)
        return self.root / f"{kind}-{hashlib.sha256(blob.encode()).hexdigest()[:20]}.json"

    def fetch(self, kind: str, key, compute):
        if self.root is None:
            return compute()
        p = self._path(kind, key)
        if p.exists():
            try:
                return json.loads(p.read_text(encoding="utf-8"))
            except (OSError, ValueError):
                pass
        value = compute()
        try:
            self.root.mkdir(parents=True, exist_ok=True)
            tmp = p.with_suffix(".tmp")
            tmp.write_text(json.dumps(value, sort_keys=True), encoding="utf-8")
            os.replace(tmp, p)
        except OSError:
            pass
        return value


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def write_artifact(out_dir: Path, name: str, text: str) -> Path:
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        p = out_dir / name
        with open(p, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        return p
    except OSError as exc:
        raise IoFailure(f"cannot write {out_dir / name}: {exc}") from exc


# --------------------------------------------------------------------------
# subcommands


def cmd_ball_spectrum(args, cfg, cache):
    R = args.radius if args.radius is not None else cfg["shape"]["radius"]
    count = args.count

    def compute():
        return [list(e.as_row()) for e in ballmodes.maxwell_spectrum(R, 12, count)]

    rows = cache.fetch("ball-spectrum", {"radius": R, "count": count}, compute)
    lines = ["lambda,wavenumber,family,n,radial_index,multiplicity"]
    print(f"{'lambda':>14s} {'z':>12s}  family  n  s  mult")
    for lam, fam, n, s, mult in rows:
        z = float(np.sqrt(lam)) * R
        lines.append(f"{lam!r},{z!r},{fam},{n},{s},{mult}")
        print(f"{lam:14.8f} {z:12.8f}  {fam:<6s} {n:2d} {s:2d} {mult:5d}")
    write_artifact(args.out_dir, "ball_spectrum.csv", "\n".join(lines) + "\n")
    return EXIT_OK


def _solve_dict(cfg, cache):
    scfg = solver_config(cfg)
    key = {"shape": cfg["shape"], "solver": scfg.to_dict()}
    return cache.fetch("solve", key, lambda: solver.eigenvalues_of_shape(build_shape(cfg), scfg).to_dict())


def cmd_solve(args, cfg, cache):
    if args.tau is not None:
        cfg["solver"]["tau"] = float(args.tau)
    rep = _solve_dict(cfg, cache)
    tol = cfg["tolerances"]["solve_residual"]
    print(f"shape {rep['shape']}  tau {rep['tau']:.6g} (requested {rep['tau_requested']:.6g}, "
          f"{rep['auto_shifts']} shifts)  certified below {rep['certified_cutoff']:.6g}")
    print(f"{'lambda':>16s}  {'label':<9s} {'div indicator':>13s} {'residual':>10s}")
    for e in rep["eigenpairs"]:
        print(f"{e['lambda']:16.10f}  {e['label']:<9s} {e['div_indicator']:13.3e} {e['residual']:10.2e}")
    write_artifact(args.out_dir, "solve.json", _dumps(rep))
    ok = all(e["residual"] < tol for e in rep["eigenpairs"])
    return EXIT_OK if ok else EXIT_FAIL


def _cluster_entry(R, index):
    spectrum = ballmodes.maxwell_spectrum(R, 12, index + 1)
    return spectrum[index]


def cmd_hadamard(args, cfg, cache):
    R = cfg["shape"]["radius"]
    vel = lab.velocity_field(args.velocity or cfg["shape"]["velocity"])
    surf = build_sphere_surface(R, QuadOrder.coerce(cfg["quadrature"]["surface"]))
    phi = build_shape(cfg)
    out = {"velocity": vel.to_dict(), "cluster": args.cluster}
    if isinstance(phi, Identity):
        entry = _cluster_entry(R, args.cluster)
        space = ballmodes.eigenspace_of(entry, R)
        M = shapederiv.ball_hadamard(space, surf, vel)
        out["path"] = "analytic"
        out["solver_report"] = None
    else:
        scfg = solver_config(cfg)
        rep = solver.eigenvalues_of_shape(phi, scfg, keep=True)
        idx = lab.select_cluster(list(rep.solution.eigenvalues), rep.solution.labels, args.cluster)
        lam = float(np.mean(rep.solution.eigenvalues[idx]))
        msurf = map_surface(phi, surf)
        E, C = shapederiv.pushforward_eigenspace(rep.solution, idx, rep.pair.basis, phi, msurf)
        M = shapederiv.hadamard_matrix(E, C, msurf, lam, vel)
        out["path"] = "discrete"
        out["note"] = "discrete eigenvectors pushed forward; curls from analytic basis curls, no differencing"
        out["solver_report"] = rep.to_dict()
    rep_sd = shapederiv.shape_derivative_report(M)
    rep_sd["volume_derivative"] = shapederiv.volume_derivative(vel, surf)
    rep_sd["perimeter_derivative"] = shapederiv.perimeter_derivative(vel, surf)
    out["shape_derivative"] = rep_sd
    print(f"lambda {M.eigenvalue:.10g}  multiplicity {M.multiplicity}  ({out['path']})")
    print("slopes  " + "  ".join(f"{s:.8g}" for s in rep_sd["slopes"]))
    for s, d in enumerate(rep_sd["symmetric_function_derivatives"], start=1):
        print(f"dLambda_{s}  {d:.10g}")
    write_artifact(args.out_dir, "hadamard.json", _dumps(out))
    return EXIT_OK


def _slope_check(res: lab.SweepResult, tol: float) -> dict:
    eps_min = min(abs(e) for e in res.eps if e != 0.0) if len(res.eps) > 1 else 0.0
    bound = (tol + 10.0 * eps_min ** 2) * res.eigenvalue0
    pred = np.asarray(res.predicted_slopes)
    out = {"bound": bound}
    for side in ("right", "left"):
        got = np.asarray(getattr(res, f"{side}_slopes"))
        out[side] = float(np.max(np.abs(got - pred))) if got.size else 0.0
    out["passed"] = bool(out["right"] <= bound and out["left"] <= bound)
    return out


def cmd_nagy_sweep(args, cfg, cache):
    sw = cfg["sweep"]
    if args.velocity:
        sw["velocity"] = args.velocity
    if args.cluster is not None:
        sw["cluster"] = args.cluster
    fam = lab.make_family(sw["family"], sw["velocity"], cfg["shape"]["radius"], cfg["shape"]["t"])
    scfg = solver_config(cfg)
    key = {"sweep": sw, "solver": scfg.to_dict(), "family": fam.to_dict()}

    def compute():
        return lab.sweep(fam, sw["cluster"], sw["eps"], scfg, args.workers, sw["strict"]).to_dict()

    res = lab.SweepResult.from_dict(cache.fetch("sweep", key, compute))
    check = _slope_check(res, cfg["tolerances"]["slope"])
    writers = {"csv": lab.to_csv, "json": lab.to_json, "svg": lab.to_svg}
    for f in sw["formats"]:
        write_artifact(args.out_dir, f"sweep.{f}", writers[f](res))
    write_artifact(args.out_dir, "sweep_check.json", _dumps(check))
    print(f"lambda0 {res.eigenvalue0:.10g}  multiplicity {res.multiplicity}  tau {res.tau:.6g}")
    print("predicted " + "  ".join(f"{s:.6f}" for s in res.predicted_slopes))
    print("right     " + "  ".join(f"{s:.6f}" for s in res.right_slopes))
    print("left      " + "  ".join(f"{s:.6f}" for s in res.left_slopes))
    print(f"max deviation right {check['right']:.3e} left {check['left']:.3e} bound {check['bound']:.3e}  "
          f"{'PASS' if check['passed'] else 'FAIL'}")
    if res.ambiguities:
        print(f"ambiguous matches at {res.ambiguities}")
    return EXIT_OK if check["passed"] else EXIT_FAIL


def _discrete_checks(cfg, tol) -> list:
    phi = build_shape(cfg)
    scfg = solver_config(cfg)
    rep = solver.eigenvalues_of_shape(phi, scfg, keep=True)
    surf = map_surface(phi, build_sphere_surface(cfg["shape"]["radius"], QuadOrder.coerce(cfg["quadrature"]["surface"])))
    checks = []
    sol = rep.solution
    maxwell = [i for i, l in enumerate(sol.labels) if l == solver.MAXWELL][:10]
    for i in maxwell:
        t, nc, dv = verify.discrete_boundary_residuals(rep, i, phi, surf)
        checks.append(verify._check(f"discrete trace lambda={sol.eigenvalues[i]:.8f}", t, tol))
    return checks


def cmd_verify(args, cfg, cache):
    apply_shape_flag(cfg, args.shape, args.eps)
    tol = tolerances(cfg)
    if cfg["shape"]["family"] == "identity":
        result = verify.run_suite(args.seed, cfg["shape"]["radius"], tol, solver_config(cfg))
    else:
        checks = _discrete_checks(cfg, cfg["tolerances"]["discrete_trace"])
        result = {"seed": args.seed, "radius": cfg["shape"]["radius"], "shape": cfg["shape"],
                  "checks": checks, "passed": all(c["passed"] for c in checks)}
    sys.stdout.write(verify.suite_table(result))
    write_artifact(args.out_dir, "verify.json", verify.suite_json(result))
    return EXIT_OK if result["passed"] else EXIT_FAIL


def cmd_criticality(args, cfg, cache):
    apply_shape_flag(cfg, args.shape, args.eps)
    R = cfg["shape"]["radius"]
    tol = cfg["tolerances"]["criticality"]
    surf = build_sphere_surface(R, QuadOrder.coerce(cfg["quadrature"]["surface"]))
    count = int(cfg["tolerances"]["clusters"])
    rows = []
    for e in ballmodes.maxwell_spectrum(R, 12, count):
        space = ballmodes.eigenspace_of(e, R)
        for con in verify.Constraint:
            r = verify.criticality_residual(space, surf, con)
            rows.append({"shape": "ball", "lambda": e.eigenvalue, "multiplicity": space.multiplicity,
                         "constraint": con.value, "best_c": r.best_c, "residual": r.residual,
                         "acceptance": True, "passed": r.residual < tol})
    phi = build_shape(cfg)
    if not isinstance(phi, Identity):
        # exploratory: perturbed shapes carry no acceptance claim
        rep = solver.eigenvalues_of_shape(phi, solver_config(cfg), keep=True)
        msurf = map_surface(phi, surf)
        for c in range(count):
            idx = lab.select_cluster(list(rep.solution.eigenvalues), rep.solution.labels, c, 1e-6)
            lam = float(np.mean(rep.solution.eigenvalues[idx]))
            E, C = shapederiv.pushforward_eigenspace(rep.solution, idx, rep.pair.basis, phi, msurf)
            for con in verify.Constraint:
                r = verify.criticality_from_arrays(E, C, lam, msurf, con)
                rows.append({"shape": phi.descriptor(), "lambda": lam, "multiplicity": len(idx),
                             "constraint": con.value, "best_c": r.best_c, "residual": r.residual,
                             "acceptance": False, "passed": None})
    for r in rows:
        flag = "" if r["passed"] is None else ("PASS" if r["passed"] else "FAIL")
        print(f"{flag:4s}  {r['shape']:<28s} lambda {r['lambda']:12.8f} m={r['multiplicity']} "
              f"{r['constraint']:<9s} c={r['best_c']:+.6e} residual {r['residual']:.3e}")
    write_artifact(args.out_dir, "criticality.json", _dumps({"rows": rows}))
    return EXIT_OK if all(r["passed"] for r in rows if r["acceptance"]) else EXIT_FAIL


# --------------------------------------------------------------------------
# entry point


def _common(p: argparse.ArgumentParser, top: bool):
    d = None if top else argparse.SUPPRESS
    p.add_argument("--config", default=d, help="TOML configuration file")
    p.add_argument("--out-dir", default=d, help="artifact directory (default: cavityshape-out)")
    p.add_argument("--workers", type=int, default=d, help="worker processes for sweeps")
    p.add_argument("--seed", type=int, default=d, help="seed for randomized checks")
    p.add_argument("--cache-dir", default=d, help="cache directory (default: <out-dir>/.cache)")
    p.add_argument("--no-cache", action="store_true", default=False if top else argparse.SUPPRESS)
    p.add_argument("--print-config", action="store_true", default=False if top else argparse.SUPPRESS,
                   help="print the effective configuration as TOML and exit")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cavityshape", description="Maxwell cavity eigenvalues on perturbed balls")
    _common(p, True)
    sub = p.add_subparsers(dest="command", metavar="command")
    s = sub.add_parser("ball-spectrum", help="analytic Maxwell eigenvalues of the ball")
    _common(s, False)
    s.add_argument("--radius", type=float)
    s.add_argument("--count", type=int, default=10)
    s.set_defaults(func=cmd_ball_spectrum)
    s = sub.add_parser("solve", help="Galerkin eigenvalues on a shape")
    _common(s, False)
    s.add_argument("--shape")
    s.add_argument("--eps", type=float)
    s.add_argument("--tau", type=float)
    s.set_defaults(func=cmd_solve)
    s = sub.add_parser("hadamard", help="Rellich-Nagy matrix and symmetric-function derivatives")
    _common(s, False)
    s.add_argument("--shape")
    s.add_argument("--eps", type=float)
    s.add_argument("--cluster", type=int, default=0)
    s.add_argument("--velocity")
    s.set_defaults(func=cmd_hadamard)
    s = sub.add_parser("nagy-sweep", help="perturbation sweep and slope comparison")
    _common(s, False)
    s.add_argument("--cluster", type=int)
    s.add_argument("--velocity")
    s.set_defaults(func=cmd_nagy_sweep)
    s = sub.add_parser("verify", help="identity residual suite")
    _common(s, False)
    s.add_argument("--shape", default="identity")
    s.add_argument("--eps", type=float)
    s.set_defaults(func=cmd_verify)
    s = sub.add_parser("criticality", help="criticality residual scan")
    _common(s, False)
    s.add_argument("--shape")
    s.add_argument("--eps", type=float)
    s.set_defaults(func=cmd_criticality)
    return p


def _error(exc, code) -> int:
    payload = exc.to_dict() if isinstance(exc, CavityError) else {
        "error": "invalid_argument", "type": type(exc).__name__, "message": str(exc)}
    sys.stdout.write(json.dumps(payload, sort_keys=True) + "\n")
    return code


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        if getattr(args, "shape", None) is not None or getattr(args, "eps", None) is not None:
            apply_shape_flag(cfg, getattr(args, "shape", None), getattr(args, "eps", None))
            _validate(cfg)
        if args.print_config:
            sys.stdout.write(tomli_w.dumps(cfg))
            return EXIT_OK
        if args.command is None:
            parser.print_usage(sys.stderr)
            return EXIT_USAGE
        args.out_dir = Path(args.out_dir or "cavityshape-out")
        args.seed = 0 if args.seed is None else args.seed
        args.workers = args.workers or 1
        root = None if args.no_cache else Path(args.cache_dir) if args.cache_dir else args.out_dir / ".cache"
        if args.command in ("verify", "criticality"):
            args.shape, args.eps = None, None  # already applied
        return args.func(args, cfg, DiskCache(root))
    except ConfigInvalid as exc:
        return _error(exc, EXIT_CONFIG)
    except CavityError as exc:
        return _error(exc, EXIT_ERROR)
    except ValueError as exc:
        return _error(exc, EXIT_ERROR)


if __name__ == "__main__":
    sys.exit(main())
