"""Spectral Galerkin solver for the transplanted penalized curl-curl problem.

Trial functions are exact ball modes (TE, TM and gradients of Dirichlet
eigenfunctions).  For a map Phi the two forms on the reference ball are

    A(u, w) = int curl u . G curl w + tau int N(Phi, u) N(Phi, w) / |det DPhi|
    B(u, w) = int u . R_w w

with G = DPhi^T DPhi / |det|, R_w = DPhi^-1 DPhi^-T |det| and
N(Phi, u) = div(W u), W = DPhi^-1 DPhi^-T det.  Basis values, curls and
Jacobians are sampled once per (basis, quadrature); each map only changes the
kernels, so assembly is a pair of matrix products.
"""
from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import asdict, dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg

from . import ballmodes
from .ballmodes import BallMode, Family
from .errors import FactorizationFailure, QuadratureInsufficient
from .geomquad import BallQuadrature, QuadOrder, build_ball_quadrature
from .transplant import Diffeomorphism, Identity, _inv_det, weight_divergence

MAXWELL = "Maxwell"
HELMHOLTZ = "Helmholtz"


@dataclass(frozen=True)
class BasisSpec:
    radius: float = 1.0
    n_max: int = 3
    radial_count: int = 2
    grad_n_max: Optional[int] = None
    grad_radial_count: Optional[int] = None

    @property
    def gn(self) -> int:
        return self.n_max if self.grad_n_max is None else self.grad_n_max

    @property
    def gs(self) -> int:
        return self.radial_count if self.grad_radial_count is None else self.grad_radial_count


class SpectralBasis:
    def __init__(self, spec: BasisSpec):
        self.spec = spec
        R = spec.radius
        modes: List[BallMode] = []
        for fam in (Family.TE, Family.TM):
            for n in range(1, spec.n_max + 1):
                for s in range(1, spec.radial_count + 1):
                    modes.extend(ballmodes.make_mode(fam, n, m, s, R) for m in range(-n, n + 1))
        for n in range(0, spec.gn + 1):
            for s in range(1, spec.gs + 1):
                modes.extend(ballmodes.make_mode(Family.GRAD, n, m, s, R) for m in range(-n, n + 1))
        self.modes = modes

    @property
    def dimension(self) -> int:
        return len(self.modes)

    def maxwell_cutoff(self) -> float:
        """Ball Maxwell eigenvalues below this value all have their modes in the basis."""
        sp = self.spec
        R = sp.radius
        cands = [ballmodes.maxwell_cutoff(R, sp.n_max)]
        for n in range(1, sp.n_max + 1):
            cands.append(ballmodes.wavenumber(Family.TE, n, sp.radial_count + 1, R) ** 2)
            cands.append(ballmodes.wavenumber(Family.TM, n, sp.radial_count + 1, R) ** 2)
        return min(cands)

    def dirichlet_cutoff(self) -> float:
        sp = self.spec
        R = sp.radius
        cands = [ballmodes.helmholtz_cutoff(R, sp.gn)]
        for n in range(0, sp.gn + 1):
            cands.append(ballmodes.wavenumber(Family.GRAD, n, sp.gs + 1, R) ** 2)
        return min(cands)

    def certified_cutoff(self, tau: float) -> float:
        return min(self.maxwell_cutoff(), tau * self.dirichlet_cutoff())

    def to_dict(self) -> dict:
        d = asdict(self.spec)
        d.update(grad_n_max=self.spec.gn, grad_radial_count=self.spec.gs, dimension=self.dimension)
        return d


def build_basis(R: float = 1.0, n_max: int = 3, radial_count: int = 2,
                grad_n_max: Optional[int] = None, grad_radial_count: Optional[int] = None) -> SpectralBasis:
    return SpectralBasis(BasisSpec(float(R), n_max, radial_count, grad_n_max, grad_radial_count))


# --------------------------------------------------------------------------
# basis sampling


@dataclass(frozen=True, eq=False)
class BasisSamples:
    U: np.ndarray     # (N, Q, 3)
    C: np.ndarray     # (N, Q, 3)
    DU: np.ndarray    # (N, Q, 3, 3), DU[.., i, j] = d_i u_j


_SAMPLE_CACHE: "OrderedDict[tuple, BasisSamples]" = OrderedDict()
_SAMPLE_CACHE_SIZE = 2


def basis_samples(basis: SpectralBasis, quad: BallQuadrature) -> BasisSamples:
    key = (basis.spec, quad.radius, quad.order)
    hit = _SAMPLE_CACHE.get(key)
    if hit is not None:
        _SAMPLE_CACHE.move_to_end(key)
        return hit
    U, C, DU = ballmodes.mode_arrays(basis.modes, quad.nodes, want_jac=True)
    for a in (U, C, DU):
        a.setflags(write=False)
    out = BasisSamples(U, C, DU)
    _SAMPLE_CACHE[key] = out
    while len(_SAMPLE_CACHE) > _SAMPLE_CACHE_SIZE:
        _SAMPLE_CACHE.popitem(last=False)
    return out


def clear_cache():
    _SAMPLE_CACHE.clear()


# --------------------------------------------------------------------------
# assembly


@dataclass(eq=False)
class DiscreteOperatorPair:
    A: np.ndarray
    B: np.ndarray
    tau: float
    phi: Diffeomorphism
    basis: SpectralBasis
    A_curl: np.ndarray = field(repr=False)
    D: np.ndarray = field(repr=False)
    quad_order: QuadOrder = QuadOrder()

    def with_tau(self, tau: float) -> "DiscreteOperatorPair":
        A = _sym(self.A_curl + tau * self.D)
        return replace(self, A=A, tau=float(tau))


def _sym(M):
    return 0.5 * (M + M.T)


def _forms(phi: Diffeomorphism, samples: BasisSamples, quad: BallQuadrature, fd_step: float):
    x, w = quad.nodes, quad.weights
    J = phi.jacobian(x)
    Jinv, det = _inv_det(J)
    ad = np.abs(det)
    JtJ = np.swapaxes(J, -1, -2) @ J
    G = JtJ / ad[:, None, None]
    Rinv = Jinv @ np.swapaxes(Jinv, -1, -2)
    Rw = Rinv * ad[:, None, None]
    W = Rinv * det[:, None, None]
    dW = weight_divergence(phi, x, fd_step * quad.radius)
    U, C, DU = samples.U, samples.C, samples.DU
    N = U.shape[0]
    GC = np.einsum("qab,nqb->nqa", G * w[:, None, None], C).reshape(N, -1)
    A_curl = C.reshape(N, -1) @ GC.T
    RU = np.einsum("qab,nqb->nqa", Rw * w[:, None, None], U).reshape(N, -1)
    B = U.reshape(N, -1) @ RU.T
    Nv = np.einsum("nqk,qk->nq", DU.reshape(N, -1, 9), W.reshape(-1, 9))
    Nv += np.einsum("nqj,qj->nq", U, dW)
    D = (Nv * (w / ad)) @ Nv.T
    return _sym(A_curl), _sym(B), _sym(D), Nv


def assemble(phi: Diffeomorphism, basis: SpectralBasis, tau: float = 1.0,
             quad: Optional[BallQuadrature] = None, fd_step: float = 1e-5,
             check_quadrature: bool = False, gate_tol: float = 1e-9) -> DiscreteOperatorPair:
    if tau <= 0:
        raise ValueError("penalty tau must be positive")
    if basis.dimension == 0:
        raise ValueError("empty basis")
    quad = quad or build_ball_quadrature(basis.spec.radius, DEFAULT_QUAD)
    A_curl, B, D, _ = _forms(phi, basis_samples(basis, quad), quad, fd_step)
    if check_quadrature:
        quadrature_gate(phi, basis, quad, (A_curl, B, D), fd_step, gate_tol)
    return DiscreteOperatorPair(_sym(A_curl + tau * D), B, float(tau), phi, basis, A_curl, D, quad.order)


def quadrature_gate(phi, basis, quad, forms, fd_step=1e-5, tol=1e-9):
    """Raise QuadratureInsufficient if doubling every order moves any form entry.

    The doubled rule is streamed over radial shells so memory stays bounded.
    """
    big = build_ball_quadrature(quad.radius, quad.order.doubled())
    per_shell = big.order.polar * big.order.azimuthal
    acc = [np.zeros_like(f) for f in forms]
    shells = big.order.radial
    step = max(1, shells // 8)
    for s0 in range(0, shells, step):
        sl = slice(s0 * per_shell, min(shells, s0 + step) * per_shell)
        sub = BallQuadrature(big.radius, big.order, big.nodes[sl], big.weights[sl],
                             big.rho, big.cos_theta, big.phi)
        U, C, DU = ballmodes.mode_arrays(basis.modes, sub.nodes, want_jac=True)
        part = _forms(phi, BasisSamples(U, C, DU), sub, fd_step)
        for a, p in zip(acc, part[:3]):
            a += p
    for name, f, g in zip(("curl", "mass", "div"), forms, acc):
        scale = max(np.max(np.abs(g)), 1e-300)
        dev = np.max(np.abs(f - g)) / scale
        if dev > tol and not (name == "div" and np.max(np.abs(g)) < 1e-8 * np.max(np.abs(acc[0]))):
            raise QuadratureInsufficient(f"{name} form changes by {dev:.3e} under order doubling")


# --------------------------------------------------------------------------
# solve


@dataclass(eq=False)
class DiscreteEigenSolution:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray          # columns, B-orthonormal
    labels: List[str]
    div_indicator: np.ndarray
    div_fraction: np.ndarray          # tau x^T D x / x^T A x
    residuals: np.ndarray
    tau: float
    indicator_pass: np.ndarray = None   # div_indicator below the absolute threshold

    def maxwell(self) -> np.ndarray:
        return self.eigenvalues[[l == MAXWELL for l in self.labels]]

    def helmholtz(self) -> np.ndarray:
        return self.eigenvalues[[l == HELMHOLTZ for l in self.labels]]


def solve(pair: DiscreteOperatorPair, window: Optional[int] = None,
          div_threshold: float = 1e-6, fraction_threshold: float = 1e-2) -> DiscreteEigenSolution:
    """Dense generalized eigensolve and Maxwell/Helmholtz labeling.

    A mode is Maxwell when its div indicator int |N|^2/|det| / <u, u>_Phi is
    below ``div_threshold``.  On perturbed shapes a truncated gradient block
    leaves Maxwell modes with an O(eps^2) indicator, so a mode whose share of
    penalty energy tau x^T D x / x^T A x is below ``fraction_threshold`` is
    also labeled Maxwell; ``indicator_pass`` records which test applied.
    """
    A, B = pair.A, pair.B
    try:
        L = scipy.linalg.cholesky(B, lower=True)
    except np.linalg.LinAlgError as exc:
        raise FactorizationFailure(f"mass matrix is not positive definite: {exc}") from exc
    T = scipy.linalg.solve_triangular(L, A, lower=True)
    T = scipy.linalg.solve_triangular(L, T.T, lower=True)
    lam, Y = scipy.linalg.eigh(_sym(T))
    X = scipy.linalg.solve_triangular(L.T, Y, lower=False)
    k = len(lam) if window is None else min(int(window), len(lam))
    lam, X = lam[:k], X[:, :k]
    xDx = np.einsum("ik,ij,jk->k", X, pair.D, X)
    xBx = np.einsum("ik,ij,jk->k", X, B, X)
    xAx = np.einsum("ik,ij,jk->k", X, A, X)
    div_ind = np.maximum(xDx, 0.0) / xBx
    frac = pair.tau * np.maximum(xDx, 0.0) / np.where(xAx > 0, xAx, 1.0)
    passed = div_ind < div_threshold
    labels = [MAXWELL if (p or f < fraction_threshold) else HELMHOLTZ for p, f in zip(passed, frac)]
    nA, nB = np.linalg.norm(A), np.linalg.norm(B)
    R = A @ X - (B @ X) * lam
    res = np.linalg.norm(R, axis=0) / ((nA + np.abs(lam) * nB) * np.linalg.norm(X, axis=0))
    return DiscreteEigenSolution(lam, X, labels, div_ind, frac, res, pair.tau, passed)


def clusters(values: Sequence[float], rel_gap: float) -> List[List[int]]:
    """Single-linkage grouping of sorted values by relative gap."""
    out: List[List[int]] = []
    for i, v in enumerate(values):
        if out and abs(v - values[out[-1][-1]]) <= rel_gap * max(abs(v), 1e-300):
            out[-1].append(i)
        else:
            out.append([i])
    return out


def find_resonances(sol: DiscreteEigenSolution, rel_gap: float = 1e-3,
                    upto: Optional[float] = None) -> List[List[int]]:
    """Clusters in which Maxwell-like and gradient-like energy is mixed or adjacent."""
    lam = sol.eigenvalues
    found = []
    for c in clusters(lam, rel_gap):
        if upto is not None and lam[c[0]] > upto:
            break
        if len(c) < 2:
            continue
        r = float(np.sum(np.clip(sol.div_fraction[c], 0.0, 1.0)))
        labels = {sol.labels[i] for i in c}
        if (0.5 < r < len(c) - 0.5) or len(labels) > 1:
            found.append(c)
    return found


# --------------------------------------------------------------------------
# pipeline


DEFAULT_QUAD = QuadOrder(24, 16, 32)


@dataclass(frozen=True)
class SolverConfig:
    radius: float = 1.0
    n_max: int = 3
    radial_count: int = 2
    grad_n_max: Optional[int] = None
    grad_radial_count: Optional[int] = None
    tau: float = 1.0
    auto_shift: bool = True
    shift_factor: float = 1.37
    max_shifts: int = 8
    resonance_gap: float = 1e-3
    div_threshold: float = 1e-6
    fraction_threshold: float = 1e-2
    quad: QuadOrder = DEFAULT_QUAD
    window: Optional[int] = None
    fd_step: float = 1e-5
    check_quadrature: bool = False

    def basis_spec(self) -> BasisSpec:
        return BasisSpec(self.radius, self.n_max, self.radial_count, self.grad_n_max, self.grad_radial_count)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["quad"] = list(self.quad.as_tuple())
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SolverConfig":
        d = dict(d)
        if "quad" in d:
            d["quad"] = QuadOrder.coerce(d["quad"])
        return cls(**d)


@dataclass(eq=False)
class SolverReport:
    shape: str
    shape_params: dict
    tau_requested: float
    tau: float
    shifts: int
    basis: dict
    quad_order: Tuple[int, int, int]
    certified_cutoff: float
    eigenvalues: List[float]
    labels: List[str]
    div_indicator: List[float]
    residuals: List[float]
    indicator_pass: List[bool]
    solution: Optional[DiscreteEigenSolution] = field(default=None, repr=False)
    pair: Optional[DiscreteOperatorPair] = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "shape": self.shape,
            "shape_params": self.shape_params,
            "tau_requested": self.tau_requested,
            "tau": self.tau,
            "auto_shifts": self.shifts,
            "basis": self.basis,
            "quadrature": list(self.quad_order),
            "certified_cutoff": self.certified_cutoff,
            "eigenpairs": [{"lambda": l, "label": lab, "div_indicator": d,
                            "indicator_below_threshold": p, "residual": r}
                           for l, lab, d, p, r in zip(self.eigenvalues, self.labels, self.div_indicator,
                                                      self.indicator_pass, self.residuals)],
        }

    def maxwell_values(self) -> List[float]:
        return [l for l, lab in zip(self.eigenvalues, self.labels) if lab == MAXWELL]


_BASIS_CACHE: Dict[BasisSpec, SpectralBasis] = {}


def basis_for(cfg: SolverConfig) -> SpectralBasis:
    spec = cfg.basis_spec()
    if spec not in _BASIS_CACHE:
        _BASIS_CACHE[spec] = SpectralBasis(spec)
    return _BASIS_CACHE[spec]


def eigenvalues_of_shape(phi: Optional[Diffeomorphism] = None, config: SolverConfig = SolverConfig(),
                         keep: bool = False) -> SolverReport:
    phi = phi or Identity()
    basis = basis_for(config)
    quad = build_ball_quadrature(config.radius, config.quad)
    pair = assemble(phi, basis, config.tau, quad, config.fd_step, config.check_quadrature)
    tau = config.tau
    shifts = 0
    while True:
        sol = solve(pair, None, config.div_threshold, config.fraction_threshold)
        cutoff = basis.certified_cutoff(tau)
        top = cutoff
        if config.window is not None:
            top = min(top, sol.eigenvalues[min(config.window, len(sol.eigenvalues)) - 1])
        if not config.auto_shift or shifts >= config.max_shifts:
            break
        if not find_resonances(sol, config.resonance_gap, upto=top * (1 + config.resonance_gap)):
            break
        tau *= config.shift_factor
        shifts += 1
        pair = pair.with_tau(tau)
    cutoff = basis.certified_cutoff(tau)
    if config.window is not None:
        sel = np.arange(min(config.window, len(sol.eigenvalues)))
    else:
        sel = np.flatnonzero(sol.eigenvalues < cutoff)
    return SolverReport(
        shape=phi.descriptor(), shape_params=phi.to_dict(), tau_requested=config.tau, tau=tau,
        shifts=shifts, basis=basis.to_dict(), quad_order=config.quad.as_tuple(),
        certified_cutoff=cutoff,
        eigenvalues=[float(v) for v in sol.eigenvalues[sel]],
        labels=[sol.labels[i] for i in sel],
        div_indicator=[float(sol.div_indicator[i]) for i in sel],
        residuals=[float(sol.residuals[i]) for i in sel],
        indicator_pass=[bool(sol.indicator_pass[i]) for i in sel],
        solution=sol if keep else None, pair=pair if keep else None)
