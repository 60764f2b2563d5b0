"""Analytic eigenfields of the ball.

Every mode is built from the Debye potential g = j_n(k rho) Y_n^m, written as
g = P(x) h(rho^2) with P the solid harmonic rho^n Y_n^m and h = j_n(k rho)/rho^n:

    TE:  E = k grad g x x                   (= curl of Y psi_n(k rho) rho_hat)
    TM:  E = curl TE-shape = k (grad phi + k^2 g x),  phi = g + x . grad g
    HelmholtzGradient:  E = grad g

h and its rho^2-derivatives are (-k/2)^p j_{n+p}(k rho)/rho^(n+p) up to a
power of k, so values, curls and Jacobians are available in closed form and
are regular on the polar axis and at the origin.  ``evaluate_field`` uses the
spherical-frame formulas instead; the two routes are cross-checked in tests.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import kernels, specfun
from .errors import AxisEvaluation, CutoffTooLow, GramNotIdentity
from .geomquad import QuadOrder, build_ball_quadrature



class Family(str, enum.Enum):
    TE = "TE"
    TM = "TM"
    GRAD = "HelmholtzGradient"


_ZERO_KIND = {Family.TE: specfun.ZeroKind.PSI, Family.TM: specfun.ZeroKind.PSI_PRIME,
              Family.GRAD: specfun.ZeroKind.PSI}


@dataclass(frozen=True)
class BallMode:
    family: Family
    n: int
    m: int
    radial_index: int
    wavenumber: float
    radius: float
    norm_constant: float

    def eigenvalue(self, tau: float = 1.0) -> float:
        k2 = self.wavenumber ** 2
        return tau * k2 if self.family is Family.GRAD else k2

    @property
    def label(self) -> str:
        return f"{self.family.value}(n={self.n},m={self.m},s={self.radial_index})"


def _validate_indices(family: Family, n: int, m: int, s: int):
    lo = 0 if family is Family.GRAD else 1
    if n < lo:
        raise ValueError(f"{family.value} modes need n >= {lo}")
    if abs(m) > n or s < 1:
        raise ValueError(f"invalid indices n={n}, m={m}, radial_index={s}")


def wavenumber(family, n: int, s: int, R: float = 1.0) -> float:
    family = Family(family)
    return specfun.dimensionless_zeros(_ZERO_KIND[family], n, s)[s - 1] / R


def make_mode(family, n: int, m: int, radial_index: int = 1, R: float = 1.0) -> BallMode:
    family = Family(family)
    _validate_indices(family, n, m, radial_index)
    k = wavenumber(family, n, radial_index, R)
    c = _norm_constant(family, n, radial_index, float(R))
    return BallMode(family, n, m, radial_index, k, float(R), c)


def normalization_order(n: int) -> QuadOrder:
    """Per-mode rule: the angular parts are polynomial and integrated exactly."""
    return QuadOrder(96, 2 * n + 8, 4 * n + 16)


@lru_cache(maxsize=4096)
def _norm_constant(family: Family, n: int, s: int, R: float) -> float:
    # The L2 norm does not depend on m: the angular factors are orthonormal
    # harmonics (and their surface gradients), so the m = 0 member fixes it.
    k = wavenumber(family, n, s, R)
    proto = BallMode(family, n, 0, s, k, R, 1.0)
    q = build_ball_quadrature(R, normalization_order(n))
    u = mode_arrays([proto], q.nodes)[0][0]
    return 1.0 / math.sqrt(float(np.einsum("qi,qi->q", u, u) @ q.weights))


# --------------------------------------------------------------------------
# Cartesian engine


_MULTI = {0: [()], 1: [(a,) for a in range(3)],
          2: [(a, b) for a in range(3) for b in range(3)],
          3: [(a, b, c) for a in range(3) for b in range(3) for c in range(3)]}


@lru_cache(maxsize=None)
def _harmonic_derivs(n: int, m: int, order: int) -> Tuple[specfun.Poly3, ...]:
    """Derivatives of the solid harmonic, order 0..``order``, flattened in
    the index order of ``_MULTI``."""
    cache: Dict[tuple, specfun.Poly3] = {(): specfun.solid_harmonic(n, m)}
    out = []
    for o in range(order + 1):
        for idx in _MULTI[o]:
            key = tuple(sorted(idx))
            if key not in cache:
                cache[key] = cache[key[:-1]].deriv(key[-1])
            out.append(cache[key])
    return tuple(out)


def _split(vals: np.ndarray, Q: int, order: int):
    out, pos = [], 0
    for o in range(order + 1):
        cnt = 3 ** o
        out.append(vals[:, pos:pos + cnt].reshape((Q,) + (3,) * o))
        pos += cnt
    return out


class _Engine:
    """Point-set cache of harmonic derivative values and radial tables."""

    def __init__(self, points: np.ndarray):
        self.x = np.asarray(points, float).reshape(-1, 3)
        self.Q = self.x.shape[0]
        self.s = np.einsum("qi,qi->q", self.x, self.x)
        self.rho = np.sqrt(self.s)
        self._harm: Dict[tuple, list] = {}
        self._rad: Dict[tuple, np.ndarray] = {}
        self._mon: Dict[int, np.ndarray] = {}

    def harmonic(self, n: int, m: int, order: int):
        key = (n, m, order)
        if key not in self._harm:
            polys = _harmonic_derivs(n, m, order)
            if n not in self._mon:
                self._mon[n] = specfun.monomials(self.x, n)
            coef = np.stack([p.vector(n) for p in polys], axis=1)
            self._harm[key] = _split(self._mon[n] @ coef, self.Q, order)
        return self._harm[key]

    def radial(self, n: int, k: float, order: int):
        """h_p = d^p h / ds^p for p = 0..order (s = rho^2)."""
        key = (n, k, order)
        if key not in self._rad:
            F = specfun.reduced_bessel_table(n + order, k * self.rho)
            self._rad[key] = np.stack([(-k / 2.0) ** p * k ** (n + p) * F[n + p]
                                       for p in range(order + 1)])
        return self._rad[key]


_KERNEL_CODE = {Family.GRAD: kernels.GRAD, Family.TE: kernels.TE, Family.TM: kernels.TM}


def _order_needed(family: Family, want_jac: bool) -> int:
    if family is Family.GRAD:
        return 2 if want_jac else 1
    if family is Family.TE:
        return 2
    return 3 if want_jac else 2


def _mode_fields(eng: _Engine, mode: BallMode, want_jac: bool, synth=None):
    order = _order_needed(mode.family, want_jac)
    P = eng.harmonic(mode.n, mode.m, order)
    h = eng.radial(mode.n, mode.wavenumber, order)
    val, curl, jac = (synth or kernels.synthesize)(_KERNEL_CODE[mode.family], mode.wavenumber,
                                                   eng.x, P, h, want_jac)
    c = mode.norm_constant
    return c * val, c * curl, (c * jac if jac is not None else None)


def mode_arrays(modes: Sequence[BallMode], points, want_jac: bool = False, synth=None):
    """Cartesian values, curls and (optionally) Jacobians d_i E_j at points.

    Returns arrays shaped (M, Q, 3), (M, Q, 3) and (M, Q, 3, 3) or None.
    ``synth`` overrides the synthesis kernel (used to compare backends).
    """
    pts = np.asarray(points, float)
    lead = pts.shape[:-1]
    eng = _Engine(pts)
    M = len(modes)
    vals = np.empty((M, eng.Q, 3))
    curls = np.empty((M, eng.Q, 3))
    jacs = np.empty((M, eng.Q, 3, 3)) if want_jac else None
    for i, mode in enumerate(modes):
        v, c, j = _mode_fields(eng, mode, want_jac, synth)
        vals[i], curls[i] = v, c
        if want_jac:
            jacs[i] = j
    shape = (M,) + lead
    return (vals.reshape(shape + (3,)), curls.reshape(shape + (3,)),
            jacs.reshape(shape + (3, 3)) if want_jac else None)


def field_values(mode: BallMode, points):
    return mode_arrays([mode], points)[0][0]


def curl_values(mode: BallMode, points):
    return mode_arrays([mode], points)[1][0]


def magnetic_profile(mode: BallMode, point):
    """h = curl E / sqrt(lambda), so that H = -i h."""
    if mode.family is Family.GRAD:
        raise ValueError("magnetic profile is defined for TE/TM modes only")
    return curl_values(mode, point) / mode.wavenumber


# --------------------------------------------------------------------------
# spherical-frame route


def _frame(point):
    p = np.asarray(point, float)
    rho = np.linalg.norm(p, axis=-1)
    cyl = np.hypot(p[..., 0], p[..., 1])
    if np.any(cyl <= 1e-12 * np.maximum(rho, 1e-300)) or np.any(rho == 0):
        raise AxisEvaluation("point lies on the polar axis")
    theta = np.arccos(np.clip(p[..., 2] / rho, -1.0, 1.0))
    phi = np.mod(np.arctan2(p[..., 1], p[..., 0]), 2 * math.pi)
    st, ct, sp, cp = np.sin(theta), np.cos(theta), np.sin(phi), np.cos(phi)
    r_hat = np.stack([st * cp, st * sp, ct], -1)
    t_hat = np.stack([ct * cp, ct * sp, -st], -1)
    p_hat = np.stack([-sp, cp, np.zeros_like(sp)], -1)
    return rho, theta, phi, r_hat, t_hat, p_hat


def _frame_combination(mode, rho, theta, phi, ar, at, ap, frame):
    _, _, _, r_hat, t_hat, p_hat = frame
    return (ar[..., None] * r_hat + at[..., None] * t_hat + ap[..., None] * p_hat)


def _te_shape(n, m, z, rho, theta, phi):
    """(1/rho) psi_n(z) [(1/sin) dY/dphi theta_hat - dY/dtheta phi_hat]."""
    psi = specfun.riccati_bessel(n, z)
    return (np.zeros_like(rho), psi * specfun.d_phi_over_sin((n, m), theta, phi) / rho,
            -psi * specfun.d_theta((n, m), theta, phi) / rho)


def _tm_shape(n, m, k, z, rho, theta, phi):
    """(n(n+1)/rho^2) Y psi rho_hat + (k/rho) psi' [dY/dtheta theta_hat + (1/sin) dY/dphi phi_hat]."""
    psi = specfun.riccati_bessel(n, z)
    dpsi = specfun.riccati_bessel_deriv(n, z)
    Y = specfun.real_spherical_harmonic((n, m), theta, phi)
    return (n * (n + 1) * Y * psi / rho ** 2,
            k * dpsi * specfun.d_theta((n, m), theta, phi) / rho,
            k * dpsi * specfun.d_phi_over_sin((n, m), theta, phi) / rho)


def evaluate_field(mode: BallMode, point):
    """Cartesian E at point(s) from the spherical-frame formulas."""
    frame = _frame(point)
    rho, theta, phi = frame[:3]
    n, m, k = mode.n, mode.m, mode.wavenumber
    z = k * rho
    if mode.family is Family.TE:
        comps = _te_shape(n, m, z, rho, theta, phi)
    elif mode.family is Family.TM:
        comps = _tm_shape(n, m, k, z, rho, theta, phi)
    else:
        jn = specfun.spherical_bessel(n, z)
        comps = (k * specfun.spherical_bessel_deriv(n, z) * specfun.real_spherical_harmonic((n, m), theta, phi),
                 jn * specfun.d_theta((n, m), theta, phi) / rho,
                 jn * specfun.d_phi_over_sin((n, m), theta, phi) / rho)
    return mode.norm_constant * _frame_combination(mode, rho, theta, phi, *comps, frame)


def evaluate_magnetic(mode: BallMode, point):
    """h = curl E / k from the spherical-frame formulas (TM gives a TE shape)."""
    frame = _frame(point)
    rho, theta, phi = frame[:3]
    n, m, k = mode.n, mode.m, mode.wavenumber
    z = k * rho
    if mode.family is Family.TE:
        comps = _tm_shape(n, m, k, z, rho, theta, phi)
        scale = 1.0 / k
    elif mode.family is Family.TM:
        comps = _te_shape(n, m, z, rho, theta, phi)
        scale = k
    else:
        raise ValueError("magnetic profile is defined for TE/TM modes only")
    return scale * mode.norm_constant * _frame_combination(mode, rho, theta, phi, *comps, frame)


# --------------------------------------------------------------------------
# spectra


@dataclass(frozen=True)
class SpectrumEntry:
    eigenvalue: float
    family: Family
    n: int
    radial_index: int
    multiplicity: int

    def as_row(self):
        return (self.eigenvalue, self.family.value, self.n, self.radial_index, self.multiplicity)


def _zeros_below(kind, n: int, zcut: float) -> List[float]:
    count = 4
    while True:
        zs = specfun._dimensionless_zeros(specfun.ZeroKind(kind), n, count)
        if zs[-1] >= zcut:
            return [z for z in zs if z < zcut]
        count *= 2


def _first_zero(kind, n: int) -> float:
    return specfun._dimensionless_zeros(specfun.ZeroKind(kind), n, 1)[0]


def maxwell_cutoff(R: float, n_max: int) -> float:
    """Eigenvalues with n > n_max all lie at or above this value."""
    z = min(_first_zero(specfun.ZeroKind.PSI, n_max + 1), _first_zero(specfun.ZeroKind.PSI_PRIME, n_max + 1))
    return (z / R) ** 2


def helmholtz_cutoff(R: float, n_max: int) -> float:
    return (_first_zero(specfun.ZeroKind.PSI, n_max + 1) / R) ** 2


def _check_nmax(n_max: int):
    if n_max < 1 or n_max > specfun.MAX_DEGREE:
        from .errors import DegreeTooLarge
        if n_max > specfun.MAX_DEGREE:
            raise DegreeTooLarge(f"n_max = {n_max} exceeds {specfun.MAX_DEGREE}")
        raise ValueError("n_max must be >= 1")


def maxwell_spectrum(R: float = 1.0, n_max: int = 12, count: int = 10, strict: bool = True) -> List[SpectrumEntry]:
    """Distinct Maxwell eigenvalues of the ball, ascending, with multiplicities."""
    _check_nmax(n_max)
    lam_cut = maxwell_cutoff(R, n_max)
    zcut = math.sqrt(lam_cut) * R
    entries = []
    for n in range(1, n_max + 1):
        for fam, kind in ((Family.TE, specfun.ZeroKind.PSI), (Family.TM, specfun.ZeroKind.PSI_PRIME)):
            for s, z in enumerate(_zeros_below(kind, n, zcut), start=1):
                entries.append(SpectrumEntry((z / R) ** 2, fam, n, s, 2 * n + 1))
    entries.sort(key=lambda e: (e.eigenvalue, e.family.value, e.n))
    if len(entries) < count:
        if strict:
            raise CutoffTooLow(f"only {len(entries)} eigenvalues certified below {lam_cut:.6g}; "
                               f"raise n_max above {n_max}")
    return entries[:count]


def helmholtz_modes(R: float = 1.0, n_max: int = 12, count: int = 10, strict: bool = True) -> List[SpectrumEntry]:
    """Dirichlet-Laplacian eigenvalues (a_{n,s}/R)^2 tagged as gradient modes."""
    if n_max < 0 or n_max > specfun.MAX_DEGREE:
        _check_nmax(n_max)
    lam_cut = helmholtz_cutoff(R, n_max)
    zcut = math.sqrt(lam_cut) * R
    entries = []
    for n in range(0, n_max + 1):
        for s, z in enumerate(_zeros_below(specfun.ZeroKind.PSI, n, zcut), start=1):
            entries.append(SpectrumEntry((z / R) ** 2, Family.GRAD, n, s, 2 * n + 1))
    entries.sort(key=lambda e: (e.eigenvalue, e.n))
    if len(entries) < count and strict:
        raise CutoffTooLow(f"only {len(entries)} Dirichlet eigenvalues certified below {lam_cut:.6g}")
    return entries[:count]


def spectrum_csv(entries: Sequence[SpectrumEntry]) -> str:
    lines = ["lambda,family,n,radial_index,multiplicity"]
    for e in entries:
        lines.append(f"{e.eigenvalue!r},{e.family.value},{e.n},{e.radial_index},{e.multiplicity}")
    return "\n".join(lines) + "\n"


@dataclass
class EigenSpace:
    eigenvalue: float
    modes: List[BallMode]
    gram: np.ndarray = field(repr=False)

    @property
    def multiplicity(self) -> int:
        return len(self.modes)


def gram_matrix(modes: Sequence[BallMode], order: Optional[QuadOrder] = None) -> np.ndarray:
    R = modes[0].radius
    nmax = max(md.n for md in modes)
    q = build_ball_quadrature(R, order or normalization_order(nmax))
    u = mode_arrays(modes, q.nodes)[0]
    return np.einsum("aqi,bqi,q->ab", u, u, q.weights)


def eigenspace(family, n: int, radial_index: int = 1, R: float = 1.0, check: bool = True) -> EigenSpace:
    modes = [make_mode(family, n, m, radial_index, R) for m in range(-n, n + 1)]
    G = gram_matrix(modes)
    if check and np.max(np.abs(G - np.eye(len(modes)))) > 1e-9:
        raise GramNotIdentity(f"eigenspace Gram deviates by {np.max(np.abs(G - np.eye(len(modes)))):.3e}")
    return EigenSpace(modes[0].eigenvalue(), modes, G)


def eigenspace_of(entry: SpectrumEntry, R: float = 1.0) -> EigenSpace:
    return eigenspace(entry.family, entry.n, entry.radial_index, R)
