"""Spherical Bessel and Riccati-Bessel functions, real spherical harmonics,
solid harmonic polynomials and zero finding for the ball wavenumber equations.

All functions accept scalars or numpy arrays for the argument and return
arrays of matching shape (0-d arrays collapse to Python floats).
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Dict, Iterable, Tuple

import numpy as np
from numpy.polynomial import legendre as _leg

from .errors import ConvergenceFailure, DegreeTooLarge, PoleEvaluation

MAX_DEGREE = 12
# Orders above MAX_DEGREE are reachable internally (radial derivatives of the
# Debye potentials need n + 3), never through the public entry points.
_INTERNAL_MAX = 24
_SERIES_CUTOFF = 1.0
_SERIES_TERMS = 24


def _check_degree(n: int, limit: int = MAX_DEGREE) -> None:
    if n < 0:
        raise ValueError(f"order must be non-negative, got {n}")
    if n > limit:
        raise DegreeTooLarge(f"order {n} exceeds the supported maximum {limit}")


def _out(a):
    a = np.asarray(a)
    return float(a) if a.ndim == 0 else a


def _series_reduced(L: int, z: np.ndarray) -> np.ndarray:
    """j_m(z)/z^m for m = 0..L from the power series (z small)."""
    out = np.zeros((L + 1,) + z.shape)
    u = -0.5 * z * z
    for m in range(L + 1):
        dfact = 1.0
        for i in range(1, 2 * m + 2, 2):
            dfact *= i
        term = np.full(z.shape, 1.0 / dfact)
        acc = term.copy()
        for k in range(1, _SERIES_TERMS):
            term = term * u / (k * (2 * m + 2 * k + 1))
            acc = acc + term
        out[m] = acc
    return out


def _upward(L: int, z: np.ndarray) -> np.ndarray:
    out = np.empty((L + 1,) + z.shape)
    s, c = np.sin(z), np.cos(z)
    out[0] = s / z
    if L >= 1:
        out[1] = s / (z * z) - c / z
    for n in range(1, L):
        out[n + 1] = (2 * n + 1) / z * out[n] - out[n - 1]
    return out


def _miller(L: int, z: np.ndarray) -> np.ndarray:
    """Downward recurrence normalized against the closed forms of j_0, j_1."""
    L = max(L, 1)
    start = L + 30 + int(np.ceil(z.max()))
    out = np.empty((L + 1,) + z.shape)
    f_up = np.zeros(z.shape)
    f = np.full(z.shape, 1e-30)
    for n in range(start, 0, -1):
        f_down = (2 * n + 1) / z * f - f_up
        if n <= L:
            out[n] = f
        f_up, f = f, f_down
        big = np.abs(f) > 1e250
        if np.any(big):
            scale = np.where(big, 1e-250, 1.0)
            f, f_up = f * scale, f_up * scale
            out *= scale
    out[0] = f
    s, c = np.sin(z), np.cos(z)
    j0 = s / z
    j1 = s / (z * z) - c / z
    norm = np.where(np.abs(j0) >= np.abs(j1), j0 / out[0], j1 / out[1])
    return out * norm


def _jn_table(L: int, z) -> np.ndarray:
    """j_n(z) for n = 0..L, shape (L+1,) + z.shape."""
    _check_degree(L, _INTERNAL_MAX)
    z = np.asarray(z, dtype=float)
    if np.any(z < 0):
        raise ValueError("argument must be non-negative")
    flat = z.ravel()
    out = np.empty((L + 1, flat.size))
    small = flat <= _SERIES_CUTOFF
    if np.any(small):
        zs = flat[small]
        red = _series_reduced(L, zs)
        out[:, small] = red * zs[None, :] ** np.arange(L + 1)[:, None]
    up = (~small) & (flat > L)
    if np.any(up):
        out[:, up] = _upward(L, flat[up])
    mid = (~small) & ~up
    if np.any(mid):
        out[:, mid] = _miller(L, flat[mid])[: L + 1]
    return out.reshape((L + 1,) + z.shape)


def reduced_bessel_table(L: int, z) -> np.ndarray:
    """F_m(z) = j_m(z)/z^m for m = 0..L; regular at z = 0."""
    _check_degree(L, _INTERNAL_MAX)
    z = np.asarray(z, dtype=float)
    flat = z.ravel()
    out = np.empty((L + 1, flat.size))
    small = flat <= _SERIES_CUTOFF
    if np.any(small):
        out[:, small] = _series_reduced(L, flat[small])
    if np.any(~small):
        zb = flat[~small]
        out[:, ~small] = _jn_table(L, zb) / zb[None, :] ** np.arange(L + 1)[:, None]
    return out.reshape((L + 1,) + z.shape)


def spherical_bessel(n: int, z):
    """Spherical Bessel function of the first kind j_n(z), 0 <= n <= 12."""
    _check_degree(n)
    return _out(_jn_table(n, z)[n])


def _djn(n: int, z):
    t = _jn_table(n + 1, z)
    if n == 0:
        return -t[1]
    return (n * t[n - 1] - (n + 1) * t[n + 1]) / (2 * n + 1)


def _psi(n: int, z):
    z = np.asarray(z, dtype=float)
    return _out(z * _jn_table(n, z)[n])


def _dpsi(n: int, z):
    z = np.asarray(z, dtype=float)
    return _out(_jn_table(n, z)[n] + z * _djn(n, z))


def _djn_out(n: int, z):
    return _out(_djn(n, z))


def spherical_bessel_deriv(n: int, z):
    """j_n'(z), from the three-term identity (no 1/z)."""
    _check_degree(n)
    return _out(_djn(n, z))


def riccati_bessel(n: int, z):
    """psi_n(z) = z j_n(z)."""
    _check_degree(n)
    return _psi(n, z)


def riccati_bessel_deriv(n: int, z):
    """psi_n'(z) = j_n(z) + z j_n'(z)."""
    _check_degree(n)
    return _dpsi(n, z)


# --------------------------------------------------------------------------
# zeros


class ZeroKind(str, enum.Enum):
    PSI = "PsiZero"              # psi_n(z) = 0, equivalently j_n(z) = 0
    PSI_PRIME = "PsiPrimeZero"   # psi_n'(z) = 0 (TM wavenumbers)
    J_PRIME = "JPrimeZero"       # j_n'(z) = 0


_ZERO_FUNCS: Dict[ZeroKind, Callable[[int, float], float]] = {
    ZeroKind.PSI: _psi,
    ZeroKind.PSI_PRIME: _dpsi,
    ZeroKind.J_PRIME: _djn_out,
}


@dataclass(frozen=True)
class ZeroTable:
    kind: ZeroKind
    n: int
    radius: float
    zeros: Tuple[float, ...]

    @property
    def arguments(self) -> Tuple[float, ...]:
        """Dimensionless zeros k*R."""
        return tuple(k * self.radius for k in self.zeros)


def _bisect(f, a: float, b: float, fa: float, max_iter: int = 200) -> float:
    for _ in range(max_iter):
        mid = 0.5 * (a + b)
        if mid <= a or mid >= b:
            return mid
        fm = f(mid)
        if fm == 0.0:
            return mid
        if (fm > 0) == (fa > 0):
            a, fa = mid, fm
        else:
            b = mid
    raise ConvergenceFailure(f"bisection did not converge on [{a}, {b}]")


def scan_step(n: int) -> float:
    return math.pi / 8.0 / (1.0 + n / 4.0)


def dimensionless_zeros(kind, n: int, count: int) -> Tuple[float, ...]:
    kind = ZeroKind(kind)
    _check_degree(n)
    if count < 1:
        raise ValueError("count must be >= 1")
    return _dimensionless_zeros(kind, n, count)


@lru_cache(maxsize=512)
def _dimensionless_zeros(kind: ZeroKind, n: int, count: int) -> Tuple[float, ...]:
    func = _ZERO_FUNCS[kind]

    def f(z):
        return func(n, z)

    h = scan_step(n)
    found = []
    lo, span = 0.05, max(8.0, 4.0 * count + n)
    while len(found) < count:
        zs = lo + h * np.arange(int(span / h) + 1)
        fs = np.asarray(func(n, zs))
        for i in range(zs.size - 1):
            if len(found) == count:
                break
            fa, fb = fs[i], fs[i + 1]
            if fa == 0.0:
                found.append(float(zs[i]))
            elif (fa > 0) != (fb > 0) and fb != 0.0:
                root = _bisect(f, float(zs[i]), float(zs[i + 1]), float(fa))
                if abs(f(root)) > 1e-13:
                    raise ConvergenceFailure(f"|f| too large at bracketed root {root}")
                found.append(root)
        lo = float(zs[-1])
    return tuple(found)


def find_wavenumbers(kind, n: int, R: float, count: int) -> ZeroTable:
    """First ``count`` positive wavenumbers k with f_n(kR) = 0."""
    if R <= 0:
        raise ValueError("radius must be positive")
    kind = ZeroKind(kind)
    zs = dimensionless_zeros(kind, n, count)
    return ZeroTable(kind, n, float(R), tuple(z / R for z in zs))


# --------------------------------------------------------------------------
# real spherical harmonics


@dataclass(frozen=True)
class HarmonicIndex:
    n: int
    m: int

    def __post_init__(self):
        if self.n < 0 or abs(self.m) > self.n:
            raise ValueError(f"invalid harmonic index (n={self.n}, m={self.m})")


def harmonic_indices(n: int) -> Iterable[HarmonicIndex]:
    return [HarmonicIndex(n, m) for m in range(-n, n + 1)]


def _as_index(idx) -> HarmonicIndex:
    if isinstance(idx, HarmonicIndex):
        return idx
    n, m = idx
    return HarmonicIndex(int(n), int(m))


def harmonic_norm(n: int, m: int) -> float:
    am = abs(m)
    c = (2 * n + 1) / (4 * math.pi) * math.factorial(n - am) / math.factorial(n + am)
    c = math.sqrt(c)
    return c * math.sqrt(2.0) if m != 0 else c


def _assoc_legendre(n: int, m: int, t: np.ndarray) -> np.ndarray:
    """P_n^m(t) without the Condon-Shortley phase, m >= 0."""
    s = np.sqrt(np.clip(1.0 - t * t, 0.0, None))
    dfact = 1.0
    for i in range(1, 2 * m, 2):
        dfact *= i
    p_mm = dfact * s ** m
    if n == m:
        return p_mm
    p_prev, p = p_mm, t * (2 * m + 1) * p_mm
    for k in range(m + 2, n + 1):
        p_prev, p = p, (t * (2 * k - 1) * p - (k + m - 1) * p_prev) / (k - m)
    return p


def _azimuth(m: int, phi):
    if m > 0:
        return np.cos(m * phi)
    if m < 0:
        return np.sin(-m * phi)
    return np.ones_like(phi)


def _azimuth_d(m: int, phi):
    if m > 0:
        return -m * np.sin(m * phi)
    if m < 0:
        return -m * np.cos(-m * phi)
    return np.zeros_like(phi)


def real_spherical_harmonic(idx, theta, phi):
    """Orthonormal real harmonic Y_n^m(theta, phi); m<0 selects sin|m|phi."""
    idx = _as_index(idx)
    _check_degree(idx.n, _INTERNAL_MAX)
    theta, phi = np.broadcast_arrays(np.asarray(theta, float), np.asarray(phi, float))
    p = _assoc_legendre(idx.n, abs(idx.m), np.cos(theta))
    return _out(harmonic_norm(idx.n, idx.m) * p * _azimuth(idx.m, phi))


def _check_poles(theta):
    s = np.sin(theta)
    if np.any(np.abs(s) < 1e-300) or np.any(theta <= 0) or np.any(theta >= math.pi):
        raise PoleEvaluation("value requires 1/sin(theta) at a pole")
    return s


def d_theta(idx, theta, phi):
    """dY/dtheta; uses a 1/sin(theta) recurrence so poles are refused."""
    idx = _as_index(idx)
    n, am = idx.n, abs(idx.m)
    theta, phi = np.broadcast_arrays(np.asarray(theta, float), np.asarray(phi, float))
    s = _check_poles(theta)
    t = np.cos(theta)
    p = _assoc_legendre(n, am, t)
    q = _assoc_legendre(n - 1, am, t) if n - 1 >= am else np.zeros_like(t)
    dp = (n * t * p - (n + am) * q) / s
    return _out(harmonic_norm(n, idx.m) * dp * _azimuth(idx.m, phi))


def d_phi(idx, theta, phi):
    """dY/dphi (finite on the axis)."""
    idx = _as_index(idx)
    theta, phi = np.broadcast_arrays(np.asarray(theta, float), np.asarray(phi, float))
    p = _assoc_legendre(idx.n, abs(idx.m), np.cos(theta))
    return _out(harmonic_norm(idx.n, idx.m) * p * _azimuth_d(idx.m, phi))


def d_phi_over_sin(idx, theta, phi):
    """(1/sin theta) dY/dphi, the azimuthal gradient component."""
    theta = np.asarray(theta, float)
    s = _check_poles(theta)
    return _out(np.asarray(d_phi(idx, theta, phi)) / s)


# --------------------------------------------------------------------------
# polynomials in three variables


class Poly3:
    """Sparse polynomial in (x, y, z): {(a, b, c): coefficient}."""

    __slots__ = ("terms",)

    def __init__(self, terms=None):
        self.terms = {k: float(v) for k, v in (terms or {}).items() if v != 0.0}

    @property
    def degree(self) -> int:
        return max((sum(k) for k in self.terms), default=0)

    def deriv(self, axis: int) -> "Poly3":
        out: Dict[tuple, float] = {}
        for k, v in self.terms.items():
            if k[axis] == 0:
                continue
            nk = list(k)
            nk[axis] -= 1
            nk = tuple(nk)
            out[nk] = out.get(nk, 0.0) + v * k[axis]
        return Poly3(out)

    def __add__(self, other: "Poly3") -> "Poly3":
        out = dict(self.terms)
        for k, v in other.terms.items():
            out[k] = out.get(k, 0.0) + v
        return Poly3(out)

    def __mul__(self, other):
        if isinstance(other, Poly3):
            out: Dict[tuple, float] = {}
            for k1, v1 in self.terms.items():
                for k2, v2 in other.terms.items():
                    k = (k1[0] + k2[0], k1[1] + k2[1], k1[2] + k2[2])
                    out[k] = out.get(k, 0.0) + v1 * v2
            return Poly3(out)
        return Poly3({k: v * other for k, v in self.terms.items()})

    __rmul__ = __mul__

    def __call__(self, points) -> np.ndarray:
        pts = np.asarray(points, float)
        d = self.degree
        return monomials(pts, d) @ self.vector(d)

    def vector(self, degree: int) -> np.ndarray:
        index = monomial_index(degree)
        v = np.zeros(len(index))
        for k, c in self.terms.items():
            v[index[k]] = c
        return v


@lru_cache(maxsize=None)
def monomial_exponents(degree: int) -> Tuple[Tuple[int, int, int], ...]:
    return tuple((a, b, t - a - b) for t in range(degree + 1)
                 for a in range(t, -1, -1) for b in range(t - a, -1, -1))


@lru_cache(maxsize=None)
def monomial_index(degree: int) -> Dict[Tuple[int, int, int], int]:
    return {e: i for i, e in enumerate(monomial_exponents(degree))}


def monomials(points: np.ndarray, degree: int) -> np.ndarray:
    """Matrix of all monomials of total degree <= degree at points (..., 3)."""
    pts = np.asarray(points, float)
    pw = np.empty((3, degree + 1) + pts.shape[:-1])
    pw[:, 0] = 1.0
    for p in range(1, degree + 1):
        pw[:, p] = pw[:, p - 1] * np.moveaxis(pts, -1, 0)
    ex = np.array(monomial_exponents(degree))
    out = pw[0][ex[:, 0]] * pw[1][ex[:, 1]] * pw[2][ex[:, 2]]
    return np.moveaxis(out, 0, -1)


@lru_cache(maxsize=None)
def solid_harmonic(n: int, m: int) -> Poly3:
    """Homogeneous harmonic polynomial equal to rho^n Y_n^m(theta, phi)."""
    _check_degree(n, _INTERNAL_MAX)
    am = abs(m)
    # Re / Im of (x + i y)^|m|
    ang: Dict[tuple, float] = {}
    for k in range(am + 1):
        c = math.comb(am, k)
        if m >= 0 and k % 2 == 0:
            ang[(am - k, k, 0)] = c * (-1) ** (k // 2)
        elif m < 0 and k % 2 == 1:
            ang[(am - k, k, 0)] = c * (-1) ** ((k - 1) // 2)
    # d^|m| P_n / dt^|m| in monomial form
    cheb = _leg.leg2poly(_leg.legder(np.eye(n + 1)[n], am)) if am <= n else np.zeros(1)
    rad: Dict[tuple, float] = {}
    for j, cj in enumerate(cheb):
        if cj == 0.0 or (n - am - j) % 2:
            continue
        p = (n - am - j) // 2
        for i in range(p + 1):
            for l in range(p - i + 1):
                r = p - i - l
                w = math.factorial(p) / (math.factorial(i) * math.factorial(l) * math.factorial(r))
                key = (2 * i, 2 * l, 2 * r + j)
                rad[key] = rad.get(key, 0.0) + cj * w
    return (Poly3(ang) * Poly3(rad)) * harmonic_norm(n, m)
