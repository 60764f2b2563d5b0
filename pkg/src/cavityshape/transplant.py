"""Diffeomorphisms of the ball and covariant Piola transplantation.

Fields are stored as column vectors: the pullback of v under Phi is
u(x) = DPhi(x)^T v(Phi(x)), with DPhi[i, j] = d Phi_i / d x_j.  All point
arguments have shape (..., 3) and results broadcast over the leading axes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from .errors import (DegenerateJacobian, InverseNotConverged,
                     OrientationReversing)
from .specfun import Poly3

DET_FLOOR = 1e-10
FD_STEP = 1e-5
NEWTON_STEPS = 50
MAX_FIELD_DEGREE = 4


def _eye_like(x):
    return np.broadcast_to(np.eye(3), x.shape[:-1] + (3, 3)).copy()


# --------------------------------------------------------------------------
# vector fields


class VectorField:
    """A smooth field R^3 -> R^3 with an analytic Jacobian J[i, j] = dV_i/dx_j."""

    def __call__(self, x):
        raise NotImplementedError

    def jacobian(self, x):
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


class PolynomialField(VectorField):
    """Per-component monomial tables: terms[i] = [(coef, a, b, c), ...]."""

    def __init__(self, terms: Sequence[Sequence[Sequence[float]]]):
        if len(terms) != 3:
            raise ValueError("a polynomial field needs three component tables")
        self.terms = tuple(tuple((float(t[0]), int(t[1]), int(t[2]), int(t[3])) for t in comp)
                           for comp in terms)
        for comp in self.terms:
            for c, a, b, d in comp:
                if min(a, b, d) < 0 or a + b + d > MAX_FIELD_DEGREE:
                    raise ValueError(f"monomial degree ({a}, {b}, {d}) outside 0..{MAX_FIELD_DEGREE}")
        self._polys = []
        for comp in self.terms:
            acc: Dict[tuple, float] = {}
            for c, a, b, d in comp:
                acc[(a, b, d)] = acc.get((a, b, d), 0.0) + c
            self._polys.append(Poly3(acc))
        self._grads = [[p.deriv(j) for j in range(3)] for p in self._polys]

    @classmethod
    def linear(cls, A, b=(0.0, 0.0, 0.0)) -> "PolynomialField":
        A = np.asarray(A, float)
        return cls([[(A[i, j],) + tuple(int(k == j) for k in range(3)) for j in range(3)]
                    + [(float(b[i]), 0, 0, 0)] for i in range(3)])

    @classmethod
    def constant(cls, t) -> "PolynomialField":
        return cls([[(float(t[i]), 0, 0, 0)] for i in range(3)])

    def _eval(self, polys, x):
        x = np.asarray(x, float)
        return np.stack([p(x) if p.terms else np.zeros(x.shape[:-1]) for p in polys], axis=-1)

    def __call__(self, x):
        return self._eval(self._polys, x)

    def jacobian(self, x):
        return np.stack([self._eval(self._grads[i], x) for i in range(3)], axis=-2)

    def to_dict(self) -> dict:
        return {"kind": "polynomial", "terms": [[list(t) for t in comp] for comp in self.terms]}


class TrigField(VectorField):
    """Sum of terms amp * sin(k . x + phase) in a chosen component."""

    def __init__(self, terms: Sequence[Sequence[float]]):
        # each term: (component, amplitude, k1, k2, k3, phase)
        self.terms = tuple((int(t[0]), float(t[1]), float(t[2]), float(t[3]), float(t[4]),
                            float(t[5]) if len(t) > 5 else 0.0) for t in terms)

    def __call__(self, x):
        x = np.asarray(x, float)
        out = np.zeros(x.shape)
        for comp, amp, k1, k2, k3, ph in self.terms:
            out[..., comp] += amp * np.sin(x @ np.array([k1, k2, k3]) + ph)
        return out

    def jacobian(self, x):
        x = np.asarray(x, float)
        out = np.zeros(x.shape + (3,))
        for comp, amp, k1, k2, k3, ph in self.terms:
            k = np.array([k1, k2, k3])
            out[..., comp, :] += (amp * np.cos(x @ k + ph))[..., None] * k
        return out

    def to_dict(self) -> dict:
        return {"kind": "trig", "terms": [list(t) for t in self.terms]}


class IdentityField(VectorField):
    def __call__(self, x):
        return np.array(x, float)

    def jacobian(self, x):
        return _eye_like(np.asarray(x, float))

    def to_dict(self) -> dict:
        return {"kind": "identity"}


class ScaledField(VectorField):
    def __init__(self, base: VectorField, scale: float):
        self.base, self.scale = base, float(scale)

    def __call__(self, x):
        return self.scale * self.base(x)

    def jacobian(self, x):
        return self.scale * self.base.jacobian(x)

    def to_dict(self) -> dict:
        return {"kind": "scaled", "scale": self.scale, "base": self.base.to_dict()}


def field_from_dict(d: dict) -> VectorField:
    kind = d.get("kind", "polynomial")
    if kind == "polynomial":
        return PolynomialField(d["terms"])
    if kind == "trig":
        return TrigField(d["terms"])
    if kind == "identity":
        return IdentityField()
    if kind == "scaled":
        return ScaledField(field_from_dict(d["base"]), d["scale"])
    raise ValueError(f"unknown field kind '{kind}'")


# --------------------------------------------------------------------------
# diffeomorphisms


class Diffeomorphism:
    """Closed-form orientation-preserving map of the closed ball."""

    family = "abstract"

    def map(self, x):
        raise NotImplementedError

    def jacobian(self, x):
        raise NotImplementedError

    def _closed_inverse(self, y):
        return None

    def inverse(self, y):
        y = np.asarray(y, float)
        out = self._closed_inverse(y)
        return out if out is not None else newton_inverse(self, y)

    def params(self) -> dict:
        return {}

    def to_dict(self) -> dict:
        return {"family": self.family, **self.params()}

    def descriptor(self) -> str:
        p = self.params()
        if not p:
            return self.family
        return self.family + "(" + ", ".join(f"{k}={p[k]}" for k in sorted(p)) + ")"

    def det(self, x):
        return np.linalg.det(self.jacobian(x))

    def _validate(self, radius: float = 1.0):
        pts = _check_points(radius)
        det = self.det(pts)
        if np.any(det < -DET_FLOOR):
            raise OrientationReversing(f"{self.descriptor()}: det DPhi < 0 on the ball")
        if np.any(np.abs(det) < DET_FLOOR):
            raise DegenerateJacobian(f"{self.descriptor()}: det DPhi vanishes on the ball")


def _check_points(radius: float):
    from .geomquad import QuadOrder, build_ball_quadrature, build_sphere_surface
    q = build_ball_quadrature(radius, QuadOrder(6, 8, 16))
    s = build_sphere_surface(radius, QuadOrder(6, 8, 16))
    return np.concatenate([q.nodes, s.nodes, np.zeros((1, 3))])


class Identity(Diffeomorphism):
    family = "identity"

    def map(self, x):
        return np.array(x, float)

    def jacobian(self, x):
        return _eye_like(np.asarray(x, float))

    def _closed_inverse(self, y):
        return np.array(y, float)


class Dilation(Diffeomorphism):
    """Phi(x) = (1 + eps) x."""
    family = "dilation"

    def __init__(self, eps: float):
        self.eps = float(eps)
        if 1.0 + self.eps < 0:
            raise OrientationReversing("dilation factor 1+eps is negative")
        if abs(1.0 + self.eps) ** 3 < DET_FLOOR:
            raise DegenerateJacobian("dilation factor 1+eps vanishes")

    def map(self, x):
        return (1.0 + self.eps) * np.asarray(x, float)

    def jacobian(self, x):
        return (1.0 + self.eps) * _eye_like(np.asarray(x, float))

    def _closed_inverse(self, y):
        return y / (1.0 + self.eps)

    def params(self):
        return {"eps": self.eps}


class Translation(Diffeomorphism):
    family = "translation"

    def __init__(self, t):
        self.t = np.asarray(t, float).reshape(3)

    def map(self, x):
        return np.asarray(x, float) + self.t

    def jacobian(self, x):
        return _eye_like(np.asarray(x, float))

    def _closed_inverse(self, y):
        return y - self.t

    def params(self):
        return {"t": [float(v) for v in self.t]}


class Linear(Diffeomorphism):
    """Phi(x) = A x + b with det A > 0."""
    family = "linear"

    def __init__(self, A, b=(0.0, 0.0, 0.0)):
        self.A = np.asarray(A, float).reshape(3, 3)
        self.b = np.asarray(b, float).reshape(3)
        d = np.linalg.det(self.A)
        if d < -DET_FLOOR:
            raise OrientationReversing(f"det A = {d:.3e} < 0")
        if abs(d) < DET_FLOOR:
            raise DegenerateJacobian(f"det A = {d:.3e}")
        self._Ainv = np.linalg.inv(self.A)

    def map(self, x):
        return np.asarray(x, float) @ self.A.T + self.b

    def jacobian(self, x):
        x = np.asarray(x, float)
        return np.broadcast_to(self.A, x.shape[:-1] + (3, 3)).copy()

    def _closed_inverse(self, y):
        return (y - self.b) @ self._Ainv.T

    def params(self):
        return {"A": self.A.tolist(), "b": self.b.tolist()}


class Displacement(Diffeomorphism):
    """Phi(x) = x + eps V(x) with a polynomial or trigonometric V."""
    family = "displacement"

    def __init__(self, field: VectorField, eps: float, radius: float = 1.0):
        self.field = field
        self.eps = float(eps)
        self._validate(radius)

    def map(self, x):
        x = np.asarray(x, float)
        return x + self.eps * self.field(x)

    def jacobian(self, x):
        x = np.asarray(x, float)
        return _eye_like(x) + self.eps * self.field.jacobian(x)

    def params(self):
        return {"eps": self.eps, "field": self.field.to_dict()}

    def descriptor(self) -> str:
        return f"displacement(eps={self.eps})"


def newton_inverse(phi: Diffeomorphism, y, tol: float = 1e-14):
    """Damped Newton for Phi(x) = y starting from x = y."""
    y = np.asarray(y, float)
    x = y.copy()
    res = phi.map(x) - y
    rn = np.linalg.norm(res, axis=-1)
    scale = 1.0 + np.linalg.norm(y, axis=-1)
    for _ in range(NEWTON_STEPS):
        if np.all(rn <= tol * scale):
            return x
        step = np.linalg.solve(phi.jacobian(x), res[..., None])[..., 0]
        t = np.ones(rn.shape)
        for _ in range(30):
            xn = x - t[..., None] * step
            resn = phi.map(xn) - y
            rnn = np.linalg.norm(resn, axis=-1)
            bad = rnn > rn * (1 - 1e-4 * t) + tol * scale
            if not np.any(bad):
                break
            t = np.where(bad, 0.5 * t, t)
        x, res, rn = xn, resn, rnn
    if np.all(rn <= 1e3 * tol * scale):
        return x
    raise InverseNotConverged(f"Newton inverse residual {rn.max():.3e} after {NEWTON_STEPS} steps")


def diffeomorphism_from_dict(d: dict, radius: float = 1.0) -> Diffeomorphism:
    fam = d.get("family", "identity")
    if fam == "identity":
        return Identity()
    if fam == "dilation":
        return Dilation(d.get("eps", 0.0))
    if fam == "translation":
        return Translation(d.get("t", [0.0, 0.0, 0.0]))
    if fam == "linear":
        return Linear(d["A"], d.get("b", [0.0, 0.0, 0.0]))
    if fam == "displacement":
        return Displacement(field_from_dict(d["field"]), d.get("eps", 0.0), radius)
    raise ValueError(f"unknown diffeomorphism family '{fam}'")


@dataclass(frozen=True)
class ShapeFamily:
    """One-parameter family Phi_eps with Phi_0 = id and velocity V = dPhi/deps."""
    kind: str
    velocity: VectorField
    radius: float = 1.0

    @classmethod
    def dilation(cls, radius: float = 1.0):
        return cls("dilation", IdentityField(), radius)

    @classmethod
    def translation(cls, t, radius: float = 1.0):
        return cls("translation", PolynomialField.constant(t), radius)

    @classmethod
    def displacement(cls, field: VectorField, radius: float = 1.0):
        return cls("displacement", field, radius)

    def at(self, eps: float) -> Diffeomorphism:
        if eps == 0.0:
            return Identity()
        if self.kind == "dilation":
            return Dilation(eps)
        if self.kind == "translation":
            return Translation(eps * self.velocity(np.zeros(3)))
        return Displacement(self.velocity, eps, self.radius)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "velocity": self.velocity.to_dict(), "radius": self.radius}

    @classmethod
    def from_dict(cls, d: dict) -> "ShapeFamily":
        kind = d["kind"]
        if kind == "dilation":
            return cls.dilation(d.get("radius", 1.0))
        return cls(kind, field_from_dict(d["velocity"]), d.get("radius", 1.0))

    def descriptor(self) -> str:
        return self.kind


# --------------------------------------------------------------------------
# Piola transforms and kernels


@dataclass(frozen=True)
class VectorFieldSample:
    value: np.ndarray
    curl: np.ndarray
    divergence: np.ndarray


@dataclass(frozen=True)
class TransplantKernels:
    G: np.ndarray        # DPhi^T DPhi / |det|
    R_w: np.ndarray      # DPhi^-1 DPhi^-T |det|
    det: np.ndarray
    inv_jac: np.ndarray


def _inv_det(J):
    det = np.linalg.det(J)
    if np.any(np.abs(det) < DET_FLOOR):
        raise DegenerateJacobian(f"|det DPhi| = {np.min(np.abs(det)):.3e}")
    return np.linalg.inv(J), det


def kernels_from_jacobian(J) -> TransplantKernels:
    Jinv, det = _inv_det(J)
    ad = np.abs(det)[..., None, None]
    G = np.swapaxes(J, -1, -2) @ J / ad
    R = Jinv @ np.swapaxes(Jinv, -1, -2) * ad
    return TransplantKernels(G, R, det, Jinv)


def kernel_at(phi: Diffeomorphism, x) -> TransplantKernels:
    return kernels_from_jacobian(phi.jacobian(np.asarray(x, float)))


def piola_pullback(v: Callable, phi: Diffeomorphism) -> Callable:
    """u(x) = DPhi(x)^T v(Phi(x))."""
    def u(x):
        x = np.asarray(x, float)
        return np.einsum("...ji,...j->...i", phi.jacobian(x), v(phi.map(x)))
    return u


def piola_pushforward(u: Callable, phi: Diffeomorphism) -> Callable:
    """v(y) = DPhi(x)^-T u(x) with x = Phi^-1(y)."""
    def v(y):
        x = phi.inverse(np.asarray(y, float))
        J = phi.jacobian(x)
        return np.linalg.solve(np.swapaxes(J, -1, -2), u(x)[..., None])[..., 0]
    return v


def pushforward_values(J, u):
    """DPhi^-T u for arrays of Jacobians and values at matching points."""
    return np.linalg.solve(np.swapaxes(J, -1, -2), np.asarray(u)[..., None])[..., 0]


def transform_curl(sample, phi: Diffeomorphism, x):
    """(curl_y v)(Phi(x)) = DPhi curl_x u / det DPhi."""
    curl = sample.curl if isinstance(sample, VectorFieldSample) else np.asarray(sample, float)
    J = phi.jacobian(np.asarray(x, float))
    det = np.linalg.det(J)
    if np.any(np.abs(det) < DET_FLOOR):
        raise DegenerateJacobian(f"|det DPhi| = {np.min(np.abs(det)):.3e}")
    return np.einsum("...ij,...j->...i", J, curl) / det[..., None]


def weight_matrix(phi: Diffeomorphism, x):
    """W = DPhi^-1 DPhi^-T det DPhi (symmetric)."""
    Jinv, det = _inv_det(phi.jacobian(x))
    return Jinv @ np.swapaxes(Jinv, -1, -2) * det[..., None, None]


def weight_divergence(phi: Diffeomorphism, x, step: float = FD_STEP):
    """d_j = sum_i d_i W_ij by centered differences."""
    x = np.asarray(x, float)
    out = np.zeros(x.shape)
    for i in range(3):
        e = np.zeros(3)
        e[i] = step
        dW = (weight_matrix(phi, x + e) - weight_matrix(phi, x - e)) / (2 * step)
        out += dW[..., i, :]
    return out


def transplanted_divergence(u, du, phi: Diffeomorphism, x, step: float = FD_STEP, W=None, dW=None):
    """N(Phi, u) = div(W u), W = DPhi^-1 DPhi^-T det, by the product rule.

    ``du[..., i, j] = d u_j / d x_i``.
    """
    x = np.asarray(x, float)
    if W is None:
        W = weight_matrix(phi, x)
    if dW is None:
        dW = weight_divergence(phi, x, step)
    return np.einsum("...ij,...ij->...", du, W) + np.einsum("...j,...j->...", u, dW)


def transform_div(u: Callable, phi: Diffeomorphism, x, step: float = FD_STEP):
    """(div_y v)(Phi(x)) = div_x[W u] / det DPhi, outer divergence by differences."""
    x = np.asarray(x, float)
    acc = np.zeros(x.shape[:-1])
    for i in range(3):
        e = np.zeros(3)
        e[i] = step
        bp = np.einsum("...ij,...j->...i", weight_matrix(phi, x + e), u(x + e))
        bm = np.einsum("...ij,...j->...i", weight_matrix(phi, x - e), u(x - e))
        acc += (bp[..., i] - bm[..., i]) / (2 * step)
    det = np.linalg.det(phi.jacobian(x))
    if np.any(np.abs(det) < DET_FLOOR):
        raise DegenerateJacobian(f"|det DPhi| = {np.min(np.abs(det)):.3e}")
    return acc / det


def rphi(phi: Diffeomorphism, x):
    """R_Phi = DPhi^-1 DPhi^-T."""
    Jinv, _ = _inv_det(phi.jacobian(np.asarray(x, float)))
    return Jinv @ np.swapaxes(Jinv, -1, -2)


class _Perturbed(Diffeomorphism):
    """Phi + t Psi, used by the symmetric-difference oracles."""
    family = "perturbed"

    def __init__(self, base: Diffeomorphism, psi: VectorField, t: float):
        self.base, self.psi, self.t = base, psi, float(t)

    def map(self, x):
        return self.base.map(x) + self.t * self.psi(x)

    def jacobian(self, x):
        return self.base.jacobian(x) + self.t * self.psi.jacobian(x)


def perturbed(base: Diffeomorphism, psi: VectorField, t: float) -> Diffeomorphism:
    return _Perturbed(base, psi, t)


def det_derivative(phi: Diffeomorphism, psi: VectorField, x):
    """d/dt det D(Phi + t Psi) at t = 0 = det DPhi tr(DPsi DPhi^-1)."""
    x = np.asarray(x, float)
    Jinv, det = _inv_det(phi.jacobian(x))
    Z = psi.jacobian(x) @ Jinv
    return det * np.trace(Z, axis1=-2, axis2=-1)


def rphi_derivative(phi: Diffeomorphism, psi: VectorField, x):
    """d/dt R_{Phi + t Psi} at t = 0 = -DPhi^-1 (Z + Z^T) DPhi^-T, Z = DPsi DPhi^-1."""
    x = np.asarray(x, float)
    Jinv, _ = _inv_det(phi.jacobian(x))
    Z = psi.jacobian(x) @ Jinv
    return -Jinv @ (Z + np.swapaxes(Z, -1, -2)) @ np.swapaxes(Jinv, -1, -2)
