"""Quadrature on the reference ball and on parameterized boundary surfaces."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Tuple

import numpy as np

from .errors import DegenerateJacobian

DET_FLOOR = 1e-10
CURVATURE_STEP = 1e-5


@dataclass(frozen=True)
class QuadOrder:
    radial: int = 48
    polar: int = 48
    azimuthal: int = 96

    def __post_init__(self):
        for name in ("radial", "polar", "azimuthal"):
            if int(getattr(self, name)) < 4:
                raise ValueError(f"quadrature order '{name}' must be >= 4")

    def doubled(self) -> "QuadOrder":
        return QuadOrder(2 * self.radial, 2 * self.polar, 2 * self.azimuthal)

    def as_tuple(self) -> Tuple[int, int, int]:
        return (self.radial, self.polar, self.azimuthal)

    @classmethod
    def coerce(cls, value) -> "QuadOrder":
        if isinstance(value, QuadOrder):
            return value
        if isinstance(value, dict):
            return cls(**value)
        return cls(*value)


@lru_cache(maxsize=64)
def _gauss(n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def _angles(order: QuadOrder):
    ct, wt = _gauss(order.polar)
    phi = 2.0 * math.pi * np.arange(order.azimuthal) / order.azimuthal
    wphi = np.full(order.azimuthal, 2.0 * math.pi / order.azimuthal)
    return ct, wt, phi, wphi


def unit_vectors(ct, phi):
    """Unit vectors for grids of cos(theta) (polar) and phi (azimuth)."""
    st = np.sqrt(1.0 - ct * ct)
    return np.stack(np.broadcast_arrays(st[:, None] * np.cos(phi)[None, :],
                                        st[:, None] * np.sin(phi)[None, :],
                                        ct[:, None] * np.ones_like(phi)[None, :]), axis=-1)


@dataclass(frozen=True, eq=False)
class BallQuadrature:
    """Tensor rule on the ball; node index = ((i_rho * P) + i_theta) * A + i_phi."""
    radius: float
    order: QuadOrder
    nodes: np.ndarray
    weights: np.ndarray
    rho: np.ndarray
    cos_theta: np.ndarray
    phi: np.ndarray

    @property
    def size(self) -> int:
        return self.weights.size

    def integrate(self, values) -> float:
        """Sum over the last axis of values against the weights."""
        return np.asarray(values) @ self.weights


def build_ball_quadrature(R: float = 1.0, order=QuadOrder()) -> BallQuadrature:
    return _ball_cached(float(R), QuadOrder.coerce(order))


@lru_cache(maxsize=16)
def _ball_cached(R: float, order: QuadOrder) -> BallQuadrature:
    xr, wr = _gauss(order.radial)
    rho = 0.5 * R * (xr + 1.0)
    wrho = 0.5 * R * wr * rho * rho
    ct, wt, phi, wphi = _angles(order)
    dirs = unit_vectors(ct, phi)                      # (P, A, 3)
    nodes = rho[:, None, None, None] * dirs[None]
    w = wrho[:, None, None] * wt[None, :, None] * wphi[None, None, :]
    nodes = nodes.reshape(-1, 3)
    w = w.reshape(-1)
    for a in (nodes, w, rho, ct, phi):
        a.setflags(write=False)
    return BallQuadrature(R, order, nodes, w, rho, ct, phi)


@dataclass(frozen=True, eq=False)
class SurfacePatchSet:
    """Boundary rule parameterized over the sphere of radius ``radius``.

    ``base_nodes`` are the parameter points on the reference sphere, so that
    fields living on the reference ball can be evaluated there and pushed
    forward to ``nodes``.
    """
    radius: float
    nodes: np.ndarray
    normals: np.ndarray
    weights: np.ndarray
    mean_curvature: np.ndarray
    base_nodes: np.ndarray
    theta: np.ndarray
    phi: np.ndarray
    base_weights: np.ndarray
    mapping: Optional[object] = field(default=None, repr=False)

    @property
    def size(self) -> int:
        return self.weights.size

    def integrate(self, values) -> float:
        return np.asarray(values) @ self.weights

    @property
    def area(self) -> float:
        return float(self.weights.sum())


def build_sphere_surface(R: float = 1.0, order=QuadOrder()) -> SurfacePatchSet:
    """Gauss-Legendre in cos(theta) times equispaced phi on the sphere of radius R."""
    order = QuadOrder.coerce(order)
    ct, wt, phi, wphi = _angles(order)
    dirs = unit_vectors(ct, phi).reshape(-1, 3)
    w = (R * R * wt[:, None] * wphi[None, :]).reshape(-1)
    theta = np.repeat(np.arccos(ct), phi.size)
    phis = np.tile(phi, ct.size)
    nodes = R * dirs
    return SurfacePatchSet(float(R), nodes, dirs, w, np.full(w.size, 2.0 / R),
                           nodes, theta, phis, w)


def _check_det(det):
    if np.any(np.abs(det) < DET_FLOOR):
        raise DegenerateJacobian(f"|det DPhi| = {np.min(np.abs(det)):.3e} below {DET_FLOOR}")


def _mapped_normal(phi_map, x):
    J = phi_map.jacobian(x)
    det = np.linalg.det(J)
    _check_det(det)
    nu = x / np.linalg.norm(x, axis=-1, keepdims=True)
    v = np.linalg.solve(np.swapaxes(J, -1, -2), nu[..., None])[..., 0]
    return v, det, J


def map_surface(phi_map, base: SurfacePatchSet) -> SurfacePatchSet:
    """Image of a reference sphere rule under a diffeomorphism of the ball."""
    x = base.base_nodes
    v, det, J = _mapped_normal(phi_map, x)
    vn = np.linalg.norm(v, axis=-1)
    normals = v / vn[:, None]
    y = phi_map.map(x)
    centroid = phi_map.map(np.zeros((1, 3)))[0]
    sign = np.where(np.einsum("ij,ij->i", normals, y - centroid) >= 0, 1.0, -1.0)
    normals = normals * sign[:, None]
    weights = base.base_weights * vn * np.abs(det)
    H = _mean_curvature(phi_map, base, J)
    return SurfacePatchSet(base.radius, y, normals, weights, H, base.base_nodes,
                           base.theta, base.phi, base.base_weights, phi_map)


def _sphere_point(R, th, ph):
    st = np.sin(th)
    return R * np.stack([st * np.cos(ph), st * np.sin(ph), np.cos(th)], axis=-1)


def _mean_curvature(phi_map, base: SurfacePatchSet, J) -> np.ndarray:
    """Sum of principal curvatures from the fundamental forms of Phi(x(theta, phi)).

    Tangents are analytic (DPhi times the sphere tangents); derivatives of the
    unit normal are centered differences in the angles.
    """
    R, th, ph = base.radius, base.theta, base.phi
    st, ctt = np.sin(th), np.cos(th)
    x_th = R * np.stack([ctt * np.cos(ph), ctt * np.sin(ph), -st], axis=-1)
    x_ph = R * np.stack([-st * np.sin(ph), st * np.cos(ph), np.zeros_like(st)], axis=-1)
    X_th = np.einsum("nij,nj->ni", J, x_th)
    X_ph = np.einsum("nij,nj->ni", J, x_ph)
    h = CURVATURE_STEP

    def unit_normal(t, p):
        v, _, _ = _mapped_normal(phi_map, _sphere_point(R, t, p))
        return v / np.linalg.norm(v, axis=-1, keepdims=True)

    n_th = (unit_normal(th + h, ph) - unit_normal(th - h, ph)) / (2 * h)
    n_ph = (unit_normal(th, ph + h) - unit_normal(th, ph - h)) / (2 * h)
    E = np.einsum("ni,ni->n", X_th, X_th)
    F = np.einsum("ni,ni->n", X_th, X_ph)
    G = np.einsum("ni,ni->n", X_ph, X_ph)
    L = np.einsum("ni,ni->n", n_th, X_th)
    M = 0.5 * (np.einsum("ni,ni->n", n_th, X_ph) + np.einsum("ni,ni->n", n_ph, X_th))
    N = np.einsum("ni,ni->n", n_ph, X_ph)
    H = (G * L - 2 * F * M + E * N) / (E * G - F * F)
    # the formula above uses the outward normal field; orientation is fixed by det > 0
    return H


def volume(phi_map, ball_quad: BallQuadrature) -> float:
    det = np.linalg.det(phi_map.jacobian(ball_quad.nodes))
    _check_det(det)
    return float(np.abs(det) @ ball_quad.weights)


def perimeter(phi_map, surface: SurfacePatchSet) -> float:
    """Area of Phi(sphere); ``surface`` is the reference sphere rule."""
    v, det, _ = _mapped_normal(phi_map, surface.base_nodes)
    return float((np.linalg.norm(v, axis=-1) * np.abs(det)) @ surface.base_weights)
