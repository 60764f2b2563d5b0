"""Boundary-integral shape derivatives of multiple eigenvalues.

For an orthonormal eigenspace {E_i} of eigenvalue lam and a boundary
velocity zeta, the Rellich-Nagy matrix is

    M_ij = int (lam E_i . E_j - curl E_i . curl E_j) (zeta . nu) dsigma.

Its eigenvalues are the one-sided derivatives of the branches splitting from
lam; its trace drives the derivative of every elementary symmetric function
of the cluster.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Optional, Sequence

import numpy as np

from . import ballmodes
from .errors import GramNotIdentity
from .geomquad import SurfacePatchSet
from .transplant import VectorField

GRAM_TOL = 1e-9


# --------------------------------------------------------------------------
# symmetric functions


def elementary_symmetric(values: Sequence[float], s: int) -> float:
    """e_s(values) by the product expansion of prod(1 + v t)."""
    v = list(map(float, values))
    if not 1 <= s <= len(v):
        raise ValueError(f"s must lie in 1..{len(v)}")
    e = [1.0] + [0.0] * len(v)
    for x in v:
        for k in range(len(v), 0, -1):
            e[k] += x * e[k - 1]
    return e[s]


def hat_symmetric(values: Sequence[float], s: int) -> float:
    """Hat variant: e_s of (lam + 1)."""
    return elementary_symmetric([x + 1.0 for x in values], s)


def symmetric_from_hat(hats: Sequence[float], m: int, s: int) -> float:
    """Lambda_s = sum_k (-1)^(s-k) C(m-k, s-k) hat_k, with hat_0 = 1.

    ``hats[k-1]`` holds hat_k for k = 1..m.
    """
    total = 0.0
    for k in range(0, s + 1):
        hk = 1.0 if k == 0 else hats[k - 1]
        total += (-1) ** (s - k) * math.comb(m - k, s - k) * hk
    return total


def hat_from_symmetric(lams: Sequence[float], m: int, s: int) -> float:
    """Inverse relation: hat_s = sum_k C(m-k, s-k) Lambda_k."""
    total = 0.0
    for k in range(0, s + 1):
        lk = 1.0 if k == 0 else lams[k - 1]
        total += math.comb(m - k, s - k) * lk
    return total


def brute_force_symmetric(values: Sequence[float], s: int) -> float:
    return float(sum(np.prod(c) for c in combinations(values, s)))


@dataclass(frozen=True)
class SymmetricFunctionSet:
    values: tuple
    lam: tuple      # Lambda_s, s = 1..m
    hat: tuple      # hat Lambda_s

    @classmethod
    def of(cls, values: Sequence[float]) -> "SymmetricFunctionSet":
        m = len(values)
        return cls(tuple(values), tuple(elementary_symmetric(values, s) for s in range(1, m + 1)),
                   tuple(hat_symmetric(values, s) for s in range(1, m + 1)))


# --------------------------------------------------------------------------
# Hadamard matrix


@dataclass(frozen=True)
class HadamardMatrix:
    M: np.ndarray
    eigenvalue: float
    multiplicity: int

    def to_dict(self) -> dict:
        return {"eigenvalue": self.eigenvalue, "multiplicity": self.multiplicity,
                "matrix": self.M.tolist()}


def normal_velocity(zeta, surface: SurfacePatchSet) -> np.ndarray:
    """zeta . nu at the surface nodes.

    ``zeta`` is an array of values at the nodes, or a VectorField defined on
    the reference ball (its values at the parameter points are the transported
    velocity at the mapped nodes).
    """
    if isinstance(zeta, VectorField) or callable(zeta):
        z = zeta(surface.base_nodes)
    else:
        z = np.broadcast_to(np.asarray(zeta, float), surface.nodes.shape)
    return np.einsum("si,si->s", z, surface.normals)


def hadamard_matrix(E, curlE, surface: SurfacePatchSet, lam: float, zeta,
                    gram: Optional[np.ndarray] = None) -> HadamardMatrix:
    E = np.asarray(E, float)
    curlE = np.asarray(curlE, float)
    if gram is not None:
        dev = np.max(np.abs(np.asarray(gram) - np.eye(len(gram))))
        if dev > GRAM_TOL:
            raise GramNotIdentity(f"eigenspace Gram deviates from identity by {dev:.3e}")
    zn = normal_velocity(zeta, surface) * surface.weights
    M = lam * np.einsum("isk,jsk,s->ij", E, E, zn) - np.einsum("isk,jsk,s->ij", curlE, curlE, zn)
    M = 0.5 * (M + M.T)
    return HadamardMatrix(M, float(lam), E.shape[0])


def ball_hadamard(space: ballmodes.EigenSpace, surface: SurfacePatchSet, zeta) -> HadamardMatrix:
    """Hadamard matrix of an analytic ball eigenspace."""
    E, C, _ = ballmodes.mode_arrays(space.modes, surface.nodes)
    return hadamard_matrix(E, C, surface, space.eigenvalue, zeta, gram=space.gram)


def symmetric_function_derivative(lam: float, F: int, s: int, M: HadamardMatrix) -> float:
    """d Lambda_{F,s} = C(|F|-1, s-1) lam^(s-1) trace(M)."""
    if not 1 <= s <= F:
        raise ValueError(f"s must lie in 1..{F}")
    return math.comb(F - 1, s - 1) * lam ** (s - 1) * float(np.trace(M.M))


def nagy_slopes(M: HadamardMatrix) -> np.ndarray:
    return np.sort(np.linalg.eigvalsh(M.M))


def volume_derivative(zeta, surface: SurfacePatchSet) -> float:
    return float(normal_velocity(zeta, surface) @ surface.weights)


def perimeter_derivative(zeta, surface: SurfacePatchSet) -> float:
    return float((surface.mean_curvature * normal_velocity(zeta, surface)) @ surface.weights)


def shape_derivative_report(M: HadamardMatrix) -> dict:
    m, lam = M.multiplicity, M.eigenvalue
    return {
        "matrix": M.M.tolist(),
        "eigenvalue": lam,
        "multiplicity": m,
        "slopes": nagy_slopes(M).tolist(),
        "symmetric_function_derivatives": [symmetric_function_derivative(lam, m, s, M)
                                           for s in range(1, m + 1)],
    }


# --------------------------------------------------------------------------
# discrete eigenspaces on mapped shapes


def pushforward_eigenspace(solution, indices, basis, phi, surface: SurfacePatchSet):
    """Fields and curls of discrete eigenvectors on Phi(boundary).

    The Galerkin eigenvectors are B-orthonormal, i.e. orthonormal in L2 of
    the mapped domain after the Piola pushforward; the returned Gram is X^T B X.
    Curls come from the analytic basis curls, so no differencing is involved.
    """
    X = solution.eigenvectors[:, list(indices)]
    U, C, _ = ballmodes.mode_arrays(basis.modes, surface.base_nodes)
    u = np.einsum("nk,nsi->ksi", X, U)
    c = np.einsum("nk,nsi->ksi", X, C)
    J = phi.jacobian(surface.base_nodes)
    det = np.linalg.det(J)
    Jt = np.swapaxes(J, -1, -2)
    E = np.linalg.solve(Jt[None], u[..., None])[..., 0]
    curlE = np.einsum("sij,ksj->ksi", J, c) / det[None, :, None]
    return E, curlE
