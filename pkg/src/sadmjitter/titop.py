"""TITOP building blocks: kinematic transport, rigid N-port hub, clamped
flexible appendage and rotation/axis-alignment transforms.

Wrench buses are ``[F; T]`` and acceleration buses ``[a; omega_dot]``, both
6-wide.  The linearization drops every term quadratic in the hub angular rate.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import NonUnitAxis, SingularMass
from .lti import StateSpaceModel, static_gain


def skew(r) -> np.ndarray:
    x, y, z = np.asarray(r, dtype=float).reshape(3)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def jacobian_transport(r_from_to) -> np.ndarray:
    """6x6 kinematic model moving a velocity/acceleration screw from one node to
    another along ``r_from_to``.  Its transpose moves wrenches the other way."""
    tau = np.eye(6)
    tau[:3, 3:] = -skew(r_from_to)
    return tau


def mass_matrix(mass: float, inertia) -> np.ndarray:
    return sla.block_diag(mass * np.eye(3), np.asarray(inertia, dtype=float))


@dataclass(frozen=True)
class RigidBodyParams:
    mass: float
    inertia: np.ndarray
    r_G: np.ndarray = field(default_factory=lambda: np.zeros(3))
    attachment_points: dict = field(default_factory=dict)

    def __post_init__(self):
        I = np.asarray(self.inertia, dtype=float).reshape(3, 3)
        object.__setattr__(self, "inertia", I)
        object.__setattr__(self, "r_G", np.asarray(self.r_G, dtype=float).reshape(3))
        object.__setattr__(self, "attachment_points",
                           {k: np.asarray(v, dtype=float).reshape(3) for k, v in self.attachment_points.items()})
        if not self.mass > 0:
            raise ValueError("hub mass must be positive")
        if not np.allclose(I, I.T, atol=1e-9 * max(1.0, np.abs(I).max())):
            raise ValueError("hub inertia must be symmetric")
        if np.linalg.eigvalsh(I).min() <= 0:
            raise ValueError("hub inertia must be positive definite")

    def mass_matrix(self) -> np.ndarray:
        return mass_matrix(self.mass, self.inertia)

    def r_GC(self, point: str) -> np.ndarray:
        return self.attachment_points[point] - self.r_G


def rigid_hub_nport(p: RigidBodyParams, points) -> StateSpaceModel:
    """Static N-port hub: wrenches at the attachment points and at G in,
    accelerations of the same nodes out (bordered inverse mass matrix)."""
    points = list(points)
    if len(set(points)) != len(points):
        raise ValueError("attachment points must be distinct")
    M = p.mass_matrix()
    try:
        Minv = np.linalg.inv(M)
    except np.linalg.LinAlgError as exc:
        raise SingularMass("hub mass matrix is singular") from exc
    if np.linalg.cond(M) > 1e14:
        raise SingularMass("hub mass matrix is singular")
    taus = [jacobian_transport(p.r_GC(c)) for c in points] + [np.eye(6)]
    left = np.vstack(taus)
    right = np.hstack([t.T for t in taus])
    D = left @ Minv @ right
    inputs = [(f"W_{c}", 6) for c in points] + [("W_ext", 6)]
    outputs = [(f"qdd_{c}", 6) for c in points] + [("qdd_G", 6)]
    return static_gain(D, inputs, outputs, name="hub")


@dataclass(frozen=True)
class FlexAppendageParams:
    """Clamped appendage data, all expressed in the appendage frame at the
    attachment point P.  ``omega`` in rad/s, ``L`` is modes x 6."""

    omega: np.ndarray
    zeta: np.ndarray
    L: np.ndarray
    mass: float
    inertia: np.ndarray
    r_com: np.ndarray

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.omega, dtype=float))
        z = np.broadcast_to(np.asarray(self.zeta, dtype=float), w.shape).copy()
        L = np.asarray(self.L, dtype=float).reshape(w.size, 6)
        object.__setattr__(self, "omega", w)
        object.__setattr__(self, "zeta", z)
        object.__setattr__(self, "L", L)
        object.__setattr__(self, "inertia", np.asarray(self.inertia, dtype=float).reshape(3, 3))
        object.__setattr__(self, "r_com", np.asarray(self.r_com, dtype=float).reshape(3))
        if np.any(w <= 0):
            raise ValueError("modal frequencies must be positive")
        if np.any((z < 0) | (z >= 1)):
            raise ValueError("modal damping ratios must lie in [0, 1)")
        if self.mass < 0:
            raise ValueError("appendage mass must be nonnegative")

    @property
    def n_modes(self) -> int:
        return self.omega.size

    def static_model(self) -> np.ndarray:
        """Rigid mass matrix of the appendage seen from P."""
        tau = jacobian_transport(self.r_com)
        return tau.T @ mass_matrix(self.mass, self.inertia) @ tau

    def residual_mass(self) -> np.ndarray:
        D0 = self.static_model() - self.L.T @ self.L
        return 0.5 * (D0 + D0.T)


def flex_appendage(p: FlexAppendageParams, name: str = "appendage", check: bool = True) -> StateSpaceModel:
    """Single-port clamped appendage: ``qdd_P`` in, ``W_P`` out.

    ``W_P`` is the wrench that must be applied at P to impose ``qdd_P``; the
    load exerted on the parent is its opposite.
    """
    D0 = p.residual_mass()
    lam = np.linalg.eigvalsh(D0).min() if check else 0.0
    if lam < -1e-8 * np.trace(p.static_model()):
        warnings.warn(f"residual mass matrix has a negative eigenvalue ({lam:.4g})", RuntimeWarning, stacklevel=2)
    n = p.n_modes
    W2 = np.diag(p.omega ** 2)
    Z2 = np.diag(2.0 * p.zeta * p.omega)
    A = np.block([[np.zeros((n, n)), np.eye(n)], [-W2, -Z2]])
    B = np.vstack([np.zeros((n, 6)), -p.L])
    C = np.hstack([-p.L.T @ W2, -p.L.T @ Z2])
    return StateSpaceModel(A, B, C, D0, (("qdd_P", 6),), (("W_P", 6),), name)


# ------------------------------------------------------------------- rotations

def _cos_sin(alpha=None, tau=None) -> tuple[float, float]:
    if (alpha is None) == (tau is None):
        raise ValueError("give exactly one of alpha or tau")
    if tau is not None:
        t2 = tau * tau
        den = (1.0 + t2) ** 2
        return (1.0 - 6.0 * t2 + t2 * t2) / den, 4.0 * tau * (1.0 - t2) / den
    return float(np.cos(alpha)), float(np.sin(alpha))


def rotation_dcm(alpha=None, tau=None, axis=None) -> np.ndarray:
    """Direction cosine matrix of a rotation by ``alpha`` (or ``tau = tan(alpha/4)``).

    Default axis is z; another unit ``axis`` is handled as
    ``P Rz(alpha) P^T`` with ``P = axis_alignment(axis)``.
    """
    c, s = _cos_sin(alpha, tau)
    R = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    if axis is None:
        return R
    P = axis_alignment(axis)
    return P @ R @ P.T


def rotation_dcm6(alpha=None, tau=None, axis=None) -> np.ndarray:
    R = rotation_dcm(alpha, tau, axis)
    return sla.block_diag(R, R)


def tau_of_angle(alpha: float) -> float:
    return float(np.tan(alpha / 4.0))


def angle_of_tau(tau: float) -> float:
    return float(4.0 * np.arctan(tau))


def axis_alignment(r_a) -> np.ndarray:
    """Orthonormal, right-handed matrix whose third column is ``r_a``.

    The first two columns span the kernel of ``r_a^T`` and come from a complete
    QR factorization of ``r_a``; the first column is flipped if needed so that
    the determinant is +1.
    """
    r = np.asarray(r_a, dtype=float).reshape(3)
    if abs(np.linalg.norm(r) - 1.0) > 1e-9:
        raise NonUnitAxis(f"axis {r} is not a unit vector")
    Q, _ = np.linalg.qr(r.reshape(3, 1), mode="complete")
    P = np.column_stack([Q[:, 1], Q[:, 2], r])
    if np.linalg.det(P) < 0:
        P[:, 0] = -P[:, 0]
    return P
