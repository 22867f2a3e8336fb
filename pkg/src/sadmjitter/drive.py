"""Augmented TITOP models of the SADM stepper motor and reduction gearbox.

Both blocks are written with the revolute axis along the local z axis (bus
index 5 is the torque/angular-acceleration component about it).  Another axis
``r_a`` is handled by sandwiching the z-aligned block between
``blockdiag(P, P)`` transforms, ``P = axis_alignment(r_a)``.

Wrench conventions: ``W_in`` is the wrench applied *on* the block by the
driven side at P; ``W_out`` is the wrench the block applies on the driving
side.  Rotor and shaft angles are relative to the casing.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .lti import StateSpaceModel
from .titop import axis_alignment

AX = 5  # rotation component on a 6-wide bus


@dataclass(frozen=True)
class StepperParams:
    K_m: float      # N m/(A rad)
    K_d: float      # N m
    z: int          # rotor teeth
    p: int          # motor poles
    n_mu: int       # micro-steps per full step
    I: float        # A
    J_r: float      # kg m^2
    C_r: float      # N m s/rad
    axis: tuple = (0.0, 0.0, 1.0)

    def __post_init__(self):
        for k in ("K_m", "z", "p", "n_mu", "I", "J_r", "C_r"):
            if not getattr(self, k) > 0:
                raise ValueError(f"stepper parameter {k} must be positive")
        if self.K_d < 0:
            raise ValueError("detent constant must be nonnegative")
        for k in ("z", "p", "n_mu"):
            if int(getattr(self, k)) != getattr(self, k):
                raise ValueError(f"stepper parameter {k} must be an integer")
        object.__setattr__(self, "axis", tuple(float(a) for a in self.axis))

    @property
    def gamma(self) -> float:
        """Electrical micro-step angle 2 pi / (p n_mu)."""
        return 2.0 * np.pi / (self.p * self.n_mu)

    @property
    def alpha_mu(self) -> float:
        """Mechanical micro-step angle 2 pi / (z p n_mu)."""
        return self.gamma / self.z

    @property
    def K_0(self) -> float:
        return electromagnetic_stiffness(self)

    @property
    def command_gain(self) -> float:
        """Torque per micro-step count, K_m I gamma."""
        return self.K_m * self.I * self.gamma


@dataclass(frozen=True)
class GearboxParams:
    N_g: float      # reduction ratio
    K_g: float      # N m/rad
    C_g: float      # N m s/rad
    J_o: float      # kg m^2
    J_i: float = 0.0
    axis: tuple = (0.0, 0.0, 1.0)

    def __post_init__(self):
        if not (self.N_g > 0 and self.K_g > 0 and self.J_o > 0):
            raise ValueError("N_g, K_g and J_o must be positive")
        if self.C_g < 0 or self.J_i < 0:
            raise ValueError("C_g and J_i must be nonnegative")
        object.__setattr__(self, "axis", tuple(float(a) for a in self.axis))


def electromagnetic_stiffness(p: StepperParams) -> float:
    return p.K_m * p.I * p.z


def _sandwich(m: StateSpaceModel, axis, bus_in: list[str], bus_out: list[str]) -> StateSpaceModel:
    r = np.asarray(axis, dtype=float)
    r = r / np.linalg.norm(r)
    if np.allclose(r, [0.0, 0.0, 1.0]):
        return m
    P = axis_alignment(r)
    P6 = sla.block_diag(P, P)
    Tin = np.eye(m.nu)
    Tout = np.eye(m.ny)
    for port in bus_in:
        sl = m.input_slice(port)
        Tin[sl, sl] = P6.T
    for port in bus_out:
        sl = m.output_slice(port)
        Tout[sl, sl] = P6
    return StateSpaceModel(m.A, m.B @ Tin, Tout @ m.C, Tout @ m.D @ Tin, m.inputs, m.outputs, m.name)


def stepper_titop(p: StepperParams, name: str = "stepper") -> StateSpaceModel:
    """Stepper motor block, states (theta_r, theta_r_dot).

    inputs ``W_in`` (6), ``qdd_in`` casing acceleration (6), ``i`` micro-step count;
    outputs ``qdd_out`` rotor acceleration (6), ``W_out`` wrench on the casing
    support (6), ``theta_r``.
    """
    Jr, Cr, K0, Kc = p.J_r, p.C_r, p.K_0, p.command_gain
    A = np.array([[0.0, 1.0], [-K0 / Jr, -Cr / Jr]])
    B = np.zeros((2, 13))
    B[1, AX] = 1.0 / Jr              # load torque on the rotor
    B[1, 6 + AX] = -1.0              # casing angular acceleration
    B[1, 12] = Kc / Jr
    C = np.zeros((13, 2))
    C[AX] = [-K0 / Jr, -Cr / Jr]
    C[6 + AX] = [K0, Cr]
    C[12] = [1.0, 0.0]
    D = np.zeros((13, 13))
    D[:6, 6:12] = np.eye(6)
    D[AX, 6 + AX] = 0.0              # rotor absolute acceleration no longer follows the casing
    D[AX, AX] = 1.0 / Jr
    D[AX, 12] = Kc / Jr
    D[6:12, :6] = np.eye(6)
    D[6 + AX, AX] = 0.0              # axial torque only through the motor
    D[6 + AX, 12] = -Kc
    m = StateSpaceModel(A, B, C, D, (("W_in", 6), ("qdd_in", 6), ("i", 1)),
                        (("qdd_out", 6), ("W_out", 6), ("theta_r", 1)), name)
    return _sandwich(m, p.axis, ["W_in", "qdd_in"], ["qdd_out", "W_out"])


def gearbox_titop(p: GearboxParams, name: str = "gearbox") -> StateSpaceModel:
    """Reduction gearbox block, states (delta_theta_o, delta_theta_o_dot).

    inputs ``W_in`` (6), ``qdd_in`` input-shaft acceleration (6), ``T_gb``
    imperfection torque, ``qdd_casing`` (6); outputs ``qdd_out`` output-shaft
    acceleration (6), ``W_out`` wrench on the input shaft (6), ``delta_theta_o``,
    ``W_casing`` reaction on the casing (6).

    The casing ports make the reduction relative to the casing.  Leaving
    ``qdd_casing`` unwired and ``W_casing`` unused gives the block with the
    reduction written on absolute shaft angles.
    """
    Ng, Kg, Cg, Jo, Ji = p.N_g, p.K_g, p.C_g, p.J_o, p.J_i
    A = np.array([[0.0, 1.0], [-Kg / Jo, -Cg / Jo]])
    B = np.zeros((2, 19))
    B[1, AX] = 1.0 / Jo
    B[1, 6 + AX] = -1.0 / Ng
    B[1, 12] = 1.0 / Jo
    B[1, 13 + AX] = -(1.0 - 1.0 / Ng)
    C = np.zeros((19, 2))
    C[AX] = [-Kg / Jo, -Cg / Jo]
    C[6 + AX] = [Kg / Ng, Cg / Ng]
    C[12] = [1.0, 0.0]
    C[13 + AX] = [(1.0 - 1.0 / Ng) * Kg, (1.0 - 1.0 / Ng) * Cg]
    D = np.zeros((19, 19))
    D[:6, 6:12] = np.eye(6)
    D[AX, 6 + AX] = 0.0
    D[AX, AX] = 1.0 / Jo
    D[AX, 12] = 1.0 / Jo
    D[6:12, :6] = np.eye(6)
    D[6 + AX, AX] = 0.0
    D[6 + AX, 6 + AX] = -Ji
    D[6 + AX, 12] = -1.0 / Ng
    D[13 + AX, 12] = -(1.0 - 1.0 / Ng)
    m = StateSpaceModel(A, B, C, D, (("W_in", 6), ("qdd_in", 6), ("T_gb", 1), ("qdd_casing", 6)),
                        (("qdd_out", 6), ("W_out", 6), ("delta_theta_o", 1), ("W_casing", 6)), name)
    return _sandwich(m, p.axis, ["W_in", "qdd_in", "qdd_casing"], ["qdd_out", "W_out", "W_casing"])
