"""Closed-loop spacecraft plant: rigid hub + stepper + gearbox + rotated
flexible solar array, PD attitude controller, ideal sensors with additive
noise and the relative pointing error (RPE) weight.

Block diagram (all buses in the hub frame unless stated):

    hub.qdd_P -> stepper.qdd_in, gearbox.qdd_casing
    stepper.W_out + gearbox.W_casing -> hub.W_P
    stepper.qdd_out -> gearbox.qdd_in,  gearbox.W_out -> stepper.W_in
    gearbox.qdd_out --R^T--> appendage.qdd_P   (appendage frame)
    appendage.W_P --(-R)--> gearbox.W_in
    hub.qdd_G[3:6] -> attitude kinematics -> sensors -> ACS -> hub.W_ext[3:6]

``R`` rotates the array frame about the drive axis by the array angle.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg as sla

from .config import ProjectConfig
from .disturbance import DisturbanceContext, HarmonicBank, detent_bank, gearbox_bank, microstep_bank
from .drive import GearboxParams, StepperParams, gearbox_titop, stepper_titop
from .geartrain import GearTrain, Mesh, imperfection_catalog
from .lti import Interconnection, StateSpaceModel, connect, static_gain
from .titop import (
    FlexAppendageParams,
    RigidBodyParams,
    angle_of_tau,
    flex_appendage,
    jacobian_transport,
    rigid_hub_nport,
    rotation_dcm6,
)

UNCERTAIN_NAMES = ("m_S", "m_A", "Ixx_A", "Iyy_A", "Izz_A", "Ixy_A", "Iyz_A", "Ixz_A", "omega1_A", "omega2_A")
_INERTIA_IDX = {"Ixx_A": (0, 0), "Iyy_A": (1, 1), "Izz_A": (2, 2), "Ixy_A": (0, 1), "Iyz_A": (1, 2), "Ixz_A": (0, 2)}


# ------------------------------------------------------------------ parameters

@dataclass(frozen=True)
class AcsParams:
    omega: float
    zeta: float
    K_p: np.ndarray     # per-axis proportional gains
    K_v: np.ndarray     # per-axis derivative gains

    @property
    def K(self) -> np.ndarray:
        """3x6 gain on ``[theta_dot; theta]``: ``T = -K [theta_dot; theta]``."""
        return np.hstack([np.diag(self.K_v), np.diag(self.K_p)])


@dataclass(frozen=True)
class PointingWeights:
    t_delta: float = 3e-3
    eps_max: float = 0.06e-6
    noise_imu: float = 0.03e-6
    noise_str: float = 1e-6

    def rpe_coefficients(self) -> tuple[np.ndarray, np.ndarray]:
        """Numerator/denominator (descending powers of s) of one RPE section."""
        t = self.t_delta
        num = np.array([t * t, np.sqrt(12.0) * t, 0.0]) / self.eps_max
        den = np.array([t * t, 6.0 * t, 12.0])
        return num, den

    def rpe_model(self, n_axes: int = 3) -> StateSpaceModel:
        num, den = self.rpe_coefficients()
        num, den = num / den[0], den / den[0]
        a1, a0 = den[1], den[2]
        d = num[0]
        n1, n0 = num[1] - d * a1, num[2] - d * a0
        A1 = np.array([[0.0, 1.0], [-a0, -a1]])
        B1 = np.array([[0.0], [1.0]])
        C1 = np.array([[n0, n1]])
        eye = np.eye(n_axes)
        return StateSpaceModel(np.kron(eye, A1), np.kron(eye, B1), np.kron(eye, C1), d * eye,
                               (("theta", n_axes),), (("e", n_axes),), "rpe")


@dataclass(frozen=True)
class UncertainScalar:
    name: str
    nominal: float
    bound: float = 0.2

    @property
    def interval(self) -> tuple[float, float]:
        a, b = self.nominal * (1 - self.bound), self.nominal * (1 + self.bound)
        return (min(a, b), max(a, b))

    def at(self, u: float) -> float:
        """Value for normalized coordinate ``u`` in [-1, 1]."""
        u = float(np.clip(u, -1.0, 1.0))
        return self.nominal * (1.0 + self.bound * u)


@dataclass(frozen=True)
class SpacecraftParams:
    hub: RigidBodyParams
    appendage: FlexAppendageParams
    stepper: StepperParams
    gearbox: GearboxParams
    drive_axis: np.ndarray
    acs_omega: float = 0.01
    acs_zeta: float = 0.7
    weights: PointingWeights = field(default_factory=PointingWeights)
    rel_bandwidth: float = 0.01

    @property
    def K_d(self) -> float:
        return self.stepper.K_d

    def uncertain(self, bound: float = 0.2) -> tuple[UncertainScalar, ...]:
        I = self.appendage.inertia
        vals = {"m_S": self.hub.mass, "m_A": self.appendage.mass,
                **{k: I[i, j] for k, (i, j) in _INERTIA_IDX.items()},
                "omega1_A": self.appendage.omega[0], "omega2_A": self.appendage.omega[1]}
        return tuple(UncertainScalar(n, float(vals[n]), bound) for n in UNCERTAIN_NAMES)

    def with_values(self, values: dict) -> "SpacecraftParams":
        """Copy with some of the uncertain parameters replaced."""
        unknown = set(values) - set(UNCERTAIN_NAMES)
        if unknown:
            raise KeyError(f"unknown uncertain parameters {sorted(unknown)}")
        hub, app = self.hub, self.appendage
        if "m_S" in values:
            hub = replace(hub, mass=float(values["m_S"]))
        I = app.inertia.copy()
        for k, (i, j) in _INERTIA_IDX.items():
            if k in values:
                I[i, j] = I[j, i] = float(values[k])
        omega = app.omega.copy()
        if "omega1_A" in values:
            omega[0] = float(values["omega1_A"])
        if "omega2_A" in values:
            omega[1] = float(values["omega2_A"])
        app = FlexAppendageParams(omega, app.zeta, app.L, float(values.get("m_A", app.mass)), I, app.r_com)
        return replace(self, hub=hub, appendage=app)

    @classmethod
    def from_config(cls, cfg: ProjectConfig | None = None) -> "SpacecraftParams":
        cfg = cfg or ProjectConfig()
        h, a, s, g = cfg.hub, cfg.appendage, cfg.stepper, cfg.gearbox
        axis = tuple(cfg.drive_axis)
        hub = RigidBodyParams(h.mass, np.array(h.inertia), np.array(h.r_G), {"P": np.array(h.r_P)})
        app = FlexAppendageParams(2 * np.pi * np.array(a.freqs_hz), a.zeta, np.array(a.L_P_T).T,
                                  a.mass, np.array(a.inertia), np.array(a.r_com))
        stepper = StepperParams(s.K_m, s.K_d_ratio * s.K_m * s.I, s.z, s.p, s.n_mu, s.I, s.J_r, s.C_r, axis)
        gearbox = GearboxParams(g.N_g, g.K_g, g.C_g, g.J_o, g.J_i, axis)
        w = cfg.weights
        return cls(hub, app, stepper, gearbox, np.array(axis, dtype=float), cfg.acs.omega, cfg.acs.zeta,
                   PointingWeights(w.t_delta, w.eps_max, w.noise_imu, w.noise_str), cfg.disturbance.rel_bandwidth)


def gear_train_from_config(cfg: ProjectConfig) -> GearTrain:
    gt = cfg.gear_train
    return GearTrain(tuple(gt.bodies), tuple(Mesh(**m.model_dump()) for m in gt.meshes), tuple(gt.fixed), gt.output)


# ------------------------------------------------------------------ static model

def total_static_inertia(p: SpacecraftParams, theta_r: float = 0.0) -> np.ndarray:
    """6x6 rigid mass matrix of the whole spacecraft about the hub centre of mass G."""
    R6 = rotation_dcm6(theta_r, axis=p.drive_axis)
    DP = R6 @ p.appendage.static_model() @ R6.T
    tau = jacobian_transport(p.hub.r_GC("P"))
    M = p.hub.mass_matrix() + tau.T @ DP @ tau
    a = p.drive_axis / np.linalg.norm(p.drive_axis)
    M[3:, 3:] += (p.stepper.J_r + p.gearbox.J_o + p.gearbox.J_i) * np.outer(a, a)
    return M


def acs_gains(inertia: np.ndarray, omega: float = 0.01, zeta: float = 0.7) -> AcsParams:
    """Per-axis PD gains from the diagonal of a 3x3 (or the rotational block of a 6x6) inertia."""
    I = np.asarray(inertia, dtype=float)
    if I.shape == (6, 6):
        I = I[3:, 3:]
    if np.linalg.eigvalsh(0.5 * (I + I.T)).min() <= 0:
        raise ValueError("inertia must be positive definite")
    d = np.diag(I)
    return AcsParams(omega, zeta, omega ** 2 * d, 2.0 * zeta * omega * d)


# ------------------------------------------------------------------ assembly

def structure_model(p: SpacecraftParams, theta_r: float = 0.0) -> StateSpaceModel:
    """Open-loop mechanical model.

    inputs ``W_ext`` (wrench at G), ``i`` (micro-step count), ``T_gb``;
    outputs ``qdd_G``, ``theta_r`` (rotor angle w.r.t. casing), ``delta_theta_o``.
    """
    hub = rigid_hub_nport(p.hub, ["P"])
    st = stepper_titop(p.stepper)
    gb = gearbox_titop(p.gearbox)
    app = flex_appendage(p.appendage)
    R6 = rotation_dcm6(theta_r, axis=p.drive_axis)
    wiring = [
        ("hub.qdd_P", "stepper.qdd_in"),
        ("hub.qdd_P", "gearbox.qdd_casing"),
        ("stepper.W_out", "hub.W_P"),
        ("gearbox.W_casing", "hub.W_P"),
        ("stepper.qdd_out", "gearbox.qdd_in"),
        ("gearbox.W_out", "stepper.W_in"),
        ("gearbox.qdd_out", "appendage.qdd_P", R6.T),
        ("appendage.W_P", "gearbox.W_in", -R6),
    ]
    return connect([hub, st, gb, app], wiring,
                   ["hub.W_ext", "stepper.i", "gearbox.T_gb"],
                   ["hub.qdd_G", "stepper.theta_r", "gearbox.delta_theta_o"], name="structure")


def _kinematics() -> StateSpaceModel:
    """Double integrator from angular acceleration to attitude rate and angle."""
    Z, I = np.zeros((3, 3)), np.eye(3)
    A = np.block([[Z, Z], [I, Z]])        # states [theta_dot; theta]
    B = np.vstack([I, Z])
    return StateSpaceModel(A, B, np.eye(6), np.zeros((6, 3)), (("wdot", 3),), (("thetad", 3), ("theta", 3)), "kin")


_LOOP_WIRING = [
    ("hub.qdd_P", "stepper.qdd_in"),
    ("hub.qdd_P", "gearbox.qdd_casing"),
    ("stepper.W_out", "hub.W_P"),
    ("gearbox.W_casing", "hub.W_P"),
    ("stepper.qdd_out", "gearbox.qdd_in"),
    ("gearbox.W_out", "stepper.W_in"),
    ("detent.y", "stepper.i"),
    ("hub.qdd_G[3:6]", "kin.wdot"),
    ("kin.thetad", "sens.x[0:3]"),
    ("kin.theta", "sens.x[3:6]"),
    ("sens.y", "acs.y"),
    ("acs.W", "hub.W_ext"),
    ("kin.theta", "rpe.theta"),
]
_LOOP_INPUTS = [("i", "stepper.i"), ("T_d", "detent.u"), ("T_gb", "gearbox.T_gb"),
                ("n_imu", "sens.n[0:3]"), ("n_str", "sens.n[3:6]"), ("T_ext", "hub.W_ext[3:6]")]
_LOOP_OUTPUTS = [("e", "rpe.e"), ("theta_G", "kin.theta"), ("thetad_G", "kin.thetad"), ("y_meas", "sens.y"),
                 ("theta_r", "stepper.theta_r"), ("delta_theta_o", "gearbox.delta_theta_o")]


class LoopBuilder:
    """Closed attitude loop at a fixed array angle, rebuilt cheaply for
    different hub/appendage parameter values (drive, sensors, controller and
    weights are kept from the template parameters).

    inputs ``i``, ``T_d`` (detent torque on the rotor), ``T_gb``, ``n_imu`` (3),
    ``n_str`` (3), ``T_ext`` (3); outputs ``e`` (RPE-weighted attitude, 3),
    ``theta_G``, ``thetad_G``, ``y_meas`` (measured rate then attitude, 6),
    ``theta_r``, ``delta_theta_o``.
    """

    def __init__(self, p: SpacecraftParams, theta_r: float = 0.0, acs: AcsParams | None = None):
        self.acs = acs or acs_gains(total_static_inertia(p, 0.0), p.acs_omega, p.acs_zeta)
        w = p.weights
        R6 = rotation_dcm6(theta_r, axis=p.drive_axis)
        self.fixed = {
            "stepper": stepper_titop(p.stepper),
            "gearbox": gearbox_titop(p.gearbox),
            # the detent torque acts on the rotor like -T_d / (K_m I gamma) micro-steps
            "detent": static_gain([[-1.0 / p.stepper.command_gain]], (("u", 1),), (("y", 1),), "detent"),
            "kin": _kinematics(),
            "sens": StateSpaceModel(np.zeros((0, 0)), np.zeros((0, 12)), np.zeros((6, 0)),
                                    np.hstack([np.eye(6), sla.block_diag(w.noise_imu * np.eye(3),
                                                                         w.noise_str * np.eye(3))]),
                                    (("x", 6), ("n", 6)), (("y", 6),), "sens"),
            "acs": static_gain(-np.vstack([np.zeros((3, 6)), self.acs.K]), (("y", 6),), (("W", 6),), "acs"),
            "rpe": w.rpe_model(),
        }
        hub, app = self._variable(p)
        wiring = _LOOP_WIRING + [("gearbox.qdd_out", "appendage.qdd_P", R6.T),
                                 ("appendage.W_P", "gearbox.W_in", -R6)]
        self.net = Interconnection(self._blocks(hub, app), wiring, _LOOP_INPUTS, _LOOP_OUTPUTS, "closed_loop")

    @staticmethod
    def _variable(p: SpacecraftParams):
        return rigid_hub_nport(p.hub, ["P"]), flex_appendage(p.appendage, check=False)

    def _blocks(self, hub, app):
        f = self.fixed
        return [hub, f["stepper"], f["gearbox"], app, f["detent"], f["kin"], f["sens"], f["acs"], f["rpe"]]

    def __call__(self, p: SpacecraftParams) -> StateSpaceModel:
        return self.net(self._blocks(*self._variable(p)))


def closed_loop(p: SpacecraftParams, theta_r: float = 0.0, acs: AcsParams | None = None) -> StateSpaceModel:
    """Attitude loop closed through the sensors and the PD controller (see :class:`LoopBuilder`)."""
    return LoopBuilder(p, theta_r, acs)(p)


def bank_set(p: SpacecraftParams, Omega_q: float, catalog_freqs: dict[int, float] | None = None,
             imperfections=(2, 3), n_microstep: int = 10, n_detent: int = 10, n_gearbox: int = 30) -> dict:
    """Harmonic banks for one demanded rate: {"i": [...], "T_d": [...], "T_gb": [...]}."""
    ctx = DisturbanceContext(Omega_q, p.stepper, p.gearbox.N_g)
    beta = lambda c: p.rel_bandwidth * c  # noqa: E731
    out = {"i": [], "T_d": [], "T_gb": []}
    if n_microstep:
        out["i"].append(microstep_bank(ctx, n_microstep, beta))
    if n_detent and p.stepper.K_d > 0:
        out["T_d"].append(detent_bank(ctx, p.stepper.K_d, n_detent, beta))
    if catalog_freqs and n_gearbox:
        for j in imperfections:
            out["T_gb"].append(gearbox_bank(ctx, catalog_freqs[j], n_gearbox, beta))
    return out


def default_catalog(cfg: ProjectConfig | None = None) -> dict[int, float]:
    cfg = cfg or ProjectConfig()
    return {imp.number: imp.frequency for imp in imperfection_catalog(gear_train_from_config(cfg))}


def assemble_plant(p: SpacecraftParams, theta_r: float | None = None, tau: float | None = None,
                   banks: dict | None = None, acs: AcsParams | None = None) -> StateSpaceModel:
    """Generalized plant: harmonic drivers and sensor noises in, RPE error and
    measurements out.  Without banks the raw disturbance ports stay inputs.

    With banks, each disturbance port ``X`` is replaced by driver inputs
    ``d_X_<label>`` and an extra output ``X`` reproduces the injected signal.
    """
    if (theta_r is None) == (tau is None):
        raise ValueError("give exactly one of theta_r or tau")
    alpha = theta_r if theta_r is not None else angle_of_tau(tau)
    cl = closed_loop(p, alpha, acs)
    if not banks:
        return cl
    models = [cl.with_name("plant")]
    wiring, inputs, outputs = [], [], [("e", "plant.e"), ("theta_G", "plant.theta_G"),
                                      ("thetad_G", "plant.thetad_G"), ("y_meas", "plant.y_meas"),
                                      ("theta_r", "plant.theta_r"), ("delta_theta_o", "plant.delta_theta_o")]
    for port in ("i", "T_d", "T_gb"):
        bl = banks.get(port, [])
        if not bl:
            inputs.append((port, f"plant.{port}"))
            continue
        sums = static_gain(np.ones((1, len(bl))), (("x", len(bl)),), (("y", 1),), f"sum_{port}")
        models.append(sums)
        for k, b in enumerate(bl):
            name = f"{port}_{b.label}"
            models.append(b.to_statespace(name))
            wiring.append((f"{name}.y", f"sum_{port}.x[{k}]"))
            inputs.append((f"d_{name}", f"{name}.d"))
        wiring.append((f"sum_{port}.y", f"plant.{port}"))
        outputs.append((port, f"sum_{port}.y"))
    inputs += [("n_imu", "plant.n_imu"), ("n_str", "plant.n_str"), ("T_ext", "plant.T_ext")]
    return connect(models, wiring, inputs, outputs, name="generalized_plant")
