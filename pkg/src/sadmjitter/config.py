"""Project configuration: every physical parameter with its default value,
schema-validated (unknown keys rejected), loadable from YAML or JSON.

Units: kg, m, kg m^2, Hz for modal frequencies, deg/s for SADM rates, SI elsewhere.
"""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path
from typing import Literal

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .errors import ConfigError

ENV_PREFIX = "SADMJITTER_"


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)


def _square3(v):
    a = np.asarray(v, dtype=float)
    if a.shape != (3, 3):
        raise ValueError("expected a 3x3 matrix")
    if not np.allclose(a, a.T):
        raise ValueError("inertia matrix must be symmetric")
    if np.linalg.eigvalsh(a).min() <= 0:
        raise ValueError("inertia matrix must be positive definite")
    return a.tolist()


class HubConfig(_Model):
    mass: float = Field(1147.0, gt=0, description="kg")
    inertia: list[list[float]] = [[381.0, -9.4, 3.1], [-9.4, 1015.0, -38.0], [3.1, -38.0, 935.0]]
    r_G: list[float] = [1.373, 0.014, 0.031]
    r_P: list[float] = [1.25, -0.625, 0.0]

    _inertia = field_validator("inertia")(lambda cls, v: _square3(v))


class AppendageConfig(_Model):
    mass: float = Field(43.2, ge=0)
    inertia: list[list[float]] = [[75.41, 0.43, -0.1], [0.43, 21.86, 22.04], [-0.1, 22.04, 80.45]]
    r_com: list[float] = [-0.002, -1.745, 0.030]
    freqs_hz: list[float] = [0.42, 0.61, 1.58, 2.83, 4.30]
    zeta: float = Field(0.03, ge=0, lt=1)
    # modal participation factors, one row per bus component (Fx..Tz), one column per mode
    L_P_T: list[list[float]] = [
        [0.0019, 5.0012, 0.3244, 0.0004, 0.0053],
        [-1.5151, 0.0033, 0.0019, -0.9132, 5.8780],
        [-4.7387, -0.0042, 0.0288, 2.7900, -1.0144],
        [13.9436, 0.0093, -0.0235, -1.8763, 3.0180],
        [0.0229, 1.8457, 3.2879, -0.0246, -0.0124],
        [-0.0144, 14.5319, -0.2128, 0.0031, -0.0001],
    ]

    @model_validator(mode="after")
    def _shapes(self):
        L = np.asarray(self.L_P_T, dtype=float)
        if L.shape != (6, len(self.freqs_hz)):
            raise ValueError("L_P_T must be 6 x n_modes")
        if any(f <= 0 for f in self.freqs_hz):
            raise ValueError("modal frequencies must be positive")
        return self


class StepperConfig(_Model):
    K_m: float = Field(4.44, gt=0)
    z: int = Field(90, gt=0)
    p: int = Field(4, gt=0)
    n_mu: int = Field(8, gt=0)
    I: float = Field(0.17, gt=0)
    J_r: float = Field(1.1e-4, gt=0)
    C_r: float = Field(13e-4, gt=0)
    K_d_ratio: float = Field(0.2, ge=0, description="detent constant as a fraction of K_m I")


class GearboxConfig(_Model):
    N_g: float = Field(184.0, gt=0)
    K_g: float = Field(9600.0, gt=0)
    C_g: float = Field(0.1, ge=0)
    J_o: float = Field(0.01, gt=0)
    J_i: float = Field(0.0, ge=0)


class MeshConfig(_Model):
    body_a: str
    teeth_a: int
    body_b: str
    teeth_b: int
    carrier: str
    internal: bool = False


class GearTrainConfig(_Model):
    bodies: list[str] = ["1", "2", "3", "4"]
    meshes: list[MeshConfig] = [
        MeshConfig(body_a="2", teeth_a=74, body_b="3", teeth_b=69, carrier="1", internal=True),
        MeshConfig(body_a="3", teeth_a=75, body_b="4", teeth_b=80, carrier="1", internal=True),
    ]
    fixed: list[str] = ["2"]
    output: str = "4"


class RatesConfig(_Model):
    slow_deg_s: float = 0.06
    fast_deg_s: float = -0.205

    def get(self, rate: str) -> float:
        if rate not in ("slow", "fast"):
            raise ConfigError(f"unknown rate {rate!r}")
        return float(np.deg2rad(self.slow_deg_s if rate == "slow" else self.fast_deg_s))


class DisturbanceConfig(_Model):
    rel_bandwidth: float = Field(0.01, gt=0, description="beta = rel_bandwidth * center (rad/s)")
    n_microstep: int = Field(10, ge=1)
    n_detent: int = Field(10, ge=1)
    n_gearbox_validation: int = Field(90, ge=1)
    n_gearbox_observer: int = Field(30, ge=1)
    n_gearbox_wc: int = Field(30, ge=1)
    imperfections: list[int] = [2, 3]


class AcsConfig(_Model):
    omega: float = Field(0.01, gt=0, description="rad/s")
    zeta: float = Field(0.7, gt=0)


class WeightsConfig(_Model):
    t_delta: float = Field(3e-3, gt=0, description="s")
    eps_max: float = Field(0.06e-6, gt=0, description="rad")
    noise_imu: float = Field(0.03e-6, ge=0, description="rad/s/sqrt(Hz)")
    noise_str: float = Field(1e-6, ge=0, description="rad/sqrt(Hz)")


class UncertaintyConfig(_Model):
    bound: float = Field(0.20, ge=0, lt=1)
    parameters: list[str] = ["m_S", "m_A", "Ixx_A", "Iyy_A", "Izz_A", "Ixy_A", "Iyz_A", "Ixz_A", "omega1_A", "omega2_A"]


class WorstCaseConfig(_Model):
    tau_points: int = Field(49, ge=2)
    tau_max: float = Field(0.5, gt=0)
    starts: int = Field(12, ge=0)
    evals_per_start: int = Field(200, ge=1)
    shrink: float = Field(0.5, gt=0, lt=1)
    initial_step: float = Field(0.5, gt=0, le=1)


class ValidationConfig(_Model):
    theta_r0_deg: float = -117.2
    duration: float = Field(5150.0, gt=0)
    sample_rate: float = Field(10.0, gt=0)
    relin_step_deg: float = Field(2.0, gt=0)
    substeps: int = Field(10, ge=1)
    noise: bool = False


class ObserverConfig(_Model):
    order: int = Field(4, ge=1)
    n_k: int = 5
    gb_max: float = 1.2 / np.pi
    band_hz: list[float] = [0.025, 0.74]
    rejection_db: float = 27.0
    butter_order: int = 6
    soft_weight: float = 1.0 / 0.13
    tau_synth_points: int = Field(11, ge=2)
    tau_check_points: int = Field(21, ge=2)
    evals_per_stage: int = Field(500, ge=1)
    gamma_ceiling: float = Field(2.0, gt=0)
    hard_target: float = Field(0.7, gt=0, description="gamma1 level below which gamma2 is minimized")
    run_duration: float = Field(1000.0, gt=0)
    run_tau0: float = 0.0


class ProjectConfig(_Model):
    hub: HubConfig = HubConfig()
    appendage: AppendageConfig = AppendageConfig()
    stepper: StepperConfig = StepperConfig()
    gearbox: GearboxConfig = GearboxConfig()
    drive_axis: list[float] = [0.0, 1.0, 0.0]
    gear_train: GearTrainConfig = GearTrainConfig()
    rates: RatesConfig = RatesConfig()
    disturbance: DisturbanceConfig = DisturbanceConfig()
    acs: AcsConfig = AcsConfig()
    weights: WeightsConfig = WeightsConfig()
    uncertainty: UncertaintyConfig = UncertaintyConfig()
    worst_case: WorstCaseConfig = WorstCaseConfig()
    validation: ValidationConfig = ValidationConfig()
    observer: ObserverConfig = ObserverConfig()
    seed: int = 0

    @field_validator("drive_axis")
    @classmethod
    def _unit(cls, v):
        if len(v) != 3 or abs(np.linalg.norm(v) - 1.0) > 1e-9:
            raise ValueError("drive_axis must be a unit 3-vector")
        return v

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.model_dump(mode="json"), sort_keys=True).encode()).hexdigest()


def _apply_env(data: dict, environ) -> dict:
    """``SADMJITTER_A__B=value`` sets ``data["a"]["b"]`` (value parsed as YAML)."""
    for key, raw in environ.items():
        if not key.startswith(ENV_PREFIX):
            continue
        path = [p.lower() for p in key[len(ENV_PREFIX):].split("__") if p]
        if not path:
            continue
        node = data
        for p in path[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"environment override {key} does not address a section")
        node[path[-1]] = yaml.safe_load(raw)
    return data


def load_config(path: str | os.PathLike | None = None, environ=None) -> ProjectConfig:
    data: dict = {}
    if path is not None:
        p = Path(path)
        try:
            text = p.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {p}: {exc}") from exc
        try:
            data = (json.loads(text) if p.suffix == ".json" else yaml.safe_load(text)) or {}
        except (json.JSONDecodeError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot parse config {p}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config root must be a mapping")
    data = _apply_env(data, os.environ if environ is None else environ)
    try:
        return ProjectConfig.model_validate(data)
    except Exception as exc:  # pydantic.ValidationError
        raise ConfigError(str(exc)) from exc


def dump_config(cfg: ProjectConfig, path: str | os.PathLike) -> None:
    p = Path(path)
    data = cfg.model_dump(mode="json")
    if p.suffix == ".json":
        p.write_text(json.dumps(data, indent=2))
    else:
        p.write_text(yaml.safe_dump(data, sort_keys=False))
