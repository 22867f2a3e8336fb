"""SADM harmonic disturbances: micro-stepping, detent torque and gearbox
tooth imperfections as banks of unit-peak band-pass sections.

Rates are in rad/s.  ``Omega_q`` is the demanded output (solar array) rate;
micro-stepping and detent frequencies scale with ``Omega_q * N_g`` (rotor side),
gearbox imperfections with ``Omega_q`` times their normalized frequency.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .drive import StepperParams
from .errors import ZeroRate
from .lti import StateSpaceModel

REL_BANDWIDTH = 0.01


@dataclass(frozen=True)
class DisturbanceContext:
    Omega_q: float
    stepper: StepperParams
    N_g: float = 1.0

    def __post_init__(self):
        if self.Omega_q == 0:
            raise ZeroRate("demanded rate must be nonzero")

    @property
    def rotor_rate(self) -> float:
        return abs(self.Omega_q) * self.N_g


def microstep_period(ctx: DisturbanceContext) -> tuple[float, float]:
    """Micro-step period (s) and fundamental frequency (Hz)."""
    s = ctx.stepper
    T = 2.0 * np.pi / (ctx.rotor_rate * s.z * s.p * s.n_mu)
    return T, 1.0 / T


def detent_period(ctx: DisturbanceContext) -> tuple[float, float]:
    T = 2.0 * np.pi / (4.0 * ctx.rotor_rate * ctx.stepper.z)
    return T, 1.0 / T


def gearbox_period(ctx: DisturbanceContext, omega_d_norm: float) -> tuple[float, float]:
    if omega_d_norm <= 0:
        raise ValueError("normalized defect frequency must be positive")
    T = 2.0 * np.pi / (omega_d_norm * abs(ctx.Omega_q))
    return T, 1.0 / T


# --------------------------------------------------------------- sawtooth signal

def sawtooth_exact(t, T: float) -> np.ndarray:
    """Reverse sawtooth ``floor(t/T) - t/T + 1/2``: the micro-step staircase
    ``floor(t/T) + 1`` minus the ramp ``t/T`` and the bias ``1/2``."""
    x = np.asarray(t, dtype=float) / T
    return np.floor(x) - x + 0.5


def fourier_sawtooth(phase, n_harmonics: int, amplitude: float = 1.0 / np.pi) -> np.ndarray:
    """``amplitude * sum_h sin(h phase) / h`` for h = 1..n_harmonics."""
    if n_harmonics < 1:
        raise ValueError("need at least one harmonic")
    phase = np.asarray(phase, dtype=float)
    out = np.zeros_like(phase)
    for h in range(1, n_harmonics + 1):
        out += np.sin(h * phase) / h
    return amplitude * out


def sawtooth_signal(T: float, n_harmonics: int, t):
    """Truncated Fourier series of the reverse sawtooth of period ``T``."""
    from .lti import TimeSeries

    t = np.asarray(t, dtype=float)
    y = fourier_sawtooth(2.0 * np.pi * t / T, n_harmonics)
    dt = float(t[1] - t[0]) if t.size > 1 else 1.0
    return TimeSeries(float(t[0]), dt, ("i3",), y[:, None])


def staircase_decomposition(t, T: float) -> dict[str, np.ndarray]:
    x = np.asarray(t, dtype=float) / T
    return {"ramp": x, "bias": np.full_like(x, 0.5), "sawtooth": sawtooth_exact(t, T),
            "staircase": np.floor(x) + 1.0}


def sawtooth_tail_rms(n_harmonics: int) -> float:
    """RMS of the discarded Fourier terms (Parseval)."""
    h = np.arange(1, n_harmonics + 1)
    tail = np.pi ** 2 / 6.0 - np.sum(1.0 / h ** 2)
    return float(np.sqrt(tail / 2.0) / np.pi)


# --------------------------------------------------------------- harmonic banks

@dataclass(frozen=True, eq=False)
class HarmonicBank:
    """Parallel second-order band-pass sections ``g beta s / (s^2 + beta s + w^2)``."""

    centers: np.ndarray   # rad/s
    gains: np.ndarray
    betas: np.ndarray     # rad/s
    label: str = "bank"

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.centers, dtype=float))
        g = np.broadcast_to(np.asarray(self.gains, dtype=float), c.shape).copy()
        b = np.broadcast_to(np.asarray(self.betas, dtype=float), c.shape).copy()
        if np.any(c <= 0) or np.any(np.diff(c) <= 0):
            raise ValueError("bank centers must be positive and strictly increasing")
        if np.any(b <= 0):
            raise ValueError("bandwidth parameters must be positive")
        object.__setattr__(self, "centers", c)
        object.__setattr__(self, "gains", g)
        object.__setattr__(self, "betas", b)

    def __len__(self):
        return self.centers.size

    def section_response(self, omega) -> np.ndarray:
        """(n_omega, n_sections) complex response of every scaled section."""
        s = 1j * np.asarray(omega, dtype=float)[:, None]
        return self.gains * self.betas * s / (s ** 2 + self.betas * s + self.centers ** 2)

    def peak_gains(self) -> np.ndarray:
        return np.abs(np.diag(self.section_response(self.centers)))

    def to_statespace(self, name: str | None = None) -> StateSpaceModel:
        n = len(self)
        A = np.zeros((2 * n, 2 * n))
        B = np.zeros((2 * n, n))
        C = np.zeros((1, 2 * n))
        for k, (w, g, b) in enumerate(zip(self.centers, self.gains, self.betas)):
            A[2 * k:2 * k + 2, 2 * k:2 * k + 2] = [[0.0, 1.0], [-w * w, -b]]
            B[2 * k + 1, k] = 1.0
            C[0, 2 * k + 1] = g * b
        return StateSpaceModel(A, B, C, np.zeros((1, n)), (("d", n),), (("y", 1),), name or self.label)

    def steady_state(self, t, phases=None) -> np.ndarray:
        """Steady-state output when every section is driven by ``sin(w_k t + phi_k)``."""
        t = np.asarray(t, dtype=float)
        phases = np.zeros(len(self)) if phases is None else np.asarray(phases, dtype=float)
        return np.sin(np.outer(t, self.centers) + phases) @ self.gains

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["harmonic", "center (Hz)", "gain", "beta (rad/s)"])
        for k, (c, g, b) in enumerate(zip(self.centers, self.gains, self.betas), start=1):
            w.writerow([k, repr(c / (2 * np.pi)), repr(g), repr(b)])
        return buf.getvalue()


def _betas(centers: np.ndarray, beta) -> np.ndarray:
    if beta is None:
        return REL_BANDWIDTH * centers
    if callable(beta):
        return np.asarray([beta(c) for c in centers], dtype=float)
    return np.broadcast_to(np.asarray(beta, dtype=float), centers.shape).copy()


def _bank(fundamental: float, gains: np.ndarray, n: int, beta, label: str) -> HarmonicBank:
    h = np.arange(1, n + 1)
    centers = h * fundamental
    return HarmonicBank(centers, gains, _betas(centers, beta), label)


def microstep_bank(ctx: DisturbanceContext, n_harmonics: int = 10, beta=None) -> HarmonicBank:
    _, f = microstep_period(ctx)
    h = np.arange(1, n_harmonics + 1)
    return _bank(2 * np.pi * f, 1.0 / (np.pi * h), n_harmonics, beta, "microstep")


def detent_bank(ctx: DisturbanceContext, K_d: float | None = None, n_harmonics: int = 10, beta=None) -> HarmonicBank:
    K_d = ctx.stepper.K_d if K_d is None else K_d
    _, f = detent_period(ctx)
    h = np.arange(1, n_harmonics + 1)
    return _bank(2 * np.pi * f, K_d / h, n_harmonics, beta, "detent")


def gearbox_bank(ctx: DisturbanceContext, omega_d_norm: float, n_harmonics: int = 90, beta=None) -> HarmonicBank:
    _, f = gearbox_period(ctx, omega_d_norm)
    h = np.arange(1, n_harmonics + 1)
    label = "gearbox_" + f"{omega_d_norm:g}".replace(".", "p")  # dots would clash with port references
    return _bank(2 * np.pi * f, 1.0 / (np.pi * h), n_harmonics, beta, label)


def stack_banks(banks) -> StateSpaceModel:
    """Banks summed into one output; inputs are the concatenated drivers."""
    banks = list(banks)
    parts = [b.to_statespace() for b in banks]
    nx = sum(p.nx for p in parts)
    nu = sum(p.nu for p in parts)
    A = np.zeros((nx, nx))
    B = np.zeros((nx, nu))
    C = np.zeros((1, nx))
    kx = ku = 0
    for p in parts:
        A[kx:kx + p.nx, kx:kx + p.nx] = p.A
        B[kx:kx + p.nx, ku:ku + p.nu] = p.B
        C[:, kx:kx + p.nx] = p.C
        kx += p.nx
        ku += p.nu
    inputs = tuple((f"d_{b.label}", len(b)) for b in banks)
    return StateSpaceModel(A, B, C, np.zeros((1, nu)), inputs, (("y", 1),), "banks")
