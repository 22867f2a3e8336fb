"""Frequency sweeps over the array angle, worst-case gain search over the
uncertain parameter box, spectrograms and the piecewise-rate validation run."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .assembly import (
    UNCERTAIN_NAMES,
    SpacecraftParams,
    LoopBuilder,
    UncertainScalar,
    acs_gains,
    bank_set,
    closed_loop,
    default_catalog,
    total_static_inertia,
)
from .disturbance import DisturbanceContext, HarmonicBank, gearbox_period
from .errors import BudgetExhausted, ChannelMismatch
from .lti import GOLDEN, StateSpaceModel, TimeSeries, _response, discretize_zoh, propagate
from .titop import angle_of_tau

# ------------------------------------------------------------------ sweeps


def sigma_sweep(builder, thetas, omega, inputs, outputs) -> np.ndarray:
    """Max singular value of ``builder(theta)`` restricted to the given ports,
    on a (theta, omega) grid."""
    omega = np.asarray(omega, dtype=float)
    out = np.empty((len(thetas), omega.size))
    for k, th in enumerate(thetas):
        m = builder(th).select(inputs, outputs)
        H = _response(m, omega)
        out[k] = np.linalg.svd(H, compute_uv=False)[:, 0] if min(m.ny, m.nu) > 1 else \
            np.sqrt(np.sum(np.abs(H) ** 2, axis=(1, 2)))
    return out


def sweep_csv(thetas, omega, sigma, header=("theta_r (deg)", "omega (rad/s)", "sigma_max")) -> str:
    lines = [",".join(header)]
    for k, th in enumerate(thetas):
        for w, s in zip(omega, sigma[k]):
            lines.append(f"{np.rad2deg(th)!r},{w!r},{s!r}")
    return "\n".join(lines) + "\n"


def modal_peaks(sigma_row: np.ndarray, omega: np.ndarray, min_prominence: float = 1.5) -> np.ndarray:
    """Frequencies (rad/s) of local maxima that stand above both neighbours' minima."""
    s = np.asarray(sigma_row)
    peaks = []
    for k in range(1, s.size - 1):
        if s[k] >= s[k - 1] and s[k] > s[k + 1]:
            lo = min(s[max(k - 20, 0):k].min(), s[k + 1:k + 21].min())
            if s[k] > min_prominence * lo:
                peaks.append(omega[k])
    return np.asarray(peaks)


# ------------------------------------------------------------------ worst case

@dataclass
class WorstCaseResult:
    gain: float                     # best gain found (lower bound)
    gain_refined: float             # frequency-densified evaluation at the worst sample
    parameters: dict
    frequency_hz: float
    theta_r_deg: float
    tau: float
    per_tau: list = field(default_factory=list)   # (tau, lower, refined)
    evaluations: int = 0
    budget_exhausted: bool = False

    def to_dict(self) -> dict:
        return {"gain_lower": self.gain, "gain_refined": self.gain_refined, "parameters": self.parameters,
                "critical_frequency_hz": self.frequency_hz, "critical_theta_r_deg": self.theta_r_deg,
                "tau": self.tau, "evaluations": self.evaluations, "budget_exhausted": self.budget_exhausted,
                "per_tau": [{"tau": t, "lower": lo, "refined": hi} for t, lo, hi in self.per_tau]}


class GearboxChannel:
    """Gain of ``d_gb -> e(axis)``: harmonic drivers of the gearbox banks to one
    RPE-weighted attitude axis.  Because every bank section feeds the same
    torque input, ``sigma_max(omega) = |G(j omega)| * ||W(j omega)||_2``."""

    def __init__(self, p: SpacecraftParams, Omega_q: float, n_harmonics: int = 30,
                 imperfections=(2, 3), axis: int = 0, catalog: dict | None = None, n_base: int = 300):
        catalog = catalog or default_catalog()
        self.banks: list[HarmonicBank] = bank_set(p, Omega_q, catalog, imperfections, 0, 0, n_harmonics)["T_gb"]
        self.axis = axis
        centers = np.concatenate([b.centers for b in self.banks])
        betas = np.concatenate([b.betas for b in self.banks])
        lo, hi = centers.min() / 3.0, max(centers.max() * 3.0, 2 * np.pi * 10.0)
        grid = [np.geomspace(lo, hi, n_base), centers, centers - 0.25 * betas, centers + 0.25 * betas]
        self.grid = np.unique(np.concatenate(grid))
        self.bank_norm = self.weight(self.grid)
        self.template = p
        self.acs = acs_gains(total_static_inertia(p, 0.0), p.acs_omega, p.acs_zeta)
        self._builders = {}

    def weight(self, omega) -> np.ndarray:
        W = np.concatenate([b.section_response(np.atleast_1d(omega)) for b in self.banks], axis=1)
        return np.sqrt(np.sum(np.abs(W) ** 2, axis=1))

    def plant(self, p: SpacecraftParams, theta_r: float) -> StateSpaceModel:
        key = round(float(theta_r), 12)
        if key not in self._builders:
            self._builders[key] = LoopBuilder(self.template, theta_r, self.acs)
        m = self._builders[key](p)
        iu = m.input_slice("T_gb").start
        iy = m.output_slice("e").start + self.axis
        return StateSpaceModel(m.A, m.B[:, iu:iu + 1], m.C[iy:iy + 1], m.D[iy:iy + 1, iu:iu + 1],
                               (("T_gb", 1),), (("e", 1),), "channel")

    def gain_curve(self, p: SpacecraftParams, theta_r: float, omega=None) -> tuple[np.ndarray, np.ndarray]:
        omega = self.grid if omega is None else np.asarray(omega, dtype=float)
        G = np.abs(_response(self.plant(p, theta_r), omega)[:, 0, 0])
        W = self.bank_norm if omega is self.grid else self.weight(omega)
        return omega, G * W

    def peak(self, p: SpacecraftParams, theta_r: float, refine: bool = False) -> tuple[float, float]:
        m = self.plant(p, theta_r)
        fun = lambda w: np.abs(_response(m, w)[:, 0, 0]) * self.weight(w)  # noqa: E731
        g = np.abs(_response(m, self.grid)[:, 0, 0]) * self.bank_norm
        k = int(np.argmax(g))
        best, wbest = float(g[k]), float(self.grid[k])
        if refine:
            a = np.log(self.grid[max(k - 1, 0)])
            b = np.log(self.grid[min(k + 1, self.grid.size - 1)])
            for _ in range(40):
                c, d = b - GOLDEN * (b - a), a + GOLDEN * (b - a)
                fc, fd = fun(np.exp([c, d]))
                if fc > fd:
                    b = d
                else:
                    a = c
                for fv, x in ((fc, c), (fd, d)):
                    if fv > best:
                        best, wbest = float(fv), float(np.exp(x))
        return best, wbest


def _pattern_search(f, x0: np.ndarray, budget: int, step0: float, shrink: float, min_step: float = 1e-3):
    """Maximize ``f`` on [-1, 1]^n by compass search along +-e_i."""
    x = np.clip(x0, -1, 1)
    fx = f(x)
    used, step = 1, step0
    n = x.size
    while used < budget and step >= min_step:
        improved = False
        for i in range(n):
            for sgn in (1.0, -1.0):
                if used >= budget:
                    break
                y = x.copy()
                y[i] = np.clip(y[i] + sgn * step, -1, 1)
                if y[i] == x[i]:
                    continue
                fy = f(y)
                used += 1
                if fy > fx:
                    x, fx, improved = y, fy, True
                    break
        if not improved:
            step *= shrink
    return x, fx, used


def wc_gain(p: SpacecraftParams, box: tuple[UncertainScalar, ...], taus, channel: GearboxChannel,
            starts: int = 12, evals_per_start: int = 200, shrink: float = 0.5, step0: float = 0.5,
            seed: int = 0, max_seconds: float | None = None) -> WorstCaseResult:
    """Worst-case gain over the parameter box for every tau, by multi-start
    pattern search (nominal point plus ``starts`` random box corners).

    Lower-bound method: the best value found is attainable, nothing is certified.
    """
    rng = np.random.default_rng(seed)
    n = len(box)
    corners = rng.choice([-1.0, 1.0], size=(starts, n))
    starts_u = [np.zeros(n)] + list(corners)
    t_start = time.perf_counter()
    evals = 0
    exhausted = False

    def params_at(u):
        return p.with_values({b.name: b.at(ui) for b, ui in zip(box, u)}) if n else p

    per_tau, best = [], None
    for tau in taus:
        theta = angle_of_tau(float(tau))

        def f(u):
            return channel.peak(params_at(u), theta)[0]

        tau_best = None
        for u0 in starts_u:
            if max_seconds is not None and time.perf_counter() - t_start > max_seconds:
                exhausted = True
                break
            if n == 0:
                u, fu, used = u0, f(u0), 1
            else:
                u, fu, used = _pattern_search(f, u0, evals_per_start, step0, shrink)
            evals += used
            key = (fu, tuple(-u))
            if tau_best is None or key > tau_best[0]:
                tau_best = (key, u)
        if tau_best is None:
            break
        u = tau_best[1]
        refined, w = channel.peak(params_at(u), theta, refine=True)
        per_tau.append((float(tau), float(tau_best[0][0]), float(refined)))
        cand = (tau_best[0][0], float(tau), u, refined, w)
        if best is None or cand[0] > best[0]:
            best = cand
        if exhausted:
            break
    if best is None:
        raise BudgetExhausted("no tau point was evaluated within the budget")
    g, tau, u, refined, w = best
    res = WorstCaseResult(float(g), float(max(refined, g)), {b.name: float(b.at(ui)) for b, ui in zip(box, u)},
                          w / (2 * np.pi), float(np.rad2deg(angle_of_tau(tau))), tau, per_tau, evals, exhausted)
    return res


def worst_case_for_rate(cfg, rate: str, tau_points: int | None = None, harmonics: int | None = None,
                        max_seconds: float | None = None) -> WorstCaseResult:
    """Worst-case gearbox channel gain for one configured SADM rate."""
    wc = cfg.worst_case
    p = SpacecraftParams.from_config(cfg)
    taus = np.linspace(0.0, wc.tau_max, tau_points or wc.tau_points)
    channel = GearboxChannel(p, cfg.rates.get(rate), harmonics or cfg.disturbance.n_gearbox_wc,
                             tuple(cfg.disturbance.imperfections), catalog=default_catalog(cfg))
    return wc_gain(p, p.uncertain(cfg.uncertainty.bound), taus, channel, starts=wc.starts,
                   evals_per_start=wc.evals_per_start, shrink=wc.shrink, step0=wc.initial_step, seed=cfg.seed,
                   max_seconds=max_seconds)


# ------------------------------------------------------------------ spectrogram

@dataclass
class Spectrogram:
    times: np.ndarray       # frame centres, s
    freqs: np.ndarray       # Hz
    magnitude: np.ndarray   # (n_frames, n_freqs), |rfft| of the windowed frame
    resolution: float       # Hz per bin

    def energy(self) -> np.ndarray:
        """Per-frame energy of the windowed samples (Parseval on the one-sided spectrum)."""
        n = 2 * (self.freqs.size - 1) if self._even else 2 * self.freqs.size - 1
        w = np.full(self.freqs.size, 2.0)
        w[0] = 1.0
        if self._even:
            w[-1] = 1.0
        return (self.magnitude ** 2 * w).sum(axis=1) / n

    _even: bool = True


def spectrogram(x, dt: float, window: int, overlap: int = 0) -> Spectrogram:
    """Hann-windowed short-time Fourier transform magnitude."""
    x = np.asarray(x, dtype=float)
    if window > x.size or window < 2:
        raise ValueError("window must be between 2 and the series length")
    if not 0 <= overlap < window:
        raise ValueError("overlap must be in [0, window)")
    hop = window - overlap
    win = np.hanning(window + 2)[1:-1]
    starts = np.arange(0, x.size - window + 1, hop)
    frames = np.stack([x[s:s + window] * win for s in starts])
    X = np.abs(np.fft.rfft(frames, axis=1))
    freqs = np.fft.rfftfreq(window, dt)
    sp = Spectrogram((starts + window / 2) * dt, freqs, X, 1.0 / (window * dt))
    sp._even = window % 2 == 0
    return sp


def amplitude_spectrum(x, dt: float, window: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """One-sided amplitude spectrum scaled so a sinusoid of amplitude a reads a."""
    x = np.asarray(x, dtype=float)
    w = np.hanning(x.size + 2)[1:-1] if window else np.ones(x.size)
    X = np.abs(np.fft.rfft(x * w)) * 2.0 / w.sum()
    return np.fft.rfftfreq(x.size, dt), X


def find_harmonic_peaks(freqs, mag, expected, floor_ratio: float = 3.0, halfwidth: int = 25):
    """For every expected frequency, the local maximum within one bin and whether
    it is a genuine peak (above ``floor_ratio`` times the local median)."""
    freqs = np.asarray(freqs)
    out = []
    for f in expected:
        k = int(np.argmin(np.abs(freqs - f)))
        lo, hi = max(k - 1, 1), min(k + 2, freqs.size - 1)
        j = lo + int(np.argmax(mag[lo:hi]))
        neigh = mag[max(j - halfwidth, 0):j + halfwidth + 1]
        is_peak = mag[j] >= mag[j - 1] and mag[j] >= mag[min(j + 1, freqs.size - 1)] and \
            mag[j] > floor_ratio * np.median(neigh)
        out.append((float(f), float(freqs[j]), abs(j - k) <= 1, bool(is_peak), float(mag[j])))
    return out


# ------------------------------------------------------------------ validation run

@dataclass(frozen=True)
class Segment:
    duration: float
    rate: float         # rad/s, signed


@dataclass
class ValidationScenario:
    theta0: float                       # rad
    segments: tuple[Segment, ...]
    sample_rate: float = 10.0
    substeps: int = 10
    relin_step: float = np.deg2rad(2.0)
    n_harmonics: int = 90
    imperfections: tuple = (2, 3)
    noise_seed: int | None = None

    @classmethod
    def orbit(cls, theta0_deg=-117.2, slow_deg_s=0.06, fast_deg_s=-0.205, duration=5150.0, **kw):
        t_slow = 2.0 * abs(theta0_deg) / abs(slow_deg_s)
        segs = (Segment(t_slow, np.deg2rad(slow_deg_s)), Segment(duration - t_slow, np.deg2rad(fast_deg_s)))
        return cls(np.deg2rad(theta0_deg), segs, **kw)


class _DiscreteCache:
    def __init__(self, p: SpacecraftParams, dt: float, inputs, outputs):
        self.p, self.dt, self.inputs, self.outputs = p, dt, inputs, outputs
        self.cache = {}

    def get(self, theta: float):
        key = round(float(theta), 12)
        if key not in self.cache:
            m = closed_loop(self.p, theta).select(self.inputs, self.outputs)
            self.cache[key] = discretize_zoh(m, self.dt)
        return self.cache[key]


def gearbox_torque(phases: dict, n_harmonics: int) -> np.ndarray:
    """Sum of the gearbox sawtooth series for the given phase histories."""
    out = 0.0
    for ph in phases.values():
        h = np.arange(1, n_harmonics + 1)
        out = out + np.sin(np.outer(ph, h)) @ (1.0 / (np.pi * h))
    return np.asarray(out)


def validation_run(p: SpacecraftParams, sc: ValidationScenario, catalog: dict | None = None,
                   disturbance: bool = True) -> TimeSeries:
    """Piecewise-rate simulation with the plant re-linearized on an angle grid.

    The gearbox imperfection torque is synthesized from its Fourier series with
    phase-continuous fundamentals that follow the current rate.  Returns
    attitude rate/angle, array angle (deg) and the injected torque at the
    output sample rate.
    """
    catalog = catalog or default_catalog()
    dt_out = 1.0 / sc.sample_rate
    dt = dt_out / sc.substeps
    total = sum(s.duration for s in sc.segments)
    n_out = int(round(total * sc.sample_rate))
    n = n_out * sc.substeps
    t = np.arange(n) * dt
    # array angle and defect phases
    rate = np.empty(n)
    edges = np.cumsum([0.0] + [s.duration for s in sc.segments])
    for s, a, b in zip(sc.segments, edges[:-1], edges[1:]):
        rate[(t >= a - 1e-12) & (t < b - 1e-12)] = s.rate
    theta = sc.theta0 + np.concatenate([[0.0], np.cumsum(rate[:-1] * dt)])
    if disturbance:
        absrate = np.concatenate([[0.0], np.cumsum(np.abs(rate[:-1]) * dt)])
        phases = {j: catalog[j] * absrate for j in sc.imperfections}
        Tgb = gearbox_torque(phases, sc.n_harmonics)
    else:
        Tgb = np.zeros(n)
    inputs = ["T_gb"] + (["n_imu", "n_str"] if sc.noise_seed is not None else [])
    cache = _DiscreteCache(p, dt, inputs, ["thetad_G", "theta_G"])
    U = Tgb[:, None]
    if sc.noise_seed is not None:
        rng = np.random.default_rng(sc.noise_seed)
        # unit-PSD white noise sampled at dt has variance 1/(2 dt) per one-sided Hz convention
        U = np.hstack([U, rng.standard_normal((n, 6)) / np.sqrt(2.0 * dt)])
    grid_idx = np.round(theta / sc.relin_step).astype(int)
    change = np.flatnonzero(np.diff(grid_idx)) + 1
    bounds = np.concatenate([[0], change, [n]])
    Y = np.empty((n, 6))
    x = None
    for a, b in zip(bounds[:-1], bounds[1:]):
        md = cache.get(grid_idx[a] * sc.relin_step)
        if x is None:
            x = np.zeros(md.nx)
        X, x = propagate(md.A, md.B, U[a:b], x)
        Y[a:b] = X @ md.C.T + U[a:b] @ md.D.T
    sel = slice(0, n, sc.substeps)
    samples = np.column_stack([Y[sel], np.rad2deg(theta[sel]), Tgb[sel]])
    chans = ("thetad_G[0]", "thetad_G[1]", "thetad_G[2]", "theta_G[0]", "theta_G[1]", "theta_G[2]",
             "theta_r_deg", "T_gb")
    return TimeSeries(0.0, dt_out, chans, samples)


def segment_fundamentals(sc: ValidationScenario, catalog: dict) -> list[dict]:
    """Gearbox fundamental frequency (Hz) of each imperfection in every segment."""
    out = []
    for s in sc.segments:
        out.append({j: catalog[j] * abs(s.rate) / (2 * np.pi) for j in sc.imperfections})
    return out
