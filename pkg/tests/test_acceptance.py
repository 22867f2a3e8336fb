"""Acceptance criteria.  Each test prints one pass/fail line (also collected in
the terminal summary) and then asserts every required property."""

import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np
import pytest
import scipy.integrate as si
import scipy.linalg as sla

from conftest import random_stable, record_acceptance
from sadmjitter.analysis import (
    ValidationScenario,
    find_harmonic_peaks,
    segment_fundamentals,
    spectrogram,
    validation_run,
    worst_case_for_rate,
)
from sadmjitter.assembly import SpacecraftParams, default_catalog, gear_train_from_config, structure_model
from sadmjitter.cli import frequency_report
from sadmjitter.config import ProjectConfig
from sadmjitter.disturbance import DisturbanceContext, fourier_sawtooth, microstep_bank, sawtooth_exact, \
    sawtooth_tail_rms
from sadmjitter.geartrain import imperfection_catalog, solve_rates
from sadmjitter.lti import TimeSeries, connect, discretize_zoh, h2_norm, hinf_norm, simulate, ss
from sadmjitter.observer import (
    ObserverProblem,
    SynthesisWeights,
    balanced_reduce,
    band_error_ratio_db,
    estimate_run,
    harmonic_peak_match,
    synth_observer,
)
from sadmjitter.titop import rotation_dcm, tau_of_angle

pytestmark = pytest.mark.slow


def _rel(a, b):
    return abs(a - b) / abs(b)


def _rel_printed(value, published):
    """Relative error after rounding ``value`` to the digits the table prints."""
    text = f"{published:.10g}"
    decimals = len(text.split(".")[1]) if "." in text else 0
    return _rel(round(value, decimals), published)


# ------------------------------------------------------------------ 1

def test_criterion_1_gear_train():
    t0 = time.perf_counter()
    g = gear_train_from_config(ProjectConfig())
    rates = solve_rates(g)
    cat = imperfection_catalog(g)
    dt = time.perf_counter() - t0
    table1 = {"1": -184.0, "2": 0.0, "3": 13.33, "4": 1.0}
    table2 = [13616, 184, 197.3, 14800, 197.3, 185]
    sources = [1, 74, 69, 1, 75, 80]
    err1 = max(abs(rates[b] - v) if v == 0 else _rel(rates[b], v) for b, v in table1.items())
    err2 = max(_rel(i.frequency, v) for i, v in zip(cat, table2))
    ok = err1 <= 1e-3 and err2 <= 1e-3 and [i.sources for i in cat] == sources and dt < 1.0
    record_acceptance(1, ok, f"rates max rel err {err1:.2e}, catalog max rel err {err2:.2e}, "
                             f"sources {[i.sources for i in cat]}, {dt:.3f} s")
    assert ok


# ------------------------------------------------------------------ 2

def test_criterion_2_fundamentals():
    t0 = time.perf_counter()
    rep = frequency_report(ProjectConfig())["fundamentals"]
    dt = time.perf_counter() - t0
    published = {("slow", "microstep_hz"): 88.320, ("fast", "microstep_hz"): 301.76,
                 ("slow", "detent_hz"): 11.040, ("fast", "detent_hz"): 37.720,
                 ("slow", "gearbox_2_hz"): 0.0307, ("fast", "gearbox_2_hz"): 0.1048,
                 ("slow", "gearbox_3_hz"): 0.0329, ("fast", "gearbox_3_hz"): 0.1124}
    raw = {k: _rel(rep[k[0]][k[1]], v) for k, v in published.items()}
    printed = {k: _rel_printed(rep[k[0]][k[1]], v) for k, v in published.items()}
    ok = max(printed.values()) <= 1e-3 and dt < 1.0
    worst = max(raw, key=raw.get)
    record_acceptance(2, ok, f"max rel err at printed precision {max(printed.values()):.2e}; "
                             f"largest raw rel err {raw[worst]:.2e} at {worst[0]} {worst[1]} "
                             f"({rep[worst[0]][worst[1]]:.6g} vs {published[worst]}); {dt:.3f} s")
    assert ok


# ------------------------------------------------------------------ 3

def test_criterion_3_modal_placement():
    t0 = time.perf_counter()
    p = SpacecraftParams.from_config()
    ev = structure_model(p, 0.0).poles()
    modes = np.unique(np.abs(ev[ev.imag > 1e-6]) / (2 * np.pi))
    dt = time.perf_counter() - t0
    # the five lowest flexible modes are the array modes; the drive modes are matched by proximity
    array = [(f, 0.05, modes[k]) for k, f in enumerate((0.42, 0.61, 1.58, 2.83, 4.30))]
    drive = [(f, tol, modes[np.argmin(np.abs(modes - f))]) for f, tol in ((6.052, 0.05), (125.4, 0.02))]
    parts, ok = [], dt < 30.0
    for f, tol, got in array + drive:
        good = _rel(got, f) <= tol
        ok &= good
        parts.append(f"{f}->{got:.4g}{'' if good else ' (off ' + format(100 * _rel(got, f), '.1f') + '%)'}")
    record_acceptance(3, bool(ok), "; ".join(parts) + f"; {dt:.2f} s")
    assert ok


# ------------------------------------------------------------------ 4

def _worst_case(rate):
    return worst_case_for_rate(ProjectConfig(), rate)


def test_criterion_4_worst_case():
    cfg = ProjectConfig()
    t0 = time.perf_counter()
    with ProcessPoolExecutor(max_workers=2) as pool:
        slow, fast = pool.map(_worst_case, ["slow", "fast"])
    dt = time.perf_counter() - t0
    step = cfg.worst_case.tau_max / (cfg.worst_case.tau_points - 1)
    tau90 = tau_of_angle(np.pi / 2)
    checks = {
        "theta 90 +- step (slow)": abs(slow.tau - tau90) <= step + 1e-12,
        "theta 90 +- step (fast)": abs(fast.tau - tau90) <= step + 1e-12,
        "f_crit in [0.90, 0.96] (slow)": 0.90 <= slow.frequency_hz <= 0.96,
        "f_crit in [0.90, 0.96] (fast)": 0.90 <= fast.frequency_hz <= 0.96,
        "fast > 1 > slow": fast.gain_refined > 1.0 > slow.gain_refined,
        "fast in [1.7, 2.3]": 1.7 <= fast.gain_refined <= 2.3,
        "runtime < 600 s": dt < 600.0,
    }
    ok = all(checks.values())
    failed = [k for k, v in checks.items() if not v]
    record_acceptance(4, ok, f"slow gain {slow.gain_refined:.4g} at {slow.frequency_hz:.4g} Hz, "
                             f"theta {slow.theta_r_deg:.1f} deg; fast gain {fast.gain_refined:.4g} at "
                             f"{fast.frequency_hz:.4g} Hz, theta {fast.theta_r_deg:.1f} deg; {dt:.0f} s"
                             + (f"; failed: {', '.join(failed)}" if failed else ""))
    assert ok


# ------------------------------------------------------------------ 5

def test_criterion_5_disturbance_spectra():
    t0 = time.perf_counter()
    p = SpacecraftParams.from_config()
    bank = microstep_bank(DisturbanceContext(np.deg2rad(0.06), p.stepper, p.gearbox.N_g), 10)
    h = np.arange(1, 11)
    peak_err = float(np.max(np.abs(bank.peak_gains() - 1.0 / (np.pi * h)) * np.pi * h))
    t = (np.arange(200000) + 0.5) / 200000
    rms = float(np.sqrt(np.mean((fourier_sawtooth(2 * np.pi * t, 10) - sawtooth_exact(t, 1.0)) ** 2)))
    tail = sawtooth_tail_rms(10)
    dt = time.perf_counter() - t0
    ok = peak_err <= 1e-12 and rms <= tail * (1 + 1e-6) and rms >= tail * (1 - 1e-3) and dt < 5.0
    record_acceptance(5, ok, f"bank peak rel err {peak_err:.1e}; sawtooth error rms {rms:.6f} vs "
                             f"Parseval tail {tail:.6f}; {dt:.2f} s")
    assert ok


# ------------------------------------------------------------------ 6

def test_criterion_6_validation_scenario():
    cfg = ProjectConfig()
    v = cfg.validation
    t0 = time.perf_counter()
    sc = ValidationScenario.orbit(v.theta_r0_deg, cfg.rates.slow_deg_s, cfg.rates.fast_deg_s, v.duration,
                                  sample_rate=v.sample_rate, substeps=v.substeps,
                                  relin_step=np.deg2rad(v.relin_step_deg),
                                  n_harmonics=cfg.disturbance.n_gearbox_validation)
    catalog = default_catalog(cfg)
    ts = validation_run(SpacecraftParams.from_config(cfg), sc, catalog)
    x = ts.channel("thetad_G[0]")
    edges = np.round(np.cumsum([0.0] + [s.duration for s in sc.segments]) / ts.dt).astype(int)
    # one STFT per rate segment; frames as long as possible while leaving room for the rate transient
    window = int(0.8 * np.diff(edges).min())
    found, total, rms = 0, 0, []
    for (a, b), funds in zip(zip(edges[:-1], edges[1:]), segment_fundamentals(sc, catalog)):
        seg = x[a:b]
        sp = spectrogram(seg, ts.dt, window, window // 2)
        mag = sp.magnitude.mean(axis=0)
        for f0 in funds.values():
            res = find_harmonic_peaks(sp.freqs, mag, [k * f0 for k in range(1, 11)])
            found += sum(r[2] and r[3] for r in res)
            total += len(res)
        rms.append(float(np.sqrt(np.mean(seg ** 2))))
    dt = time.perf_counter() - t0
    ok = found == total and rms[1] > rms[0] and dt < 300.0
    record_acceptance(6, ok, f"{found}/{total} harmonic ridges detected ({window * ts.dt:.0f} s frames); rms thetad_G(1) slow {rms[0]:.3e}, "
                             f"fast {rms[1]:.3e} rad/s; {dt:.1f} s")
    assert ok


# ------------------------------------------------------------------ 7

def test_criterion_7_observer():
    cfg = ProjectConfig()
    o = cfg.observer
    p = SpacecraftParams.from_config(cfg)
    w = SynthesisWeights.from_config(cfg)
    taus = np.linspace(0.0, 1.0, o.tau_synth_points)
    t0 = time.perf_counter()
    res = synth_observer(p, w, taus, order=o.order, n_k=o.n_k, evals_per_stage=o.evals_per_stage,
                         hard_target=o.hard_target)
    obs = res.observer
    gamma1_check = ObserverProblem(p, taus, w).gamma1(obs, taus)
    stable = obs.is_stable_on(np.linspace(0.0, 1.0, o.tau_check_points))
    catalog = default_catalog(cfg)
    Om = cfg.rates.get("slow")
    run = estimate_run(p, obs, Om, catalog, duration=o.run_duration, tau0=o.run_tau0,
                       n_harmonics=cfg.disturbance.n_gearbox_observer, noise_seed=cfg.seed, weights=w)
    peaks = harmonic_peak_match(run, catalog, Om, tuple(cfg.disturbance.imperfections),
                                cfg.disturbance.n_gearbox_observer)
    band = band_error_ratio_db(run)
    dt = time.perf_counter() - t0
    matched = sum(r["match"] for r in peaks)
    checks = {
        "4 states": obs.n_c == 4,
        "affine in tau": bool(np.any(obs.B1)),
        "gamma1 <= 2": res.gamma1 <= 2.0,
        "gamma1 recomputed": abs(gamma1_check - res.gamma1) <= 1e-6 * max(1.0, res.gamma1),
        "relaxed gamma1 <= gamma1": res.gamma1_relaxed <= res.gamma1 * (1 + 1e-12),
        "stable at 21 tau": stable,
        "peaks": matched == len(peaks),
        "band error <= -20 dB": band <= -20.0,
        "runtime < 900 s": dt < 900.0,
    }
    ok = all(checks.values())
    failed = [k for k, v in checks.items() if not v]
    record_acceptance(7, ok, f"gamma1 {res.gamma1:.4f} (recomputed {gamma1_check:.4f}), gamma2 {res.gamma2:.4g}, "
                             f"relaxed gamma1 {res.gamma1_relaxed:.4f}, stable {stable}, peaks {matched}/"
                             f"{len(peaks)}, max peak err {max(abs(r['amplitude_db']) for r in peaks):.2f} dB, "
                             f"band error {band:.1f} dB, {dt:.0f} s"
                             + (f"; failed: {', '.join(failed)}" if failed else ""))
    assert ok


# ------------------------------------------------------------------ 8

def _steady_state_error(rng):
    m = random_stable(rng, 4, 1, 1, margin=0.5)
    w = float(rng.uniform(0.2, 3.0))
    dt = 0.002 / w
    decay = -np.linalg.eigvals(m.A).real.max()
    n_settle, n_fit = int(np.ceil(30 / decay / dt)), int(np.ceil(8 * np.pi / w / dt))
    t = dt * np.arange(n_settle + n_fit)
    y = simulate(discretize_zoh(m, dt), TimeSeries(0.0, dt, ("u",), np.sin(w * t))).samples[n_settle:, 0]
    tf = t[n_settle:]
    coef, *_ = np.linalg.lstsq(np.column_stack([np.sin(w * tf), np.cos(w * tf)]), y, rcond=None)
    G = (m.C @ np.linalg.solve(1j * w * np.eye(m.nx) - m.A, m.B))[0, 0]
    return _rel(np.hypot(*coef), abs(G))


def _h2_error(rng):
    m = random_stable(rng, 4, 2, 2, margin=0.5)
    T = 40.0 / -np.linalg.eigvals(m.A).real.max()
    energy, _ = si.quad_vec(lambda t: np.sum((m.C @ sla.expm(m.A * t) @ m.B) ** 2), 0.0, T, epsrel=1e-10)
    return _rel(h2_norm(m), np.sqrt(energy))


def _hankel_margin(rng):
    m = random_stable(rng, 6, 2, 2, margin=0.2)
    order = int(rng.integers(1, 6))
    red = balanced_reduce(m, order)
    r = red.model
    err = ss(sla.block_diag(m.A, r.A), np.vstack([m.B, r.B]), np.hstack([m.C, -r.C]), m.D - r.D)
    return hinf_norm(err)[0] / red.error_bound


def _assoc_error(rng):
    def series(a, b):
        a, b = a.with_name("a"), b.with_name("b")
        return connect([a, b], [("a.y", "b.u")], [("u", "a.u")], [("y", "b.y")])

    G = [random_stable(rng, int(rng.integers(1, 5)), 2, 2, strictly_proper=False) for _ in range(3)]
    left, right = series(series(G[0], G[1]), G[2]), series(G[0], series(G[1], G[2]))
    worst = 0.0
    for w in (0.03, 0.7, 11.0):
        a = left.C @ np.linalg.solve(1j * w * np.eye(left.nx) - left.A, left.B) + left.D
        b = right.C @ np.linalg.solve(1j * w * np.eye(right.nx) - right.A, right.B) + right.D
        worst = max(worst, np.linalg.norm(a - b) / max(1.0, np.linalg.norm(a)))
    return worst


def _rotation_error(rng):
    a = rng.uniform(-np.pi, np.pi, 50)
    return max(np.abs(rotation_dcm(tau=np.tan(x / 4)) -
                      np.array([[np.cos(x), -np.sin(x), 0], [np.sin(x), np.cos(x), 0], [0, 0, 1]])).max()
               for x in a)


def test_criterion_8_numerics():
    t0 = time.perf_counter()
    seeds = range(10)
    steady = max(_steady_state_error(np.random.default_rng(s)) for s in seeds)
    h2 = max(_h2_error(np.random.default_rng(100 + s)) for s in seeds)
    hankel = max(_hankel_margin(np.random.default_rng(200 + s)) for s in seeds)
    assoc = max(_assoc_error(np.random.default_rng(300 + s)) for s in seeds)
    rot = max(_rotation_error(np.random.default_rng(400 + s)) for s in seeds)
    dt = time.perf_counter() - t0
    ok = steady <= 5e-3 and h2 <= 1e-4 and hankel <= 1 + 1e-6 and assoc <= 1e-8 and rot <= 1e-12
    record_acceptance(8, ok, f"steady-state {steady:.1e}, h2 {h2:.1e}, error/Hankel bound {hankel:.3f}, "
                             f"associativity {assoc:.1e}, rotation {rot:.1e} (10 seeds each); {dt:.1f} s")
    assert ok
