"""Command-line entry point.

Every command loads the configuration (file plus ``SADMJITTER_*`` environment
overrides), writes its artifacts to ``--out`` and a ``manifest.json`` holding
the config digest, seed and library versions.  Failures print one JSON object
on stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import json
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import SadmError

EXIT_DOMAIN = 2
EXIT_UNEXPECTED = 1


def _versions() -> dict:
    import pydantic
    import scipy
    import yaml

    return {"sadmjitter": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "pydantic": pydantic.__version__, "pyyaml": yaml.__version__}


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(f"not serializable: {type(o).__name__}")


class Run:
    def __init__(self, args, cfg):
        self.args, self.cfg = args, cfg
        self.out = Path(args.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.files: list[str] = []

    def write_text(self, name: str, text: str) -> None:
        (self.out / name).write_text(text)
        self.files.append(name)

    def write_json(self, name: str, obj) -> None:
        _dump(self.out / name, obj)
        self.files.append(name)

    def manifest(self) -> None:
        flags = {k: v for k, v in sorted(vars(self.args).items()) if k not in ("func", "out")}
        _dump(self.out / "manifest.json", {"command": self.args.command, "flags": flags,
                                           "config_sha256": self.cfg.digest(), "seed": self.cfg.seed,
                                           "versions": _versions(), "outputs": sorted(self.files)})


# ------------------------------------------------------------------ commands

def frequency_report(cfg) -> dict:
    from .assembly import SpacecraftParams, default_catalog, gear_train_from_config
    from .disturbance import DisturbanceContext, detent_period, gearbox_period, microstep_period
    from .geartrain import imperfection_catalog, solve_rates

    p = SpacecraftParams.from_config(cfg)
    gt = gear_train_from_config(cfg)
    catalog = default_catalog(cfg)
    rates = {}
    for rate in ("slow", "fast"):
        ctx = DisturbanceContext(cfg.rates.get(rate), p.stepper, p.gearbox.N_g)
        row = {"omega_q_deg_s": float(np.rad2deg(ctx.Omega_q)),
               "microstep_hz": microstep_period(ctx)[1], "detent_hz": detent_period(ctx)[1]}
        for j in cfg.disturbance.imperfections:
            row[f"gearbox_{j}_hz"] = gearbox_period(ctx, catalog[j])[1]
        rates[rate] = row
    return {"body_rates": solve_rates(gt),
            "catalog": [{"number": i.number, "frequency": i.frequency, "mesh": i.mesh, "cause": i.cause,
                         "sources": i.sources} for i in imperfection_catalog(gt)],
            "fundamentals": rates}


def cmd_freqs(run: Run) -> dict:
    rep = frequency_report(run.cfg)
    run.write_json("freqs.json", rep)
    lines = ["rate,omega_q (deg/s),microstep (Hz),detent (Hz)," +
             ",".join(f"gearbox {j} (Hz)" for j in run.cfg.disturbance.imperfections)]
    for rate, row in rep["fundamentals"].items():
        vals = [row["omega_q_deg_s"], row["microstep_hz"], row["detent_hz"]] + \
               [row[f"gearbox_{j}_hz"] for j in run.cfg.disturbance.imperfections]
        lines.append(rate + "," + ",".join(repr(float(v)) for v in vals))
    run.write_text("freqs.csv", "\n".join(lines) + "\n")
    for line in lines:
        print(line)
    return rep


def cmd_sweep(run: Run) -> dict:
    from .assembly import SpacecraftParams, acs_gains, closed_loop, total_static_inertia
    from .lti import DEFAULT_GRID
    from .analysis import sigma_sweep
    from .titop import angle_of_tau

    cfg = run.cfg
    p = SpacecraftParams.from_config(cfg)
    n = run.args.tau_grid or cfg.worst_case.tau_points
    taus = np.linspace(0.0, cfg.worst_case.tau_max, n)
    thetas = [angle_of_tau(t) for t in taus]
    acs = acs_gains(total_static_inertia(p, 0.0), p.acs_omega, p.acs_zeta)
    sig = sigma_sweep(lambda th: closed_loop(p, th, acs), thetas, DEFAULT_GRID, ["T_gb"], ["e"])
    lines = ["tau,theta_r (deg),omega (rad/s),sigma_max"]
    for t, th, row in zip(taus, thetas, sig):
        lines += [f"{t!r},{float(np.rad2deg(th))!r},{w!r},{s!r}" for w, s in zip(DEFAULT_GRID, row)]
    run.write_text("sweep.csv", "\n".join(lines) + "\n")
    summary = {"tau_points": int(n), "omega_points": int(DEFAULT_GRID.size), "channel": "T_gb -> e",
               "peak": float(sig.max())}
    run.write_json("sweep_summary.json", summary)
    return summary


def cmd_wcgain(run: Run) -> dict:
    from .analysis import worst_case_for_rate

    res = worst_case_for_rate(run.cfg, run.args.rate, run.args.tau_grid, run.args.harmonics)
    d = res.to_dict()
    d["rate"] = run.args.rate
    run.write_json(f"wcgain_{run.args.rate}.json", d)
    lines = ["tau,gain lower bound,gain refined"] + [f"{t!r},{lo!r},{hi!r}" for t, lo, hi in res.per_tau]
    run.write_text(f"wcgain_{run.args.rate}_per_tau.csv", "\n".join(lines) + "\n")
    summary = {k: v for k, v in d.items() if k != "per_tau"}
    print(json.dumps(summary, sort_keys=True, default=_jsonable))
    return summary


def cmd_simulate(run: Run) -> dict:
    from .assembly import SpacecraftParams, default_catalog
    from .analysis import ValidationScenario, segment_fundamentals, validation_run

    cfg = run.cfg
    if run.args.scenario != "validation":
        from .errors import ConfigError
        raise ConfigError(f"unknown scenario {run.args.scenario!r}; available: validation")
    v = cfg.validation
    sc = ValidationScenario.orbit(v.theta_r0_deg, cfg.rates.slow_deg_s, cfg.rates.fast_deg_s, v.duration,
                                  sample_rate=v.sample_rate, substeps=v.substeps,
                                  relin_step=np.deg2rad(v.relin_step_deg),
                                  n_harmonics=run.args.harmonics or cfg.disturbance.n_gearbox_validation,
                                  imperfections=tuple(cfg.disturbance.imperfections),
                                  noise_seed=cfg.seed if v.noise else None)
    catalog = default_catalog(cfg)
    ts = validation_run(SpacecraftParams.from_config(cfg), sc, catalog)
    header = "t (s)," + ",".join(ts.channels)
    t = ts.t0 + ts.dt * np.arange(ts.samples.shape[0])
    body = "\n".join(",".join(repr(float(x)) for x in row) for row in np.column_stack([t, ts.samples]))
    run.write_text("validation.csv", header + "\n" + body + "\n")
    edges = np.cumsum([0.0] + [s.duration for s in sc.segments])
    segs = []
    for s, a, b, f in zip(sc.segments, edges[:-1], edges[1:], segment_fundamentals(sc, catalog)):
        k = (t >= a) & (t < b)
        segs.append({"start_s": float(a), "end_s": float(b), "rate_deg_s": float(np.rad2deg(s.rate)),
                     "rms_thetad_G0": float(np.std(ts.samples[k, 0])),
                     "fundamentals_hz": {str(j): float(v) for j, v in f.items()}})
    summary = {"samples": int(ts.samples.shape[0]), "dt": ts.dt, "segments": segs}
    run.write_json("validation_summary.json", summary)
    return summary


def cmd_observer(run: Run) -> dict:
    from .assembly import SpacecraftParams, default_catalog
    from .observer import SynthesisWeights, band_error_ratio_db, estimate_run, harmonic_peak_match, synth_observer

    cfg = run.cfg
    o = cfg.observer
    p = SpacecraftParams.from_config(cfg)
    w = SynthesisWeights.from_config(cfg)
    n = run.args.tau_grid or o.tau_synth_points
    res = synth_observer(p, w, np.linspace(0.0, 1.0, n), order=o.order, n_k=o.n_k,
                         evals_per_stage=o.evals_per_stage, gamma_ceiling=o.gamma_ceiling,
                         hard_target=o.hard_target)
    run.write_text("observer.json", res.observer.to_json() + "\n")
    catalog = default_catalog(cfg)
    n_h = run.args.harmonics or cfg.disturbance.n_gearbox_observer
    imps = tuple(cfg.disturbance.imperfections)
    Om = cfg.rates.get("slow")
    er = estimate_run(p, res.observer, Om, catalog, duration=o.run_duration, tau0=o.run_tau0, n_harmonics=n_h,
                      imperfections=imps, noise_seed=cfg.seed, weights=w)
    peaks = harmonic_peak_match(er, catalog, Om, imps, n_h)
    lines = ["frequency (Hz),|T_gb| (N m),|T_hat| (N m)"]
    lines += [f"{f!r},{a!r},{b!r}" for f, a, b in zip(er.freqs, er.spectrum_true, er.spectrum_est)]
    run.write_text("estimation_fft.csv", "\n".join(lines) + "\n")
    checks = np.linspace(0.0, 1.0, o.tau_check_points)
    summary = {"gamma1": res.gamma1, "gamma2": res.gamma2, "gamma1_relaxed": res.gamma1_relaxed,
               "order": res.observer.n_c, "stable_on_check_grid": res.observer.is_stable_on(checks),
               "band_error_db": band_error_ratio_db(er), "harmonics_matched": sum(r["match"] for r in peaks),
               "harmonics_checked": len(peaks), "peaks": peaks, "history": res.history}
    run.write_json("observer_summary.json", summary)
    print(json.dumps({k: summary[k] for k in ("gamma1", "gamma2", "band_error_db", "harmonics_matched")}, default=_jsonable))
    return summary


COMMANDS = {"freqs": cmd_freqs, "sweep": cmd_sweep, "wcgain": cmd_wcgain, "simulate": cmd_simulate,
            "observer": cmd_observer}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sadmjitter", description="SADM micro-vibration analysis toolkit")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        sp = sub.add_parser(name, help=(fn.__doc__ or name).strip().splitlines()[0] if fn.__doc__ else name)
        sp.add_argument("--config", default=None, help="YAML or JSON configuration file")
        sp.add_argument("--out", default="out", help="output directory")
        sp.add_argument("--seed", type=int, default=None, help="override the configured seed")
        sp.add_argument("--rate", choices=("slow", "fast"), default="slow")
        sp.add_argument("--scenario", default="validation")
        sp.add_argument("--harmonics", type=int, default=None, help="gearbox harmonics per imperfection")
        sp.add_argument("--tau-grid", type=int, default=None, help="number of tau grid points")
        sp.set_defaults(func=fn)
    return ap


def main(argv=None) -> int:
    from .config import load_config

    args = build_parser().parse_args(argv)
    try:
        for flag in ("harmonics", "tau_grid"):
            v = getattr(args, flag)
            if v is not None and v < 1:
                from .errors import ConfigError
                raise ConfigError(f"--{flag.replace('_', '-')} must be positive")
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = cfg.model_copy(update={"seed": args.seed})
        run = Run(args, cfg)
        args.func(run)
        run.manifest()
    except SadmError as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return EXIT_DOMAIN
    except Exception as exc:  # noqa: BLE001
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return EXIT_UNEXPECTED
    return 0


if __name__ == "__main__":
    sys.exit(main())
