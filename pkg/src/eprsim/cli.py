"""``eprsim`` command line: predict, simulate, analyze, sweep-gain, fit and report.

Exit codes: 0 ok, 2 config error, 3 model error, 4 I/O error.
"""
from __future__ import annotations

import argparse
import csv
import datetime
import json
import platform
import sys
from pathlib import Path

import numpy as np

from eprsim import __version__, analysis, kernels, spectral, synth
from eprsim.config import RunConfig, load_config, paper_config, parse_config
from eprsim.errors import ConfigError, FitError, ModelError
from eprsim.fit import fit_efficiencies
from eprsim.lock import expected_residual_rms, simulate_residual_phase

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_MODEL = 3
EXIT_IO = 4

FRAME_FILES = {"x": "signal_x.frm", "p": "signal_p.frm", "shot": "shot.frm"}


class InputError(Exception):
    """An input file is missing, unreadable or malformed."""


def _dump(obj, path: Path) -> Path:
    path.write_text(json.dumps(analysis._jsonable(obj), indent=2, sort_keys=True) + "\n")
    return path


def _provenance(cfg: RunConfig, reproducible: bool) -> dict:
    meta = {"eprsim_version": __version__, "kernels": kernels.BACKEND, "config": cfg.raw}
    if not reproducible:
        meta["generated_at"] = datetime.datetime.now(datetime.timezone.utc).isoformat()
        meta["python"] = platform.python_version()
        meta["numpy"] = np.__version__
    return meta


def resolve_lock(cfg: RunConfig) -> tuple[RunConfig, dict | None]:
    """Simulate the phase lock (if configured) and fold its residual into the model."""
    if cfg.lock is None:
        return cfg, None
    res = simulate_residual_phase(cfg.lock, cfg.lock_cycles, cfg.acquisition.seed)
    meta = {
        "config": cfg.lock.to_dict(),
        "n_cycles": cfg.lock_cycles,
        "residual_rms_rad": res.rms,
        "expected_rms_rad": expected_residual_rms(cfg.lock),
        "applied_to_model": cfg.lock_applied,
    }
    if cfg.lock_applied:
        cfg = cfg.with_phase_rms(res.rms)
    return cfg, meta


def low_frequency_db(params: spectral.ExperimentParams) -> dict:
    """Shot-normalized combo levels at zero frequency (no filtering or circuit noise)."""
    out = {}
    for label, combo in analysis.COMBOS.items():
        m = spectral.channel_covariance(params, combo.quadrature, params.r0)
        c = np.asarray(combo.coefficients)
        out[label] = float(10 * np.log10(c @ m @ c))
    return out


def predict(cfg: RunConfig) -> dict:
    """Closed-form report for ``cfg`` without synthesis."""
    p = cfg.experiment
    fs, n = cfg.acquisition.fs, cfg.acquisition.n_points
    mode = cfg.mode.samples(fs)
    lf = low_frequency_db(p)
    combos, ratios = {}, {}
    vac = p.replace(r0=0.0)
    for label in analysis.COMBOS:
        full = spectral.predicted_noise_ratio(p, label, fs, n)
        band = spectral.predicted_noise_ratio(p, label, fs, n, band=cfg.band)
        wp = spectral.predicted_wavepacket_ratio(p, label, mode, fs, n)
        lags, curve = spectral.predicted_autocorrelation(p, label, fs, n, cfg.max_lag)
        _, ref = spectral.predicted_autocorrelation(vac, label, fs, n, cfg.max_lag)
        try:
            width = analysis.correlation_width(lags, curve - ref)
        except ValueError:
            width = None
        ratios[label] = {"low_frequency": 10 ** (lf[label] / 10), "pointwise": full, "wavepacket": wp}
        combos[label] = {
            "low_frequency_db": lf[label],
            "pointwise_db": float(10 * np.log10(full)),
            "pointwise_band_db": float(10 * np.log10(band)),
            "wavepacket_db": float(10 * np.log10(wp)),
            "correlation_width_s": width,
        }
    duan = {k: 0.5 * ratios["x_minus"][k] + 0.5 * ratios["p_plus"][k] for k in ratios["x_minus"]}
    sweep = []
    for gdb in cfg.gains_db:
        q = p.replace(gain_db=float(gdb))
        sweep.append(
            {
                "gain_db": float(gdb),
                "eta_meas": q.eta_meas,
                "eta_total": q.eta_total,
                "x_minus_low_frequency_db": low_frequency_db(q)["x_minus"],
            }
        )
    return {
        "efficiency": {
            "eta_state": p.eta_state,
            "eta_opa": p.eta_opa,
            "eta_hd_eff": p.eta_hd_eff,
            "gain_db": p.gain_db,
            "eta_meas": p.eta_meas,
            "eta_meas_unamplified": p.replace(gain_db=0.0).eta_meas,
            "eta_total": p.eta_total,
        },
        "source": {
            "r0": p.r0,
            "squeezed_variance": float(np.exp(-2 * p.r0)),
            "source_squeezing_db": float(20 * p.r0 / np.log(10)),
            "phase_rms_rad": p.phase_rms,
        },
        "band_hz": cfg.band,
        "combos": combos,
        "duan": duan,
        "gain_sweep": sweep,
        "mode": cfg.mode.describe(),
    }


def simulate(cfg: RunConfig) -> dict:
    a = cfg.acquisition
    kw = dict(fs=a.fs, n_points=a.n_points, n_frames=a.n_frames, seed=a.seed, workers=a.workers)
    return {
        "x": synth.signal_frames(cfg.experiment, "x", **kw),
        "p": synth.signal_frames(cfg.experiment, "p", **kw),
        "shot": synth.shot_reference(cfg.experiment, **kw),
    }


def _load(path: Path) -> synth.FrameSet:
    try:
        return synth.load_frames(path)
    except (OSError, ValueError, KeyError, UnicodeDecodeError) as exc:
        raise InputError(f"cannot read frames from {path}: {exc}") from exc


def _run_analysis(cfg: RunConfig, frames: dict, out: Path, meta: dict) -> analysis.AnalysisReport:
    report = analysis.analyze(frames["x"], frames["p"], frames["shot"], cfg.mode, cfg.max_lag, cfg.band)
    report.metadata.update(meta)
    out.mkdir(parents=True, exist_ok=True)
    report.write_json(out / "report.json")
    report.write_autocorrelation_csv(out / "autocorrelation.csv")
    samples = {
        label: analysis.wavepacket_quadrature(frames[c.quadrature], c, cfg.mode)
        for label, c in analysis.COMBOS.items()
    }
    analysis.write_wavepacket_csv(out / "wavepacket.csv", samples)
    return report


# --- subcommands -----------------------------------------------------------


def cmd_predict(cfg: RunConfig, out: Path, reproducible: bool) -> int:
    cfg, lock = resolve_lock(cfg)
    result = predict(cfg)
    result["metadata"] = _provenance(cfg, reproducible)
    if lock:
        result["metadata"]["lock"] = lock
    out.mkdir(parents=True, exist_ok=True)
    _dump(result, out / "predict.json")
    e = result["efficiency"]
    print(f"eta_meas={e['eta_meas']:.4f} eta_total={e['eta_total']:.4f}")
    for label, c in result["combos"].items():
        print(f"{label:8s} pointwise {c['pointwise_db']:+.3f} dB  wavepacket {c['wavepacket_db']:+.3f} dB")
    print(f"duan (wavepacket) {result['duan']['wavepacket']:.4f}")
    return EXIT_OK


def cmd_simulate(cfg: RunConfig, out: Path, reproducible: bool) -> int:
    cfg, lock = resolve_lock(cfg)
    frames = simulate(cfg)
    out.mkdir(parents=True, exist_ok=True)
    for key, fset in frames.items():
        synth.save_frames(fset, out / FRAME_FILES[key])
        synth.export_csv(fset, out / "csv")
    manifest = {"files": FRAME_FILES, "metadata": _provenance(cfg, reproducible)}
    if lock:
        manifest["metadata"]["lock"] = lock
    _dump(manifest, out / "simulate.json")
    print(f"wrote {len(frames)} frame files to {out}")
    return EXIT_OK


def cmd_analyze(cfg: RunConfig, out: Path, reproducible: bool, args) -> int:
    base = Path(args.frames) if args.frames else None
    paths = {}
    for key in FRAME_FILES:
        given = getattr(args, key)
        if given:
            paths[key] = Path(given)
        elif base is not None:
            paths[key] = base / FRAME_FILES[key]
        else:
            raise ConfigError(f"no frame file for {key!r}: pass --frames DIR or --{key} PATH")
    frames = {k: _load(p) for k, p in paths.items()}
    _, lock = resolve_lock(cfg)
    meta = _provenance(cfg, reproducible)
    if lock:
        meta["lock"] = lock
    report = _run_analysis(cfg, frames, out, meta)
    for label in analysis.COMBOS:
        print(f"{label:8s} tau=0 {report.noise_db[label]:+.3f} dB  wavepacket {report.wavepacket_db[label]:+.3f} dB")
    print(f"duan {report.duan:.4f} +/- {report.duan_stderr:.4f}")
    return EXIT_OK


def cmd_report(cfg: RunConfig, out: Path, reproducible: bool) -> int:
    cfg, lock = resolve_lock(cfg)
    pred = predict(cfg)
    frames = simulate(cfg)
    meta = _provenance(cfg, reproducible)
    if lock:
        meta["lock"] = lock
    meta["prediction"] = pred
    report = _run_analysis(cfg, frames, out, meta)
    for label in analysis.COMBOS:
        print(
            f"{label:8s} tau=0 {report.noise_db[label]:+.3f} dB (predicted {pred['combos'][label]['pointwise_db']:+.3f})"
            f"  wavepacket {report.wavepacket_db[label]:+.3f} dB (predicted {pred['combos'][label]['wavepacket_db']:+.3f})"
        )
    print(f"duan {report.duan:.4f} +/- {report.duan_stderr:.4f}")
    return EXIT_OK


SWEEP_COLUMNS = ["gain_db", "gain", "eta_meas", "eta_total"] + [f"{k}_db" for k in analysis.COMBOS]


def cmd_sweep_gain(cfg: RunConfig, out: Path, reproducible: bool, args) -> int:
    cfg, _ = resolve_lock(cfg)
    gains = cfg.gains_db
    if args.gains:
        try:
            gains = tuple(float(v) for v in args.gains.split(","))
        except ValueError as exc:
            raise ConfigError(f"--gains must be comma-separated numbers: {exc}") from exc
    columns = list(SWEEP_COLUMNS)
    if args.simulate:
        columns += [f"sim_{k}_db" for k in analysis.COMBOS]
    rows = []
    for gdb in gains:
        try:
            p = cfg.experiment.replace(gain_db=gdb)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        row = {"gain_db": gdb, "gain": p.gain, "eta_meas": p.eta_meas, "eta_total": p.eta_total}
        row.update({f"{k}_db": v for k, v in low_frequency_db(p).items()})
        if args.simulate:
            frames = simulate(_with_gain(cfg, gdb))
            for label, c in analysis.COMBOS.items():
                row[f"sim_{label}_db"] = analysis.noise_power_db(frames[c.quadrature], frames["shot"], c)
        rows.append(row)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for row in rows:
            w.writerow([repr(float(row[c])) for c in columns])
    print(f"wrote {len(rows)} gain points to {out / 'sweep.csv'}")
    return EXIT_OK


def _with_gain(cfg: RunConfig, gain_db: float) -> RunConfig:
    raw = json.loads(json.dumps(cfg.raw))
    exp = raw.setdefault("experiment", {})
    # Keep the source fixed: a target level would otherwise be re-solved at the new gain.
    for key in ("target_db", "source_squeezing_db"):
        exp.pop(key, None)
    exp["r0"] = cfg.experiment.r0
    exp["gain_db"] = float(gain_db)
    if cfg.experiment.phase_rms and "phase_rms_rad" not in exp:
        exp["phase_rms_rad"] = cfg.experiment.phase_rms
    return parse_config(raw)


def read_observations(path: Path, column: str) -> tuple[np.ndarray, np.ndarray]:
    """Gains (linear) and levels (dB) from a CSV with ``gain_db`` and ``column``."""
    try:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
    except (OSError, UnicodeDecodeError) as exc:
        raise InputError(f"cannot read observations {path}: {exc}") from exc
    if not rows:
        raise InputError(f"{path} has no observations")
    try:
        gdb = np.array([float(r["gain_db"]) for r in rows])
        y = np.array([float(r[column]) for r in rows])
    except KeyError as exc:
        raise InputError(f"{path} lacks column {exc}") from exc
    except (TypeError, ValueError) as exc:
        raise InputError(f"{path} has a non-numeric entry: {exc}") from exc
    return 10 ** (gdb / 10), y


def cmd_fit(cfg: RunConfig | None, out: Path, reproducible: bool, args) -> int:
    gains, y = read_observations(Path(args.observations), args.column)
    if args.r0 is not None:
        r0 = args.r0
    elif args.free_r0 or cfg is None:
        r0 = None
    else:
        r0 = cfg.experiment.r0
    result = fit_efficiencies(gains, y, r0)
    doc = {"fit": result.to_dict(), "observations": {"gain": gains, "level_db": y, "column": args.column}}
    doc["r0_fixed"] = r0 is not None
    if not reproducible:
        doc["generated_at"] = datetime.datetime.now(datetime.timezone.utc).isoformat()
    out.mkdir(parents=True, exist_ok=True)
    _dump(doc, out / "fit.json")
    print(f"eta_pre={result.eta_pre:.4f} eta_post={result.eta_post:.4f} r0={result.r0:.4f} rms={result.residual:.3g} dB")
    return EXIT_OK


# --- entry point -------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON run config (defaults to the reported setup)")
    common.add_argument("--seed", type=int, help="override acquisition.seed")
    common.add_argument("--out", type=Path, help="output directory (overrides output.dir)")
    common.add_argument("--reproducible", action="store_true", help="omit timestamps and host details")

    parser = argparse.ArgumentParser(prog="eprsim", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"eprsim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("predict", parents=[common], help="closed-form predictions")
    sub.add_parser("simulate", parents=[common], help="synthesize x, p and shot frame files")
    a = sub.add_parser("analyze", parents=[common], help="analyze frame files")
    a.add_argument("--frames", help="directory holding the files written by simulate")
    for key in FRAME_FILES:
        a.add_argument(f"--{key}", help=f"explicit path of the {key} frame file")
    s = sub.add_parser("sweep-gain", parents=[common], help="levels versus PSA gain as CSV")
    s.add_argument("--gains", help="comma-separated gains in dB (overrides analysis.gains_db)")
    s.add_argument("--simulate", action="store_true", help="also measure each gain from synthesized traces")
    f = sub.add_parser("fit", parents=[common], help="fit eta_pre and eta_post to a gain sweep")
    f.add_argument("observations", help="CSV with a gain_db column and a level column")
    f.add_argument("--column", default="x_minus_db", help="level column in dB (default x_minus_db)")
    grp = f.add_mutually_exclusive_group()
    grp.add_argument("--r0", type=float, help="fixed source squeezing parameter")
    grp.add_argument("--free-r0", action="store_true", help="fit r0 as well")
    sub.add_parser("report", parents=[common], help="predict, simulate and analyze in one run")
    return parser


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else parse_config(paper_config())
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("--seed must be >= 0")
        cfg = cfg.with_seed(args.seed)
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "fit" and args.config is None:
            cfg = None
            out = args.out or Path("out")
        else:
            cfg = _config(args)
            out = args.out or cfg.output_dir
        repro = args.reproducible
        if args.command == "predict":
            return cmd_predict(cfg, out, repro)
        if args.command == "simulate":
            return cmd_simulate(cfg, out, repro)
        if args.command == "analyze":
            return cmd_analyze(cfg, out, repro, args)
        if args.command == "sweep-gain":
            return cmd_sweep_gain(cfg, out, repro, args)
        if args.command == "fit":
            return cmd_fit(cfg, out, repro, args)
        return cmd_report(cfg, out, repro)
    except ConfigError as exc:
        print(f"eprsim: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ModelError, FitError, ValueError) as exc:
        print(f"eprsim: model error: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except (InputError, OSError) as exc:
        print(f"eprsim: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
