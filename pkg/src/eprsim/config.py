"""Versioned JSON run configuration.

A config names the physical setup (``experiment``), the acquisition, the
wavepacket mode, analysis settings, an optional phase-lock model and output
paths. Unknown keys are rejected. Gains are given in dB; the source squeezing
is given as exactly one of ``r0``, ``source_squeezing_db`` (dB below shot
noise at the OPA output) or ``target_db`` (low-frequency measured level; r0 is
solved from the total efficiency).
"""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from pathlib import Path

import jsonschema
import numpy as np

from eprsim import spectral
from eprsim.analysis import DEFAULT_BAND, DEFAULT_MAX_LAG, ModeFunction
from eprsim.errors import ConfigError
from eprsim.lock import LockConfig

SCHEMA_VERSION = 1

_num = {"type": "number"}
_eff = {"type": "number", "minimum": 0, "maximum": 1}
_pos = {"type": "number", "exclusiveMinimum": 0}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["version"],
    "properties": {
        "version": {"const": SCHEMA_VERSION},
        "experiment": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "r0": {"type": "number", "minimum": 0},
                "source_squeezing_db": {"type": "number", "minimum": 0},
                "target_db": {"type": "number", "exclusiveMaximum": 0},
                "opa_fwhm_hz": _pos,
                "squeezing_profile": {"enum": list(spectral.SQUEEZING_PROFILES)},
                "eta_state": _eff,
                "eta_opa": _eff,
                "eta_hd": _eff,
                "eta_extra": _eff,
                "gain_db": {"type": "number", "minimum": 0},
                "chain": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["kind", "cutoff_hz"],
                        "properties": {"kind": {"enum": list(spectral.FILTER_KINDS)}, "cutoff_hz": _pos},
                    },
                },
                "clearance_db": {
                    "oneOf": [
                        {"type": "null"},
                        {
                            "type": "array",
                            "minItems": 1,
                            "items": {"type": "array", "items": _num, "minItems": 2, "maxItems": 2},
                        },
                    ]
                },
                "phase_rms_rad": {"type": "number", "minimum": 0},
            },
        },
        "acquisition": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "fs_hz": _pos,
                "n_points": {"type": "integer", "minimum": 2},
                "n_frames": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
                "workers": {"type": "integer", "minimum": 1},
            },
        },
        "mode": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "shape": {"enum": ["polynomial-gaussian", "raised-cosine", "custom-table"]},
                "gamma_per_s": _pos,
                "period_s": _pos,
                "table": {"type": "array", "items": _num},
            },
        },
        "analysis": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "max_lag": {"type": "integer", "minimum": 1},
                "band_hz": _pos,
                "gains_db": {"type": "array", "items": {"type": "number", "minimum": 0}},
            },
        },
        "lock": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "cycle_s": _pos,
                "control_s": _pos,
                "measure_s": _pos,
                "n_loops": {"type": "integer", "minimum": 1},
                "probe_detunings_hz": {"type": "array", "items": _num},
                "drift_rad2_per_s": {"type": "number", "minimum": 0},
                "servo_bandwidth_hz": _pos,
                "dt_s": _pos,
                "n_cycles": {"type": "integer", "minimum": 1},
                "apply_to_model": {"type": "boolean"},
            },
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"dir": {"type": "string"}},
        },
    },
}

DEFAULT_GAINS_DB = [0.0, 2.5, 5.0, 7.5, 10.0, 12.5, 15.0, 17.5, 20.0, 22.5, 25.0, 27.5, 30.0]


def paper_config() -> dict:
    """Config dict for the reported setup (5000 frames x 5121 points at 256 GSa/s)."""
    p = spectral.paper_params()
    return {
        "version": SCHEMA_VERSION,
        "experiment": {
            "target_db": spectral.PAPER_TARGET_DB,
            "opa_fwhm_hz": p.opa_fwhm,
            "squeezing_profile": p.squeezing_profile,
            "eta_state": p.eta_state,
            "eta_opa": p.eta_opa,
            "eta_hd": p.eta_hd,
            "eta_extra": p.eta_extra,
            "gain_db": p.gain_db,
            "chain": [{"kind": s.kind, "cutoff_hz": s.cutoff} for s in p.chain.stages],
            "clearance_db": [list(c) for c in p.clearance],
        },
        "acquisition": {"fs_hz": 256e9, "n_points": 5121, "n_frames": 5000, "seed": 20240607, "workers": 1},
        "mode": {"shape": "polynomial-gaussian", "gamma_per_s": 1e11, "period_s": 40e-12},
        "analysis": {"max_lag": DEFAULT_MAX_LAG, "band_hz": DEFAULT_BAND, "gains_db": list(DEFAULT_GAINS_DB)},
        "output": {"dir": "out"},
    }


@dataclass(frozen=True)
class Acquisition:
    fs: float = 256e9
    n_points: int = 5121
    n_frames: int = 5000
    seed: int = 20240607
    workers: int = 1


@dataclass(frozen=True)
class RunConfig:
    experiment: spectral.ExperimentParams
    acquisition: Acquisition
    mode: ModeFunction
    max_lag: int
    band: float
    gains_db: tuple
    lock: LockConfig | None
    lock_cycles: int
    lock_applied: bool
    output_dir: Path
    raw: dict

    def with_seed(self, seed: int) -> "RunConfig":
        raw = copy.deepcopy(self.raw)
        raw.setdefault("acquisition", {})["seed"] = int(seed)
        return parse_config(raw)

    def with_phase_rms(self, phase_rms: float) -> "RunConfig":
        raw = copy.deepcopy(self.raw)
        raw.setdefault("experiment", {})["phase_rms_rad"] = float(phase_rms)
        return parse_config(raw)


def _experiment(d: dict) -> spectral.ExperimentParams:
    keys = [k for k in ("r0", "source_squeezing_db", "target_db") if k in d]
    if len(keys) > 1:
        raise ConfigError(f"give only one of r0 / source_squeezing_db / target_db, got {keys}")
    kw = {}
    if "chain" in d:
        kw["chain"] = spectral.TransferChain(
            tuple(spectral.FilterStage(s["kind"], s["cutoff_hz"]) for s in d["chain"])
        )
    if "clearance_db" in d:
        kw["clearance"] = None if d["clearance_db"] is None else tuple(tuple(c) for c in d["clearance_db"])
    names = {
        "opa_fwhm_hz": "opa_fwhm",
        "squeezing_profile": "squeezing_profile",
        "eta_state": "eta_state",
        "eta_opa": "eta_opa",
        "eta_hd": "eta_hd",
        "eta_extra": "eta_extra",
        "gain_db": "gain_db",
        "phase_rms_rad": "phase_rms",
    }
    for src, dst in names.items():
        if src in d:
            kw[dst] = d[src]
    try:
        params = spectral.ExperimentParams(r0=0.0, **kw)
        if "r0" in d:
            return params.replace(r0=float(d["r0"]))
        if "source_squeezing_db" in d:
            return params.replace(r0=float(d["source_squeezing_db"]) * np.log(10) / 20.0)
        target = d.get("target_db", spectral.PAPER_TARGET_DB if not keys else None)
        return params.replace(r0=spectral.solve_r0(target, params.eta_total))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def parse_config(raw: dict) -> RunConfig:
    """Validate ``raw`` against the schema and build typed run settings."""
    try:
        jsonschema.validate(raw, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {where}: {exc.message}") from exc
    exp = _experiment(raw.get("experiment", {}))
    a = raw.get("acquisition", {})
    acq = Acquisition(
        fs=float(a.get("fs_hz", 256e9)),
        n_points=int(a.get("n_points", 5121)),
        n_frames=int(a.get("n_frames", 5000)),
        seed=int(a.get("seed", Acquisition.seed)),
        workers=int(a.get("workers", 1)),
    )
    m = raw.get("mode", {})
    try:
        mode = ModeFunction(
            shape=m.get("shape", "polynomial-gaussian"),
            gamma=float(m.get("gamma_per_s", 1e11)),
            period=float(m.get("period_s", 40e-12)),
            table=tuple(m["table"]) if "table" in m else None,
        )
        mode.samples(acq.fs)
    except ValueError as exc:
        raise ConfigError(f"mode: {exc}") from exc
    an = raw.get("analysis", {})
    max_lag = int(an.get("max_lag", DEFAULT_MAX_LAG))
    if acq.n_points < 2 * max_lag:
        raise ConfigError("acquisition.n_points must be at least 2 * analysis.max_lag")
    lock = None
    lk = raw.get("lock")
    if lk is not None:
        try:
            lock = LockConfig(
                cycle=lk.get("cycle_s", 400e-6),
                control=lk.get("control_s", 360e-6),
                measure=lk.get("measure_s", 40e-6),
                n_loops=lk.get("n_loops", 7),
                probe_detunings=tuple(lk.get("probe_detunings_hz", (0.8e6, 0.5e6))),
                drift=lk.get("drift_rad2_per_s", 50.0),
                servo_bandwidth=lk.get("servo_bandwidth_hz", 20e3),
                dt=lk.get("dt_s", 1e-6),
            )
        except ValueError as exc:
            raise ConfigError(f"lock: {exc}") from exc
    return RunConfig(
        experiment=exp,
        acquisition=acq,
        mode=mode,
        max_lag=max_lag,
        band=float(an.get("band_hz", DEFAULT_BAND)),
        gains_db=tuple(an.get("gains_db", DEFAULT_GAINS_DB)),
        lock=lock,
        lock_cycles=int((lk or {}).get("n_cycles", 200)),
        lock_applied=bool((lk or {}).get("apply_to_model", True)) and "phase_rms_rad" not in raw.get("experiment", {}),
        output_dir=Path(raw.get("output", {}).get("dir", "out")),
        raw=copy.deepcopy(raw),
    )


def load_config(path) -> RunConfig:
    """Read and validate a JSON config file (OSError propagates)."""
    text = Path(path).read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    return parse_config(raw)
