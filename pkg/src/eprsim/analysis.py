"""Quantum-correlation analysis of synthesized (or recorded) quadrature frames.

All statistics are pooled over every frame and sample and referenced to the
shot-noise frames of the same acquisition, so levels are in dB relative to
shot noise. Frames are processed in chunks to bound memory for full-size runs.
"""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from eprsim import kernels
from eprsim.errors import DegenerateReferenceError
from eprsim.gaussian import to_db
from eprsim.synth import FrameSet

CHUNK = 250
DEFAULT_MAX_LAG = 48
DEFAULT_BAND = 66e9


@dataclass(frozen=True)
class ComboSpec:
    label: str
    coefficients: tuple

    def __post_init__(self):
        c = np.asarray(self.coefficients, dtype=float)
        if not np.isclose(np.linalg.norm(c), 1.0, atol=1e-12):
            raise ValueError("combo coefficients must have unit Euclidean norm")

    @property
    def quadrature(self) -> str:
        return self.label.split("_")[0]


_H = 1.0 / np.sqrt(2.0)
COMBOS = {
    "x_plus": ComboSpec("x_plus", (_H, _H)),
    "x_minus": ComboSpec("x_minus", (_H, -_H)),
    "p_plus": ComboSpec("p_plus", (_H, _H)),
    "p_minus": ComboSpec("p_minus", (_H, -_H)),
}


def _combo(combo) -> ComboSpec:
    return COMBOS[combo] if isinstance(combo, str) else combo


def _check_pair(signal: FrameSet, shot: FrameSet, combo: ComboSpec) -> None:
    if signal.n_points != shot.n_points or signal.n_channels != shot.n_channels:
        raise ValueError("signal and shot frames have different dimensions")
    if signal.fs != shot.fs:
        raise ValueError(f"sampling rates differ: {signal.fs} vs {shot.fs}")
    if signal.quadrature is not None and signal.quadrature != combo.quadrature:
        raise ValueError(f"combo {combo.label} needs {combo.quadrature}-quadrature frames, got {signal.quadrature}")


def combo_chunks(frames: FrameSet, combo, chunk: int = CHUNK):
    """Yield (n, n_points) blocks of the combination trace c1 q1 + c2 q2."""
    c = np.asarray(_combo(combo).coefficients)
    for start in range(0, frames.n_frames, chunk):
        block = frames.data[start : start + chunk]
        yield c[0] * block[:, 0] + c[1] * block[:, 1]


def _pooled_mean(frames, combo):
    total = 0.0
    for x in combo_chunks(frames, combo):
        total += x.sum()
    return total / (frames.n_frames * frames.n_points)


def lag_moments(frames: FrameSet, combo, max_lag: int) -> np.ndarray:
    """Biased auto-covariance estimate of the pooled-mean-removed combo at lags 0..max_lag."""
    mu = _pooled_mean(frames, combo)
    sums = np.zeros(max_lag + 1)
    for x in combo_chunks(frames, combo):
        sums += kernels.lag_products(x - mu, max_lag)
    return sums / (frames.n_frames * frames.n_points)


def _band_variance(frames, combo, band):
    n = frames.n_points
    f = np.fft.rfftfreq(n, 1.0 / frames.fs)
    w = np.where(f <= band, 2.0, 0.0)
    w[0] = 0.0  # pooled mean removed
    if n % 2 == 0:
        w[-1] = min(w[-1], 1.0)
    total = 0.0
    for x in combo_chunks(frames, combo):
        total += np.sum(w * np.abs(np.fft.rfft(x, axis=-1)) ** 2)
    return total / (frames.n_frames * n * n)


def _ratio(sig_var, shot_var):
    if not shot_var > 1e-300:
        raise DegenerateReferenceError("shot-noise reference variance is zero")
    return sig_var / shot_var


def noise_power_db(signal: FrameSet, shot: FrameSet, combo, band: float | None = None) -> float:
    """10 log10(Var_signal(combo) / Var_shot(combo)), optionally inside a brickwall band."""
    combo = _combo(combo)
    _check_pair(signal, shot, combo)
    if band is None:
        return to_db(_ratio(lag_moments(signal, combo, 0)[0], lag_moments(shot, combo, 0)[0]))
    return to_db(_ratio(_band_variance(signal, combo, band), _band_variance(shot, combo, band)))


@dataclass(frozen=True)
class Autocorrelation:
    """Shot-normalized biased auto-correlation; shot noise at zero lag is 1 (0 dB)."""

    label: str
    lags: np.ndarray
    values: np.ndarray
    shot_values: np.ndarray

    @property
    def zero_lag_db(self) -> float:
        return to_db(self.values[0])

    @property
    def excess(self) -> np.ndarray:
        """Signal minus shot-reference correlation; common-mode background cancels."""
        return self.values - self.shot_values


def autocorrelation(frames: FrameSet, combo, shot: FrameSet, max_lag: int = DEFAULT_MAX_LAG) -> Autocorrelation:
    """I_cor(tau) = <q(t) q(t + tau)>_t averaged over frames, normalized by the shot variance."""
    combo = _combo(combo)
    _check_pair(frames, shot, combo)
    if frames.n_points < 2 * max_lag:
        raise ValueError("frames must hold at least 2 * max_lag points")
    sig = lag_moments(frames, combo, max_lag)
    ref = lag_moments(shot, combo, max_lag)
    norm = _ratio(1.0, ref[0])
    return Autocorrelation(
        label=combo.label,
        lags=np.arange(max_lag + 1) / frames.fs,
        values=sig * norm,
        shot_values=ref * norm,
    )


def correlation_width(lags, curve, baseline=None) -> float:
    """Full width at half of |curve(0) - baseline| for a curve symmetric in lag.

    ``baseline`` defaults to the mean over the upper half of the lag range.
    The half crossing is located by linear interpolation between samples.

    Raises:
        ValueError: the curve never falls through the half level.
    """
    lags = np.asarray(lags, dtype=float)
    y = np.asarray(curve, dtype=float)
    if baseline is None:
        baseline = float(np.mean(y[len(y) // 2 :]))
    d = np.abs(y - baseline)
    half = 0.5 * d[0]
    if half == 0:
        raise ValueError("curve has no peak above its baseline")
    below = np.nonzero(d[1:] < half)[0]
    if below.size == 0:
        raise ValueError("curve does not cross half maximum within the lag range")
    k = below[0] + 1
    frac = (d[k - 1] - half) / (d[k - 1] - d[k])
    return float(2.0 * (lags[k - 1] + frac * (lags[k] - lags[k - 1])))


# --- wavepackets -----------------------------------------------------------


MODE_SHAPES = ("polynomial-gaussian", "raised-cosine", "custom-table")


@dataclass(frozen=True)
class ModeFunction:
    """Temporal wavepacket mode, sampled on the trace grid with unit L2 norm.

    The default ``t exp(-(gamma t)^2)`` has no DC content; with gamma = 1e11/s
    essentially all of its spectrum lies below 66 GHz.
    """

    shape: str = "polynomial-gaussian"
    gamma: float = 1e11
    period: float = 40e-12
    table: tuple | None = None

    def __post_init__(self):
        if self.shape not in MODE_SHAPES:
            raise ValueError(f"unknown mode shape {self.shape!r}")
        if not self.period > 0:
            raise ValueError("mode period must be > 0")
        if self.shape == "custom-table" and not self.table:
            raise ValueError("custom-table mode needs sample values")
        if self.shape == "polynomial-gaussian" and not self.gamma > 0:
            raise ValueError("gamma must be > 0")

    def n_samples(self, fs: float) -> int:
        n = int(round(self.period * fs))
        if n < 2:
            raise ValueError("mode period must span at least two samples")
        return n

    def samples(self, fs: float) -> np.ndarray:
        n = self.n_samples(fs)
        if self.shape == "custom-table":
            m = np.asarray(self.table, dtype=float)
            if m.size > n:
                raise ValueError("custom mode table is longer than the period")
        else:
            t = (np.arange(n) - (n - 1) / 2.0) / fs
            if self.shape == "polynomial-gaussian":
                m = t * np.exp(-((self.gamma * t) ** 2))
            else:
                m = 0.5 * (1.0 + np.cos(2.0 * np.pi * t / (n / fs)))
        norm = np.linalg.norm(m)
        if norm == 0:
            raise ValueError("mode function is identically zero")
        return m / norm

    def describe(self) -> dict:
        d = {"shape": self.shape, "period_s": self.period}
        if self.shape == "polynomial-gaussian":
            d["gamma_per_s"] = self.gamma
        if self.shape == "custom-table":
            d["table"] = list(self.table)
        return d


def window_starts(n_points: int, fs: float, period: float, width: int) -> np.ndarray:
    """Start indices of non-overlapping windows spaced by ``period`` (rounded to the grid)."""
    if period * fs < 2:
        raise ValueError("window period must cover at least two samples")
    k_max = int(np.floor((n_points - width) / (period * fs))) + 1
    starts = np.round(np.arange(max(k_max, 0)) * period * fs).astype(np.int64)
    return starts[starts + width <= n_points]


def wavepacket_quadrature(frames: FrameSet, combo, mode: ModeFunction, period: float | None = None) -> np.ndarray:
    """Project every ``period``-long window of the combo trace onto ``mode``.

    Returns:
        (n_frames, n_windows) array of discrete wavepacket quadrature samples.
    """
    period = mode.period if period is None else period
    m = mode.samples(frames.fs)
    if period * frames.fs < len(m) - 1e-9:
        raise ValueError("window period is shorter than the mode support")
    starts = window_starts(frames.n_points, frames.fs, period, len(m))
    if starts.size == 0:
        raise ValueError("frames are shorter than one wavepacket window")
    return np.concatenate([kernels.window_project(x, m, starts) for x in combo_chunks(frames, combo)])


def wavepacket_db(signal: FrameSet, shot: FrameSet, combo, mode: ModeFunction | None = None) -> float:
    """Wavepacket-mode variance of ``combo`` relative to the shot reference, in dB."""
    combo = _combo(combo)
    _check_pair(signal, shot, combo)
    mode = mode or ModeFunction()
    sig = wavepacket_quadrature(signal, combo, mode)
    ref = wavepacket_quadrature(shot, combo, mode)
    return to_db(_ratio(np.var(sig), np.var(ref)))


# --- Duan criterion --------------------------------------------------------


@dataclass(frozen=True)
class DuanResult:
    value: float
    stderr: float
    x_minus_ratio: float
    p_plus_ratio: float

    @property
    def entangled(self) -> bool:
        return self.value < 1.0

    @property
    def margin_sigma(self) -> float:
        return (1.0 - self.value) / self.stderr if self.stderr > 0 else float("inf")


def _frame_variances(frames, combo, wavepacket_mode=None):
    """Per-frame second moments (about the pooled mean) of the combo or its wavepacket samples."""
    if wavepacket_mode is not None:
        w = wavepacket_quadrature(frames, combo, wavepacket_mode)
        return np.mean((w - w.mean()) ** 2, axis=1)
    mu = _pooled_mean(frames, combo)
    return np.concatenate([np.mean((x - mu) ** 2, axis=1) for x in combo_chunks(frames, combo)])


def duan_from_traces(
    x_signal: FrameSet,
    p_signal: FrameSet,
    shot: FrameSet,
    n_batches: int = 50,
    mode: ModeFunction | None = None,
) -> DuanResult:
    """Var(x_-) + Var(p_+) in vacuum units (separable states give >= 1).

    Shot-normalized ratios are each halved to absolute variances. The standard
    error comes from batch means over contiguous groups of frames.
    """
    _check_pair(x_signal, shot, COMBOS["x_minus"])
    _check_pair(p_signal, shot, COMBOS["p_plus"])
    vx = _frame_variances(x_signal, "x_minus", mode)
    vp = _frame_variances(p_signal, "p_plus", mode)
    sx = _frame_variances(shot, "x_minus", mode)
    sp = _frame_variances(shot, "p_plus", mode)
    rx = _ratio(vx.mean(), sx.mean())
    rp = _ratio(vp.mean(), sp.mean())
    value = 0.5 * rx + 0.5 * rp
    n = min(len(vx), len(vp), len(sx))
    nb = max(2, min(n_batches, n))
    if n < 2:
        return DuanResult(float(value), float("nan"), float(rx), float(rp))
    batches = np.array_split(np.arange(n), nb)
    vals = [0.5 * vx[b].mean() / sx[b].mean() + 0.5 * vp[b].mean() / sp[b].mean() for b in batches]
    stderr = np.std(vals, ddof=1) / np.sqrt(nb)
    return DuanResult(float(value), float(stderr), float(rx), float(rp))


# --- report ----------------------------------------------------------------


@dataclass
class AnalysisReport:
    noise_db: dict
    noise_db_band: dict
    band_hz: float
    lags_s: list
    autocorrelation: dict
    shot_autocorrelation: dict
    correlation_width_s: dict
    wavepacket_db: dict
    duan: float
    duan_stderr: float
    duan_wavepacket: float
    mode: dict
    fit: dict | None = None
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return _jsonable(asdict(self))

    def write_json(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        return path

    def write_autocorrelation_csv(self, path) -> Path:
        path = Path(path)
        labels = sorted(self.autocorrelation)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["lag_s"] + labels + [f"shot_{k}" for k in labels])
            for i, lag in enumerate(self.lags_s):
                w.writerow(
                    [repr(float(lag))]
                    + [repr(float(self.autocorrelation[k][i])) for k in labels]
                    + [repr(float(self.shot_autocorrelation[k][i])) for k in labels]
                )
        return path


def write_wavepacket_csv(path, samples: dict, frame: int = 0) -> Path:
    """Per-window wavepacket samples of one frame: window_index then one column per combo."""
    path = Path(path)
    labels = sorted(samples)
    n = min(samples[k].shape[1] for k in labels)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["window_index"] + labels)
        for i in range(n):
            w.writerow([i] + [repr(float(samples[k][frame, i])) for k in labels])
    return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def analyze(
    x_signal: FrameSet,
    p_signal: FrameSet,
    shot: FrameSet,
    mode: ModeFunction | None = None,
    max_lag: int = DEFAULT_MAX_LAG,
    band: float = DEFAULT_BAND,
) -> AnalysisReport:
    """Run every analysis on an x run, a p run and the shared shot reference.

    Correlation widths are taken on the shot-subtracted (excess) curves.
    """
    mode = mode or ModeFunction()
    runs = {"x": x_signal, "p": p_signal}
    noise, noise_band, ac, ac_shot, widths, wp = {}, {}, {}, {}, {}, {}
    lags = None
    for label, combo in COMBOS.items():
        frames = runs[combo.quadrature]
        a = autocorrelation(frames, combo, shot, max_lag)
        lags = a.lags
        noise[label] = a.zero_lag_db
        noise_band[label] = noise_power_db(frames, shot, combo, band=band)
        ac[label] = a.values
        ac_shot[label] = a.shot_values
        try:
            widths[label] = correlation_width(a.lags, a.excess)
        except ValueError:
            widths[label] = None
        wp[label] = wavepacket_db(frames, shot, combo, mode)
    duan = duan_from_traces(x_signal, p_signal, shot)
    duan_wp = duan_from_traces(x_signal, p_signal, shot, mode=mode)
    return AnalysisReport(
        noise_db=noise,
        noise_db_band=noise_band,
        band_hz=band,
        lags_s=lags,
        autocorrelation=ac,
        shot_autocorrelation=ac_shot,
        correlation_width_s=widths,
        wavepacket_db=wp,
        duan=duan.value,
        duan_stderr=duan.stderr,
        duan_wavepacket=duan_wp.value,
        mode=mode.describe(),
        metadata={
            "fs": x_signal.fs,
            "n_frames": x_signal.n_frames,
            "n_points": x_signal.n_points,
            "seeds": {"x": x_signal.seed, "p": p_signal.seed, "shot": shot.seed},
            "max_lag": max_lag,
            "kernels": kernels.BACKEND,
        },
    )
