"""Seeded synthesis of cross-correlated, band-limited quadrature traces.

Each frame is an independent draw: for every positive-frequency bin a vector
of circular complex Gaussians is colored by the symmetric square root of the
PSD matrix, and the channels are brought to the time domain with an inverse
real DFT of length ``n_points``. Frame ``i`` draws from its own Philox stream
derived from ``(seed, stream, i)``, so output never depends on how frames are
scheduled across worker threads.
"""
from __future__ import annotations

import json
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from eprsim import kernels, spectral
from eprsim.errors import ModelError

PSD_ATOL = 1e-9

STREAM_SIGNAL_X = 0
STREAM_SIGNAL_P = 1
STREAM_SHOT = 2

MAGIC = b"EPRFRM01"


@dataclass(frozen=True, eq=False)
class FrameSet:
    """Frames x channels x points of real samples in vacuum-variance-1/2 units."""

    kind: str
    data: np.ndarray
    fs: float
    seed: int
    quadrature: str | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("signal", "shot"):
            raise ValueError(f"kind must be 'signal' or 'shot', got {self.kind!r}")
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 3:
            raise ValueError("data must have shape (n_frames, n_channels, n_points)")
        if data.shape[2] < 2:
            raise ValueError("frames need at least two points")
        if not self.fs > 0:
            raise ValueError("sampling rate must be > 0")
        if not np.all(np.isfinite(data)):
            raise ModelError("frame data contains non-finite samples")
        if self.quadrature not in (None, "x", "p"):
            raise ValueError(f"quadrature must be 'x', 'p' or None, got {self.quadrature!r}")
        data.flags.writeable = False
        object.__setattr__(self, "data", data)

    @property
    def n_frames(self) -> int:
        return self.data.shape[0]

    @property
    def n_channels(self) -> int:
        return self.data.shape[1]

    @property
    def n_points(self) -> int:
        return self.data.shape[2]

    def header(self) -> dict:
        return {
            "format": "eprsim-frames",
            "version": 1,
            "kind": self.kind,
            "quadrature": self.quadrature,
            "fs": float(self.fs),
            "seed": int(self.seed),
            "n_frames": self.n_frames,
            "n_channels": self.n_channels,
            "n_points": self.n_points,
            "dtype": "<f8",
            "metadata": self.metadata,
        }


def frame_rng(seed: int, stream: int, frame: int) -> np.random.Generator:
    """Counter-derived Philox generator for one frame."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(stream), int(frame)))
    return np.random.Generator(np.random.Philox(ss))


def coloring_matrices(psd: np.ndarray, fs: float, n_points: int) -> np.ndarray:
    """Per-bin matrices mapping unit real/imag noise to rfft coefficients.

    Raises:
        ModelError: a bin has an eigenvalue below ``-PSD_ATOL`` relative to
            the largest eigenvalue of the spectrum.
    """
    psd = np.asarray(psd, dtype=float)
    if psd.ndim != 3 or psd.shape[1] != psd.shape[2]:
        raise ValueError("PSD must have shape (n_bins, C, C)")
    n_bins = n_points // 2 + 1
    if psd.shape[0] != n_bins:
        raise ValueError(f"PSD has {psd.shape[0]} bins, expected {n_bins}")
    sym = 0.5 * (psd + np.swapaxes(psd, 1, 2))
    lam, vec = np.linalg.eigh(sym)
    scale = float(np.max(np.abs(lam))) if lam.size else 0.0
    if scale > 0 and lam.min() < -PSD_ATOL * scale:
        k = int(np.argmin(lam.min(axis=1)))
        raise ModelError(f"PSD matrix is not positive semidefinite at bin {k} (eigenvalue {lam.min():.3e})")
    root = np.einsum("kij,kj,klj->kil", vec, np.sqrt(np.clip(lam, 0.0, None)), vec)
    df = fs / n_points
    amp = np.full(n_bins, 0.5 * n_points * np.sqrt(df))
    amp[0] = n_points * np.sqrt(df) / np.sqrt(2.0)
    if n_points % 2 == 0:
        amp[-1] = amp[0]
    return root * amp[:, None, None]


def _draw(seed, stream, frames, n_channels, n_bins, n_points):
    zr = np.empty((len(frames), n_channels, n_bins))
    zi = np.empty_like(zr)
    for j, i in enumerate(frames):
        z = frame_rng(seed, stream, i).standard_normal((2, n_channels, n_bins))
        zr[j], zi[j] = z[0], z[1]
    zi[..., 0] = 0.0
    if n_points % 2 == 0:
        zi[..., -1] = 0.0
    return zr, zi


def synthesize(
    psd_fn,
    fs: float = 256e9,
    n_points: int = 5121,
    n_frames: int = 1,
    seed: int = 0,
    *,
    kind: str = "signal",
    quadrature: str | None = None,
    stream: int = 0,
    workers: int = 1,
    chunk_frames: int = 200,
    metadata: dict | None = None,
) -> FrameSet:
    """Draw ``n_frames`` stationary Gaussian frames with the given single-sided PSD.

    Args:
        psd_fn: callable mapping the rfft frequency grid (Hz) to PSD matrices
            of shape (n_bins, C, C), or such an array directly.
        fs: sampling rate in Hz.
        n_points: samples per frame (the DFT length; odd lengths allowed).
        n_frames: number of independent frames.
        seed: 64-bit base seed.
        stream: sub-stream tag so signal and reference runs never share draws.
        workers: worker threads; output is identical for every value.
    """
    if n_points < 2:
        raise ValueError("n_points must be >= 2")
    if n_frames < 1:
        raise ValueError("n_frames must be >= 1")
    if not fs > 0:
        raise ValueError("sampling rate must be > 0")
    f = spectral.frequency_grid(fs, n_points)
    psd = psd_fn(f) if callable(psd_fn) else psd_fn
    L = coloring_matrices(psd, fs, n_points)
    n_channels = L.shape[1]
    n_bins = L.shape[0]
    out = np.empty((n_frames, n_channels, n_points))

    def run(start):
        frames = range(start, min(start + chunk_frames, n_frames))
        zr, zi = _draw(seed, stream, frames, n_channels, n_bins, n_points)
        spec = kernels.color_bins(L, zr, zi)
        out[frames.start : frames.stop] = np.fft.irfft(spec, n=n_points, axis=-1)

    starts = range(0, n_frames, chunk_frames)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run, starts))
    else:
        for s in starts:
            run(s)
    meta = {"stream": int(stream)}
    meta.update(metadata or {})
    return FrameSet(kind=kind, data=out, fs=float(fs), seed=int(seed), quadrature=quadrature, metadata=meta)


def signal_frames(params, quadrature: str, fs=256e9, n_points=5121, n_frames=1, seed=0, **kw) -> FrameSet:
    """EPR signal frames for the x or p measurement configuration."""
    stream = STREAM_SIGNAL_X if quadrature == "x" else STREAM_SIGNAL_P
    return synthesize(
        lambda f: spectral.epr_psd(params, quadrature, f, fs)[0],
        fs,
        n_points,
        n_frames,
        seed,
        kind="signal",
        quadrature=quadrature,
        stream=stream,
        **kw,
    )


def shot_reference(params, fs=256e9, n_points=5121, n_frames=1, seed=0, **kw) -> FrameSet:
    """Vacuum-input frames through the identical detection chain."""
    return synthesize(
        lambda f: spectral.vacuum_psd(params, f, fs),
        fs,
        n_points,
        n_frames,
        seed,
        kind="shot",
        stream=STREAM_SHOT,
        **kw,
    )


# --- file formats --------------------------------------------------------


def save_frames(frames: FrameSet, path) -> Path:
    """Write MAGIC, a little-endian u64 header length, the JSON header and '<f8' samples."""
    path = Path(path)
    header = json.dumps(frames.header(), sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        fh.write(np.ascontiguousarray(frames.data, dtype="<f8").tobytes())
    return path


def load_frames(path) -> FrameSet:
    path = Path(path)
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise ValueError(f"{path} is not an eprsim frame file")
        (hlen,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        shape = (header["n_frames"], header["n_channels"], header["n_points"])
        count = int(np.prod(shape))
        data = np.fromfile(fh, dtype="<f8", count=count)
    if data.size != count:
        raise ValueError(f"{path} is truncated: expected {count} samples, found {data.size}")
    if count == 0:
        raise ValueError(f"{path} contains no frames")
    return FrameSet(
        kind=header["kind"],
        data=data.reshape(shape),
        fs=header["fs"],
        seed=header["seed"],
        quadrature=header["quadrature"],
        metadata=header.get("metadata", {}),
    )


def export_csv(frames: FrameSet, directory, frame_indices=(0,)) -> list[Path]:
    """One CSV per frame: time_s followed by one column per channel."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    t = np.arange(frames.n_points) / frames.fs
    names = [f"q{c + 1}" for c in range(frames.n_channels)]
    if frames.quadrature:
        names = [f"{frames.quadrature}{c + 1}" for c in range(frames.n_channels)]
    paths = []
    for i in frame_indices:
        p = directory / f"{frames.kind}_{frames.quadrature or 'vac'}_frame{i:05d}.csv"
        cols = np.column_stack([t, frames.data[i].T])
        np.savetxt(p, cols, delimiter=",", header=",".join(["time_s"] + names), comments="", fmt="%.17g")
        paths.append(p)
    return paths
