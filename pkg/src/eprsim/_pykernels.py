"""Numpy reference implementations of the hot kernels.

Same signatures and semantics as the compiled ``_ckernels`` module; used when
the extension is unavailable or ``EPRSIM_KERNELS=python`` is set.
"""
import numpy as np


def color_bins(L, zr, zi):
    """Color unit complex noise with per-bin 2x2 real matrices.

    Args:
        L: (n_bins, C, C) real coloring matrices.
        zr, zi: (n_frames, C, n_bins) real and imaginary noise parts.

    Returns:
        (n_frames, C, n_bins) complex spectrum ``X[f, c, k] = sum_j L[k, c, j] z[f, j, k]``.
    """
    L = np.ascontiguousarray(L, dtype=np.float64)
    out = np.einsum("kcj,fjk->fck", L, zr) + 1j * np.einsum("kcj,fjk->fck", L, zi)
    return out


def lag_products(x, max_lag):
    """Sum over frames and time of x[f, t] * x[f, t + lag] for lag = 0..max_lag."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    n = x.shape[-1]
    if max_lag >= n:
        raise ValueError("max_lag must be smaller than the frame length")
    out = np.empty(max_lag + 1)
    for lag in range(max_lag + 1):
        out[lag] = np.sum(np.einsum("ft,ft->f", x[:, : n - lag], x[:, lag:]))
    return out


def window_project(x, mode, starts):
    """Inner products of ``mode`` with windows of ``x`` beginning at ``starts``."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    mode = np.ascontiguousarray(mode, dtype=np.float64)
    starts = np.asarray(starts, dtype=np.int64)
    if starts.size and (starts.min() < 0 or starts.max() + mode.size > x.shape[-1]):
        raise ValueError("window extends past the end of the frame")
    idx = starts[:, None] + np.arange(mode.size)[None, :]
    return x[:, idx] @ mode


def servo_track(increments, control, gain):
    """First-order sample-and-hold tracking of a random-walk phase.

    The phase accumulates ``increments``; on control steps the correction moves
    a fraction ``gain`` toward the phase, otherwise it is held. Returns the
    residual phase minus correction after every step.
    """
    increments = np.asarray(increments, dtype=np.float64)
    control = np.asarray(control, dtype=np.uint8)
    out = np.empty_like(increments)
    phase = 0.0
    corr = 0.0
    for i in range(increments.size):
        phase += increments[i]
        if control[i]:
            corr += gain * (phase - corr)
        out[i] = phase - corr
    return out
