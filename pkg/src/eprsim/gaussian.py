"""Covariance-matrix engine for multimode Gaussian states.

Conventions: hbar = 1 with [x, p] = i, so the vacuum quadrature variance is
1/2. Phase-space vectors are ordered (x1, p1, x2, p2, ...).

Every operation is a pure function returning a new :class:`GaussianState`.
States may carry leading batch dimensions (``cov.shape == (..., 2N, 2N)``),
which lets the spectral model push a whole frequency grid through a chain in
one call. Scalar parameters broadcast against the batch shape.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

VACUUM_VARIANCE = 0.5

_SYM_RTOL = 1e-12
_PHYS_ATOL = 1e-10


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.flags.writeable = False
    return a


def symplectic_form(n_modes: int) -> np.ndarray:
    """Return Omega for the (x1, p1, x2, p2, ...) ordering."""
    return np.kron(np.eye(n_modes), np.array([[0.0, 1.0], [-1.0, 0.0]]))


@dataclass(frozen=True)
class GaussianState:
    """Mean vector and covariance matrix of an N-mode Gaussian state."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        cov = np.asarray(self.cov, dtype=float)
        mean = np.asarray(self.mean, dtype=float)
        if cov.ndim < 2 or cov.shape[-1] != cov.shape[-2] or cov.shape[-1] % 2:
            raise ValueError(f"covariance must be (..., 2N, 2N), got {cov.shape}")
        if mean.shape[-1] != cov.shape[-1]:
            raise ValueError("mean and covariance dimensions differ")
        scale = max(1.0, float(np.max(np.abs(cov))))
        if np.max(np.abs(cov - np.swapaxes(cov, -1, -2))) > _SYM_RTOL * scale:
            raise ValueError("covariance matrix is not symmetric")
        object.__setattr__(self, "cov", _readonly(cov))
        object.__setattr__(self, "mean", _readonly(np.broadcast_to(mean, cov.shape[:-1])))

    @property
    def n_modes(self) -> int:
        return self.cov.shape[-1] // 2

    @property
    def batch_shape(self) -> tuple:
        return self.cov.shape[:-2]

    def min_uncertainty_eigenvalue(self) -> float:
        """Smallest eigenvalue of cov + (i/2) Omega over the batch."""
        omega = symplectic_form(self.n_modes)
        return float(np.min(np.linalg.eigvalsh(self.cov + 0.5j * omega)))

    def is_physical(self, atol: float = _PHYS_ATOL) -> bool:
        return self.min_uncertainty_eigenvalue() >= -atol

    def block(self, mode: int) -> np.ndarray:
        _check_mode(self, mode)
        return self.cov[..., 2 * mode : 2 * mode + 2, 2 * mode : 2 * mode + 2]


def _check_mode(state: GaussianState, mode: int) -> None:
    if not 0 <= mode < state.n_modes:
        raise IndexError(f"mode {mode} out of range for {state.n_modes}-mode state")


def _rotation(theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    c, s = np.cos(theta), np.sin(theta)
    return np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)


def _embed(state: GaussianState, local: np.ndarray, modes: tuple) -> np.ndarray:
    """Embed a (..., 2k, 2k) transform acting on ``modes`` into the full space."""
    dim = 2 * state.n_modes
    batch = np.broadcast_shapes(local.shape[:-2], state.batch_shape)
    full = np.broadcast_to(np.eye(dim), batch + (dim, dim)).copy()
    idx = np.concatenate([[2 * m, 2 * m + 1] for m in modes])
    full[..., idx[:, None], idx[None, :]] = local
    return full


def _apply_symplectic(state: GaussianState, S: np.ndarray) -> GaussianState:
    cov = S @ state.cov @ np.swapaxes(S, -1, -2)
    mean = np.einsum("...ij,...j->...i", S, state.mean)
    return GaussianState(mean=mean, cov=cov)


def vacuum(n_modes: int) -> GaussianState:
    """Vacuum state of ``n_modes`` modes: zero mean, covariance I/2."""
    if int(n_modes) != n_modes or n_modes < 1:
        raise ValueError(f"n_modes must be a positive integer, got {n_modes!r}")
    dim = 2 * int(n_modes)
    return GaussianState(mean=np.zeros(dim), cov=VACUUM_VARIANCE * np.eye(dim))


def apply_squeezer(state: GaussianState, mode: int, r, theta=0.0) -> GaussianState:
    """Squeeze ``mode`` by ``r`` along the quadrature at angle ``theta``.

    The quadrature ``cos(theta) x + sin(theta) p`` is scaled by ``exp(-r)`` and
    the orthogonal one by ``exp(+r)``. ``r`` may be an array broadcasting
    against the state's batch shape.
    """
    _check_mode(state, mode)
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("squeezing parameter must be >= 0; rotate theta by pi/2 instead")
    R = _rotation(theta)
    D = np.zeros(r.shape + (2, 2))
    D[..., 0, 0] = np.exp(-r)
    D[..., 1, 1] = np.exp(r)
    local = R @ D @ np.swapaxes(R, -1, -2)
    return _apply_symplectic(state, _embed(state, local, (mode,)))


def apply_rotation(state: GaussianState, mode: int, phi) -> GaussianState:
    """Phase-space rotation of ``mode`` by ``phi``."""
    _check_mode(state, mode)
    return _apply_symplectic(state, _embed(state, _rotation(phi), (mode,)))


def apply_beamsplitter(
    state: GaussianState, mode_i: int, mode_j: int, transmissivity, phase=0.0
) -> GaussianState:
    """Two-mode beamsplitter with power transmissivity ``transmissivity``.

    Quadrature action, with t = sqrt(T), s = sqrt(1 - T) and R the phase
    rotation: q_i -> t q_i - s R^T q_j, q_j -> s R q_i + t q_j.
    """
    _check_mode(state, mode_i)
    _check_mode(state, mode_j)
    if mode_i == mode_j:
        raise ValueError("beamsplitter needs two distinct modes")
    T = np.asarray(transmissivity, dtype=float)
    if np.any((T < 0) | (T > 1)):
        raise ValueError(f"transmissivity must lie in [0, 1], got {transmissivity!r}")
    t = np.sqrt(T)[..., None, None]
    s = np.sqrt(1.0 - T)[..., None, None]
    R = _rotation(phase)
    eye = np.eye(2)
    top = np.concatenate(np.broadcast_arrays(t * eye, -s * np.swapaxes(R, -1, -2)), -1)
    bottom = np.concatenate(np.broadcast_arrays(s * R, t * eye), -1)
    local = np.concatenate([top, bottom], -2)
    return _apply_symplectic(state, _embed(state, local, (mode_i, mode_j)))


def apply_loss(state: GaussianState, mode: int, eta) -> GaussianState:
    """Pure-loss channel with transmission ``eta`` on ``mode``."""
    _check_mode(state, mode)
    eta = np.asarray(eta, dtype=float)
    if np.any((eta < 0) | (eta > 1)):
        raise ValueError(f"loss efficiency must lie in [0, 1], got {eta!r}")
    dim = 2 * state.n_modes
    scale = np.ones(np.broadcast_shapes(eta.shape, state.batch_shape) + (dim,))
    scale[..., 2 * mode : 2 * mode + 2] = np.sqrt(eta)[..., None]
    cov = state.cov * scale[..., :, None] * scale[..., None, :]
    noise = np.zeros_like(cov)
    sl = slice(2 * mode, 2 * mode + 2)
    noise[..., sl, sl] = (1.0 - eta)[..., None, None] * VACUUM_VARIANCE * np.eye(2)
    return GaussianState(mean=state.mean * scale, cov=cov + noise)


def apply_phase_noise(state: GaussianState, mode: int, phi_rms) -> GaussianState:
    """Average the state over a zero-mean Gaussian phase jitter on ``mode``.

    Second moments of the phase-averaged mixture: within the mode's block the
    rotation mixes the quadratures with weight alpha = (1 + exp(-2 s^2)) / 2;
    correlations with other modes and the mean shrink by exp(-s^2 / 2).
    """
    _check_mode(state, mode)
    s2 = np.asarray(phi_rms, dtype=float) ** 2
    if np.any(s2 < 0):
        raise ValueError("phase rms must be >= 0")
    alpha = 0.5 * (1.0 + np.exp(-2.0 * s2))
    damp = np.exp(-0.5 * s2)
    cov = np.array(np.broadcast_to(state.cov, np.broadcast_shapes(s2.shape, state.batch_shape) + state.cov.shape[-2:]))
    sl = slice(2 * mode, 2 * mode + 2)
    a = cov[..., sl, sl].copy()
    cov[..., sl, :] *= damp[..., None, None]
    cov[..., :, sl] *= damp[..., None, None]
    cov[..., 2 * mode, 2 * mode] = alpha * a[..., 0, 0] + (1 - alpha) * a[..., 1, 1]
    cov[..., 2 * mode + 1, 2 * mode + 1] = (1 - alpha) * a[..., 0, 0] + alpha * a[..., 1, 1]
    off = (2 * alpha - 1) * a[..., 0, 1]
    cov[..., 2 * mode, 2 * mode + 1] = off
    cov[..., 2 * mode + 1, 2 * mode] = off
    mean = np.array(np.broadcast_to(state.mean, cov.shape[:-1]))
    mean[..., sl] *= damp[..., None]
    return GaussianState(mean=mean, cov=cov)


@dataclass(frozen=True)
class PsaParams:
    """Phase-sensitive amplifier: linear power gain, amplified angle, intrinsic efficiency."""

    gain: float
    phi: float = 0.0
    eta_opa: float = 1.0

    def __post_init__(self):
        if not self.gain >= 1:
            raise ValueError(f"PSA gain must be >= 1 (linear), got {self.gain!r}")
        if not 0 <= self.eta_opa <= 1:
            raise ValueError(f"eta_opa must lie in [0, 1], got {self.eta_opa!r}")


def apply_psa(state: GaussianState, mode: int, params: PsaParams) -> GaussianState:
    """Intrinsic OPA loss followed by phase-sensitive gain along ``params.phi``.

    The loss sits before the gain stage; with that ordering a vacuum-referenced
    chain reproduces the closed-form effective efficiency exactly.
    """
    lossy = apply_loss(state, mode, params.eta_opa)
    r = 0.5 * np.log(params.gain)
    return apply_squeezer(lossy, mode, r, params.phi + np.pi / 2)


def quadrature_variance(state: GaussianState, mode: int, theta=0.0):
    """Variance of ``cos(theta) x + sin(theta) p`` on ``mode``."""
    _check_mode(state, mode)
    u = np.stack([np.cos(theta), np.sin(theta)], -1)
    return np.einsum("...i,...ij,...j->...", u, state.block(mode), u)


def combo_variance(state: GaussianState, coefficients):
    """Variance of the linear combination ``c . (x1, p1, ...)``."""
    c = np.asarray(coefficients, dtype=float)
    if c.shape[-1] != 2 * state.n_modes:
        raise ValueError(f"need {2 * state.n_modes} coefficients, got {c.shape[-1]}")
    if not np.any(c):
        raise ValueError("coefficients are all zero")
    return np.einsum("...i,...ij,...j->...", c, state.cov, c)


def combo_coefficients(label: str, n_modes: int = 2, mode_i: int = 0, mode_j: int = 1) -> np.ndarray:
    """Coefficient vector for x_plus, x_minus, p_plus or p_minus of two modes."""
    quad, sign = label.split("_")
    offset = {"x": 0, "p": 1}[quad]
    sgn = {"plus": 1.0, "minus": -1.0}[sign]
    c = np.zeros(2 * n_modes)
    c[2 * mode_i + offset] = 1 / np.sqrt(2)
    c[2 * mode_j + offset] = sgn / np.sqrt(2)
    return c


def duan_sum(state: GaussianState, mode_i: int = 0, mode_j: int = 1):
    """Var((x_i - x_j)/sqrt2) + Var((p_i + p_j)/sqrt2); below 1 certifies entanglement."""
    if mode_i == mode_j:
        raise ValueError("Duan sum needs two distinct modes")
    n = state.n_modes
    return combo_variance(state, combo_coefficients("x_minus", n, mode_i, mode_j)) + combo_variance(
        state, combo_coefficients("p_plus", n, mode_i, mode_j)
    )


def epr_state(r) -> GaussianState:
    """Two orthogonally squeezed vacua interfered on a balanced beamsplitter.

    Mode 0 is squeezed in p and mode 1 in x before the beamsplitter, so the
    outputs satisfy x1 - x2 = sqrt2 e^{-r} x_vac and p1 + p2 = sqrt2 e^{-r} p_vac.
    """
    state = apply_squeezer(vacuum(2), 0, r, np.pi / 2)
    state = apply_squeezer(state, 1, r, 0.0)
    return apply_beamsplitter(state, 0, 1, 0.5, 0.0)


def eta_meas_closed_form(gain, eta_opa, eta_hd):
    """Effective efficiency of PSA pre-amplification followed by lossy homodyne.

    ``eta_opa * eta_hd / (eta_hd + (1 - eta_hd) / G)`` with linear gain G.
    """
    gain = np.asarray(gain, dtype=float)
    if np.any(gain <= 0):
        raise ValueError("gain must be linear and positive (0 dB corresponds to G = 1)")
    if np.any(gain < 1):
        raise ValueError("PSA gain must be >= 1")
    for name, v in (("eta_opa", eta_opa), ("eta_hd", eta_hd)):
        if np.any((np.asarray(v) < 0) | (np.asarray(v) > 1)):
            raise ValueError(f"{name} must lie in [0, 1]")
    out = eta_opa * eta_hd / (eta_hd + (1.0 - eta_hd) / gain)
    return float(out) if np.ndim(out) == 0 else out


def eta_total(eta_state, eta_meas):
    """Total efficiency of state preparation followed by measurement."""
    out = np.asarray(eta_state) * np.asarray(eta_meas)
    return float(out) if np.ndim(out) == 0 else out


def lossy_squeezing(v: float, eta: float) -> float:
    """Shot-normalized variance of a squeezed quadrature ``v`` after efficiency ``eta``."""
    return eta * v + 1.0 - eta


def to_db(ratio):
    """10 log10 of a shot-normalized variance."""
    out = 10.0 * np.log10(ratio)
    return float(out) if np.ndim(out) == 0 else out


def from_db(db):
    out = 10.0 ** (np.asarray(db, dtype=float) / 10.0)
    return float(out) if np.ndim(out) == 0 else out
