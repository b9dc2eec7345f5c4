"""Residual-phase model for time-multiplexed phase locking.

Each cycle splits into a control window, where a first-order servo tracks the
random-walk phase using the classical probe, and a measurement window, where
the probe is off and the correction is held. The residual phase during the
measurement windows mixes the anti-squeezed quadrature into the measured one.

Drift and servo defaults are illustrative, not calibrated to the experiment.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from eprsim import kernels
from eprsim.gaussian import GaussianState, apply_phase_noise


@dataclass(frozen=True)
class LockConfig:
    cycle: float = 400e-6
    control: float = 360e-6
    measure: float = 40e-6
    n_loops: int = 7
    probe_detunings: tuple = (0.8e6, 0.5e6)
    drift: float = 50.0
    servo_bandwidth: float = 20e3
    dt: float = 1e-6

    def __post_init__(self):
        for name in ("cycle", "control", "measure", "dt"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        if abs(self.control + self.measure - self.cycle) > 1e-9 * self.cycle:
            raise ValueError("control + measure must equal the cycle length")
        if self.drift < 0:
            raise ValueError("drift coefficient must be >= 0")
        if not self.servo_bandwidth > 0:
            raise ValueError("servo bandwidth must be > 0")
        if self.n_loops < 1:
            raise ValueError("n_loops must be >= 1")
        object.__setattr__(self, "probe_detunings", tuple(self.probe_detunings))

    @property
    def control_steps(self) -> int:
        return max(1, int(round(self.control / self.dt)))

    @property
    def measure_steps(self) -> int:
        return max(1, int(round(self.measure / self.dt)))

    @property
    def servo_gain(self) -> float:
        """Per-step fraction of the tracking error removed during control."""
        return float(-np.expm1(-2.0 * np.pi * self.servo_bandwidth * self.dt))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["probe_detunings"] = list(self.probe_detunings)
        return d


@dataclass(frozen=True)
class LockResult:
    time: np.ndarray
    residual: np.ndarray
    window_rms: np.ndarray

    @property
    def rms(self) -> float:
        """RMS residual over all measurement windows."""
        return float(np.sqrt(np.mean(self.window_rms**2)))


def simulate_residual_phase(config: LockConfig, n_cycles: int, seed: int) -> LockResult:
    """Simulate ``n_cycles`` lock cycles; cycle c draws from substream (seed, c)."""
    if n_cycles < 1:
        raise ValueError("n_cycles must be >= 1")
    nc, nm = config.control_steps, config.measure_steps
    steps = nc + nm
    sigma = np.sqrt(config.drift * config.dt)
    inc = np.empty(n_cycles * steps)
    for c in range(n_cycles):
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=(c,))))
        inc[c * steps : (c + 1) * steps] = sigma * rng.standard_normal(steps)
    control = np.tile(np.r_[np.ones(nc, np.uint8), np.zeros(nm, np.uint8)], n_cycles)
    residual = kernels.servo_track(inc, control, config.servo_gain)
    windows = residual.reshape(n_cycles, steps)[:, nc:]
    return LockResult(
        time=np.arange(1, n_cycles * steps + 1) * config.dt,
        residual=residual,
        window_rms=np.sqrt(np.mean(windows**2, axis=1)),
    )


def expected_residual_rms(config: LockConfig) -> float:
    """Periodic steady-state RMS residual over a measurement window.

    Per step the error gains variance q = D dt; during control it is multiplied
    by (1 - k). Solving the periodic recursion gives the variance at the start
    of the measurement window, after which it grows linearly.
    """
    q = config.drift * config.dt
    rho = (1.0 - config.servo_gain) ** 2
    nc, nm = config.control_steps, config.measure_steps
    v_star = rho * q / (1.0 - rho) if rho < 1 else np.inf
    v_start = v_star + nm * q / (1.0 - rho**nc)
    v_end = v_start - nm * q
    return float(np.sqrt(v_end + q * (nm + 1) / 2.0))


def degrade_with_phase(v_target, v_ortho=None, phi_rms=0.0, method: str = "exact"):
    """Measured variance when the quadrature angle jitters with Gaussian rms ``phi_rms``.

    ``V = V_target cos^2(phi) + V_ortho sin^2(phi)`` averaged over phi; the
    exact average weights V_target by (1 + exp(-2 s^2)) / 2, the
    ``"second-order"`` method by 1 - s^2. A :class:`GaussianState` input has
    every mode phase-averaged instead.
    """
    if isinstance(v_target, GaussianState):
        state = v_target
        for mode in range(state.n_modes):
            state = apply_phase_noise(state, mode, phi_rms)
        return state
    if phi_rms < 0:
        raise ValueError("phase rms must be >= 0")
    s2 = float(phi_rms) ** 2
    if method == "exact":
        alpha = 0.5 * (1.0 + np.exp(-2.0 * s2))
    elif method == "second-order":
        alpha = max(1.0 - s2, 0.5)
    else:
        raise ValueError(f"unknown method {method!r}")
    v_target = np.asarray(v_target, dtype=float)
    v_ortho = np.asarray(v_ortho, dtype=float)
    out = alpha * v_target + (1.0 - alpha) * v_ortho
    return float(out) if out.ndim == 0 else out
