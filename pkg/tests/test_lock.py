import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eprsim import gaussian as g
from eprsim.lock import (
    LockConfig,
    degrade_with_phase,
    expected_residual_rms,
    simulate_residual_phase,
)


def test_default_duty_cycle():
    c = LockConfig()
    assert (c.control_steps, c.measure_steps) == (360, 40)
    assert c.n_loops == 7


@pytest.mark.parametrize(
    "kw",
    [
        {"control": 300e-6},
        {"drift": -1.0},
        {"servo_bandwidth": 0.0},
        {"n_loops": 0},
        {"dt": 0.0},
    ],
)
def test_invalid_config(kw):
    with pytest.raises(ValueError):
        LockConfig(**kw)


def test_zero_drift_gives_zero_residual():
    res = simulate_residual_phase(LockConfig(drift=0.0), 5, seed=1)
    assert res.rms == 0.0
    assert expected_residual_rms(LockConfig(drift=0.0)) == 0.0


def test_ideal_servo_limit():
    # Unit servo gain: each measurement window starts from zero error and
    # the variance then grows as D*dt*k, so the mean square is D*dt*(n+1)/2.
    c = LockConfig(servo_bandwidth=1e12)
    q = c.drift * c.dt
    assert expected_residual_rms(c) == pytest.approx(np.sqrt(q * (c.measure_steps + 1) / 2), rel=1e-12)
    # Continuum limit of a free random walk over the window: sqrt(D tau / 2).
    assert expected_residual_rms(c) == pytest.approx(np.sqrt(c.drift * c.measure / 2), rel=0.02)


def test_tiny_window_with_ideal_servo_is_nearly_locked():
    c = LockConfig(cycle=400e-6, control=399e-6, measure=1e-6, servo_bandwidth=1e12)
    assert expected_residual_rms(c) == pytest.approx(np.sqrt(c.drift * c.dt), rel=1e-12)
    assert expected_residual_rms(c) < 0.01


@pytest.mark.parametrize("bw", [2e3, 20e3, 200e3])
def test_monte_carlo_matches_steady_state(bw):
    c = LockConfig(servo_bandwidth=bw)
    res = simulate_residual_phase(c, 2000, seed=11)
    # Cycles decorrelate after the servo settles, so the sample mean square
    # over 2000 windows has a few-percent spread.
    assert res.rms == pytest.approx(expected_residual_rms(c), rel=0.05)


def test_steady_state_matches_explicit_recursion():
    c = LockConfig(servo_bandwidth=5e3)
    q, k = c.drift * c.dt, c.servo_gain
    v, window = 0.0, []
    for _ in range(200):
        for _ in range(c.control_steps):
            v = (1 - k) ** 2 * (v + q)
        window = []
        for _ in range(c.measure_steps):
            v += q
            window.append(v)
    assert expected_residual_rms(c) == pytest.approx(np.sqrt(np.mean(window)), rel=1e-9)


def test_residual_grows_with_drift_and_window():
    base = expected_residual_rms(LockConfig())
    assert expected_residual_rms(LockConfig(drift=100.0)) > base
    assert expected_residual_rms(LockConfig(control=300e-6, measure=100e-6)) > base
    assert expected_residual_rms(LockConfig(servo_bandwidth=100e3)) < base


def test_simulation_reproducible():
    a = simulate_residual_phase(LockConfig(), 20, seed=3)
    b = simulate_residual_phase(LockConfig(), 20, seed=3)
    c = simulate_residual_phase(LockConfig(), 20, seed=4)
    np.testing.assert_array_equal(a.residual, b.residual)
    assert not np.array_equal(a.residual, c.residual)


def test_simulation_shapes():
    c = LockConfig()
    res = simulate_residual_phase(c, 3, seed=0)
    assert res.residual.shape == (1200,)
    assert res.window_rms.shape == (3,)
    assert res.time[-1] == pytest.approx(3 * c.cycle)


def test_bad_cycle_count():
    with pytest.raises(ValueError):
        simulate_residual_phase(LockConfig(), 0, seed=0)


# --- phase degradation -----------------------------------------------------


def gauss_hermite_average(v_t, v_o, sigma, n=80):
    x, w = np.polynomial.hermite_e.hermegauss(n)
    phi = sigma * x
    return np.sum(w * (v_t * np.cos(phi) ** 2 + v_o * np.sin(phi) ** 2)) / np.sum(w)


@pytest.mark.parametrize("db", [-10.0, 10.0])
def test_degrade_matches_quadrature(db):
    v_t = 10 ** (db / 10)
    v_o = 1.0 / v_t
    got = degrade_with_phase(v_t, v_o, 0.030)
    assert got == pytest.approx(gauss_hermite_average(v_t, v_o, 0.030), rel=1e-12)


def test_degrade_second_order_is_close_for_small_jitter():
    exact = degrade_with_phase(0.1, 10.0, 0.03)
    approx = degrade_with_phase(0.1, 10.0, 0.03, method="second-order")
    # They differ at order s^4 (V_ortho - V_target).
    assert approx == pytest.approx(exact, abs=10.0 * 0.03**4)


def test_degrade_zero_jitter_is_identity():
    assert degrade_with_phase(0.2, 5.0, 0.0) == 0.2


def test_degrade_bad_inputs():
    with pytest.raises(ValueError):
        degrade_with_phase(0.2, 5.0, -0.1)
    with pytest.raises(ValueError):
        degrade_with_phase(0.2, 5.0, 0.1, method="fourth-order")


def test_degrade_state_matches_scalar():
    s = g.apply_squeezer(g.vacuum(1), 0, 0.8, 0.0)
    out = degrade_with_phase(s, phi_rms=0.05)
    want = degrade_with_phase(s.cov[0, 0], s.cov[1, 1], 0.05)
    assert out.cov[0, 0] == pytest.approx(want, rel=1e-12)


@settings(max_examples=60, deadline=None)
@given(
    st.floats(0.01, 100.0),
    st.floats(0.01, 100.0),
    st.floats(0.0, 3.0),
)
def test_degraded_variance_between_inputs(v_t, v_o, phi):
    out = degrade_with_phase(v_t, v_o, phi)
    assert min(v_t, v_o) * (1 - 1e-12) <= out <= max(v_t, v_o) * (1 + 1e-12)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.01, 100.0), st.floats(0.0, 3.0))
def test_isotropic_variance_unchanged(v, phi):
    assert degrade_with_phase(v, v, phi) == pytest.approx(v, rel=1e-12)
