import numpy as np
import pytest

from motorfit.errors import InvalidInputError
from motorfit.lti import StateSpaceModel, TransferFunction, feedback, step_response, tf_to_ss_companion
from motorfit.servo import (CALIBRATION_KP, CALIBRATION_KV, CRITICAL_SETTLING, FIXTURE_DT,
                            FIXTURE_HORIZON, FIXTURE_PLANT, Mode, ModeThresholds, ServoLoopConfig,
                            calibrate_critical_settling, calibration_grid, classify_mode,
                            fixture_config, fixture_thresholds, settling_time,
                            simulate_servo_batch, simulate_servo_loop)
from motorfit.sim import (WaveformSpec, add_noise, generate_reference, rk4_step_matrices,
                          simulate_lti, step_input)
from motorfit.trace import Trace
from oracles import zoh_response

THIRD_ORDER_PLANT = TransferFunction([10], [0, 10, 11, 1])
SECOND_ORDER = TransferFunction([2.1751], [0, 2.2998, 1])


# ---------------------------------------------------------------- simulate_lti

def test_first_order_step():
    y = simulate_lti(tf_to_ss_companion(TransferFunction([1], [1, 1])), step_input(1, 0.001, 1.0))
    assert y.samples[-1] == pytest.approx(1 - np.exp(-1), abs=1e-6)


def test_zero_input_zero_output():
    m = tf_to_ss_companion(THIRD_ORDER_PLANT)
    assert not simulate_lti(m, step_input(0.0, 0.01, 1.0)).samples.any()


def test_matches_matrix_exponential_oracle():
    rng = np.random.default_rng(4)
    A = np.array([[0, 1, 0], [-2, -3, 1], [0, -1, -4.0]])
    B, C = np.array([0, 1, 2.0]), np.array([1, 0, 0.5])
    u = rng.uniform(-1, 1, 300)
    got = simulate_lti(StateSpaceModel(A, B, C, 0.3), Trace(0, 0.01, u)).samples
    want = zoh_response(A, B, C, 0.3, u, 0.01)
    assert np.max(np.abs(got - want)) < 1e-9


def test_rk4_matrices_against_stages():
    A, B, h = np.array([[0, 1], [-5, -2.0]]), np.array([[0], [1.0]]), 0.1
    phi, gam = rk4_step_matrices(A, B, h)
    x, u = np.array([0.3, -0.2]), 0.7
    f = lambda x: A @ x + B[:, 0] * u  # noqa: E731
    k1 = f(x); k2 = f(x + h / 2 * k1); k3 = f(x + h / 2 * k2); k4 = f(x + h * k3)  # noqa: E702
    assert np.allclose(phi @ x + gam[:, 0] * u, x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4))


def test_divergence_flag_within_horizon():
    # s^3 + 0.02 s^2 + s + 0.03: growth rate of the unstable pair
    h = TransferFunction([1], [0.03, 1, 0.02, 1])
    sigma = np.max(h.poles().real)
    limit = 1e3
    horizon = np.log(limit / 1e-2) / sigma
    assert horizon < 3000
    y = simulate_lti(tf_to_ss_companion(h), step_input(1.0, 0.05, horizon * 1.2),
                     divergence_limit=limit)
    assert y.diverged and y.t[-1] < horizon * 1.2


def test_low_damping_cubic_classified_unstable_within_200s():
    y = step_response(TransferFunction([0.03], [0.03, 1, 0.02, 1]), 1.0, 0.05, 200.0)
    assert classify_mode(y, 1.0) == Mode.UNSTABLE


def test_well_damped_cubic_is_not_unstable():
    y = step_response(TransferFunction([0.03], [0.03, 1, 0.1, 1]), 1.0, 0.05, 200.0)
    assert classify_mode(y, 1.0) != Mode.UNSTABLE


# ------------------------------------------------------------------- waveforms

def test_square_wave_values():
    x = generate_reference(WaveformSpec("square", 6.4, 0.1), 0.01, 20.0)
    assert x.at(2.0) == 6.4 and x.at(7.0) == -6.4


def test_sine_and_triangle_phase():
    s = generate_reference(WaveformSpec("sine", 2.0, 0.5), 0.01, 4.0)
    tr = generate_reference(WaveformSpec("triangle", 2.0, 0.5), 0.01, 4.0)
    assert s.samples[0] == 0.0 and tr.samples[0] == 0.0
    assert tr.at(0.5) == pytest.approx(2.0) and tr.at(1.5) == pytest.approx(-2.0)
    assert np.max(np.abs(tr.samples)) <= 2.0 + 1e-12


def test_step_reference():
    assert np.all(generate_reference(WaveformSpec("step", 1.5), 0.1, 1.0).samples == 1.5)


@pytest.mark.parametrize("kind", ["sine", "square", "triangle"])
def test_waveforms_periodic(kind):
    x = generate_reference(WaveformSpec(kind, 6.4, 0.1), 0.01, 40.0).samples
    period = 1000
    assert np.array_equal(x[:period], x[period:2 * period])
    assert np.array_equal(x[:period], x[3 * period:4 * period])


def test_waveform_parse():
    assert WaveformSpec.parse("sine:6.4:0.1") == WaveformSpec("sine", 6.4, 0.1)
    for bad in ("sine:6.4", "saw:1:1", "step:-1", "step", "step:1:2:3"):
        with pytest.raises(InvalidInputError):
            WaveformSpec.parse(bad)


# ----------------------------------------------------------------------- noise

def test_noise():
    t = Trace(0.0, 0.01, np.sin(np.arange(500) * 0.01))
    assert add_noise(t, 0.0) is t
    a, b = add_noise(t, 0.1, seed=5), add_noise(t, 0.1, seed=5)
    assert np.array_equal(a.samples, b.samples)
    assert np.max(np.abs(a.samples - t.samples)) <= 0.1
    assert not np.array_equal(a.samples, add_noise(t, 0.1, seed=6).samples)
    with pytest.raises(InvalidInputError):
        add_noise(t, -1.0)


# ------------------------------------------------------------------ servo loop

def test_open_loop_degenerate():
    pos, _ = simulate_servo_loop(ServoLoopConfig(THIRD_ORDER_PLANT, 0, 0), 0.01, 2.0)
    assert not pos.samples.any()


def test_linear_loop_matches_closed_form_tf():
    pos, _ = simulate_servo_loop(ServoLoopConfig(THIRD_ORDER_PLANT, 5.0), 0.01, 10.0)
    ref = step_response(feedback(THIRD_ORDER_PLANT, 5.0), 1.0, 0.01, 10.0)
    assert np.max(np.abs(pos.samples - ref.samples)) < 1e-9


def test_saturating_path_matches_linear_when_inactive():
    cfg = ServoLoopConfig(THIRD_ORDER_PLANT, 0.5, 0.2, None)
    lin, lin_v = simulate_servo_loop(cfg, 0.01, 10.0)
    sat, sat_v = simulate_servo_loop(ServoLoopConfig(THIRD_ORDER_PLANT, 0.5, 0.2, 100.0), 0.01, 10.0)
    assert np.max(np.abs(lin.samples - sat.samples)) < 1e-9
    assert np.max(np.abs(lin_v.samples - sat_v.samples)) < 1e-9


def test_velocity_trace_is_derivative_of_position():
    pos, vel = simulate_servo_loop(ServoLoopConfig(THIRD_ORDER_PLANT, 3.0, 0.5, 1.0), 0.001, 5.0)
    d = np.gradient(pos.samples, 0.001)
    assert np.max(np.abs(d[5:-5] - vel.samples[5:-5])) < 1e-3


def test_steady_state_equals_dc_gain():
    plant = TransferFunction([2.0], [6.0, 5.0, 1.0])  # poles -2, -3
    pos, _ = simulate_servo_loop(ServoLoopConfig(plant, 4.0), 0.01, 20.0)
    assert pos.samples[-1] == pytest.approx(feedback(plant, 4.0).dc_gain(), rel=1e-3)


def test_servo_config_validation():
    with pytest.raises(InvalidInputError):
        ServoLoopConfig(THIRD_ORDER_PLANT, kp=-1)
    with pytest.raises(InvalidInputError):
        ServoLoopConfig(THIRD_ORDER_PLANT, kp=1, sat_limit=0)
    with pytest.raises(InvalidInputError):
        simulate_servo_loop(ServoLoopConfig(TransferFunction([1], [1, 1]), 1, 1), 0.01, 1.0)


def test_second_order_loop_never_unstable():
    grid = [ServoLoopConfig(SECOND_ORDER, kp, kv) for kv in CALIBRATION_KV for kp in CALIBRATION_KP]
    labels = {classify_mode(pos, 1.0)
              for pos in simulate_servo_batch(grid, 0.01, 60.0)[0]}
    assert Mode.UNSTABLE not in labels


# -------------------------------------------------------------- classification

def make(fn, dt=0.01, duration=60.0):
    t = dt * np.arange(int(duration / dt) + 1)
    return Trace(0.0, dt, fn(t))


def test_growing_trace_unstable():
    assert classify_mode(make(lambda t: 1 + 0.01 * np.exp(0.1 * t) * np.sin(2 * t)), 1.0) == \
        Mode.UNSTABLE
    assert classify_mode(make(lambda t: np.exp(0.2 * t)), 1.0) == Mode.UNSTABLE


def test_constant_envelope_oscillatory():
    assert classify_mode(make(lambda t: 1 + 0.5 * np.sin(2 * t)), 1.0) == Mode.OSCILLATORY


def test_decaying_oscillation_underdamped():
    y = make(lambda t: 1 - np.exp(-0.3 * t) * np.cos(2 * t))
    assert classify_mode(y, 1.0) == Mode.UNDER_DAMPED


def test_critically_damped_boundary():
    y = make(lambda t: 1 - (1 + 2 * t) * np.exp(-2 * t))
    assert classify_mode(y, 1.0) == Mode.OVER_DAMPED
    ts = settling_time(y, 1.0)
    th = ModeThresholds(critical_settling=ts)
    assert classify_mode(y, 1.0, th) == Mode.CRITICALLY_DAMPED


def test_diverged_flag_is_unstable():
    y = Trace(0.0, 0.1, np.ones(30), diverged=True)
    assert classify_mode(y, 1.0) == Mode.UNSTABLE


def test_too_short():
    with pytest.raises(InvalidInputError):
        classify_mode(Trace(0.0, 0.1, np.ones(5)), 1.0)


def test_fixtures_cover_all_modes():
    configs = [fixture_config(m) for m in Mode]
    positions, _ = simulate_servo_batch(configs, FIXTURE_DT, FIXTURE_HORIZON)
    labels = [classify_mode(p, c.reference.magnitude, fixture_thresholds())
              for p, c in zip(positions, configs)]
    assert labels == list(Mode)


def test_critical_settling_constant_matches_calibration():
    got = calibrate_critical_settling(calibration_grid(), FIXTURE_DT, FIXTURE_HORIZON)
    assert got == pytest.approx(CRITICAL_SETTLING, abs=FIXTURE_DT / 2)


def test_sustained_oscillation_with_saturation():
    # linearly unstable gain, the limit keeps the amplitude bounded
    pos, _ = simulate_servo_loop(fixture_config(Mode.OSCILLATORY), FIXTURE_DT, FIXTURE_HORIZON)
    tail = pos.samples[len(pos) // 2:]
    assert np.all(np.isfinite(tail)) and np.ptp(tail) < 2.0
    assert np.max(feedback(FIXTURE_PLANT, fixture_config(Mode.OSCILLATORY).kp).poles().real) > 0
