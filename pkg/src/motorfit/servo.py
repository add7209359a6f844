"""Position servo loop with actuator saturation and response-mode labelling.

The loop is ``u = sat(kp*(ref - theta) - kv*theta')`` driving a strictly
proper position plant. A second-order plant under this feedback is always
stable; a third-order plant with saturation also shows growing, sustained
and chattering oscillations.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError
from .lti import StateSpaceModel, TransferFunction, tf_to_ss_companion
from .sim import DIVERGENCE_LIMIT, WaveformSpec, generate_reference, simulate_lti
from .trace import Trace


@dataclass(frozen=True)
class ServoLoopConfig:
    plant: TransferFunction
    kp: float = 0.0
    kv: float = 0.0
    sat_limit: float | None = None
    reference: WaveformSpec = field(default_factory=lambda: WaveformSpec("step", 1.0))

    def __post_init__(self):
        if self.kp < 0 or self.kv < 0:
            raise InvalidInputError("feedback gains must be non-negative")
        if self.sat_limit is not None and not self.sat_limit > 0:
            raise InvalidInputError("sat_limit must be positive")


def _loop_outputs(m: StateSpaceModel):
    c = m.C[0]
    cv = c @ m.A
    if m.D.item() != 0:
        raise InvalidInputError("servo plant must be strictly proper")
    return c, cv, (c @ m.B).item()


def simulate_servo_loop(cfg: ServoLoopConfig, dt: float, duration: float,
                        divergence_limit: float = DIVERGENCE_LIMIT) -> tuple[Trace, Trace]:
    """Integrate the closed loop; returns ``(position, velocity)`` traces.

    The reference is held constant over each step; the saturation is
    evaluated at every RK4 stage.
    """
    if cfg.plant.order > 3:
        raise InvalidInputError("servo plant order must not exceed 3")
    m = tf_to_ss_companion(cfg.plant)
    c, cv, cb = _loop_outputs(m)
    if cb != 0 and cfg.kv != 0:
        raise InvalidInputError("velocity feedback needs a plant of relative degree >= 2")
    ref = generate_reference(cfg.reference, dt, duration)

    if cfg.sat_limit is None:
        # linear loop: u = kp*r - (kp*c + kv*cv) x
        k = cfg.kp * c + cfg.kv * cv
        closed = StateSpaceModel(m.A - m.B @ k[None, :], cfg.kp * m.B, c, 0.0)
        pos = simulate_lti(closed, ref, divergence_limit=divergence_limit)
        vel = simulate_lti(closed.with_output(cv, cfg.kp * cb), ref,
                           divergence_limit=divergence_limit)
        return _label(pos, "position"), _label(vel, "velocity")

    pos, vel = simulate_servo_batch([cfg], dt, duration, divergence_limit)
    return pos[0], vel[0]


def simulate_servo_batch(configs, dt: float, duration: float,
                         divergence_limit: float = DIVERGENCE_LIMIT):
    """Integrate several loops sharing one plant in lockstep.

    Gains, saturation limits and references may differ between configs.
    Returns lists of position and velocity traces.
    """
    configs = list(configs)
    plant = configs[0].plant
    if any(not c.plant.allclose(plant, atol=0.0) for c in configs):
        raise InvalidInputError("batched configs must share the plant")
    if plant.order > 3:
        raise InvalidInputError("servo plant order must not exceed 3")
    m = tf_to_ss_companion(plant)
    c, cv, cb = _loop_outputs(m)
    if cb != 0 and any(cfg.kv != 0 for cfg in configs):
        raise InvalidInputError("velocity feedback needs a plant of relative degree >= 2")
    refs = np.stack([generate_reference(cfg.reference, dt, duration).samples for cfg in configs])
    kp = np.array([cfg.kp for cfg in configs])[:, None]
    kv = np.array([cfg.kv for cfg in configs])[:, None]
    lim = np.array([np.inf if cfg.sat_limit is None else cfg.sat_limit for cfg in configs])[:, None]
    At, b = m.A.T, m.B[:, 0][None, :]
    # u = kp*r - x @ gain; columns of ``gain`` are per config
    gain = (kp * c[None, :] + kv * cv[None, :])

    def f(x, kr):
        u = np.clip(kr - np.sum(x * gain, axis=1, keepdims=True), -lim, lim)
        return x @ At + u * b

    nb, n = len(configs), refs.shape[1]
    X = np.zeros((nb, m.n))
    pos = np.empty((nb, n))
    vel = np.empty((nb, n))
    stop = np.full(nb, n)
    h = dt
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(n):
            pos[:, i] = X @ c
            vel[:, i] = X @ cv
            kr = kp * refs[:, i:i + 1]
            k1 = f(X, kr)
            k2 = f(X + 0.5 * h * k1, kr)
            k3 = f(X + 0.5 * h * k2, kr)
            k4 = f(X + h * k3, kr)
            X = X + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    bad = ~np.isfinite(pos) | (np.abs(pos) > divergence_limit)
    bad |= ~np.isfinite(vel)
    for j in range(nb):
        if bad[j].any():
            stop[j] = int(np.argmax(bad[j]))
    mk = lambda arr, j, name: Trace(0.0, dt, arr[j, :stop[j]], label=name,  # noqa: E731
                                    diverged=bool(stop[j] < n))
    return ([mk(pos, j, "position") for j in range(nb)],
            [mk(vel, j, "velocity") for j in range(nb)])


def _label(t: Trace, name: str) -> Trace:
    return t.with_samples(t.samples, label=name)


class Mode(str, enum.Enum):
    UNSTABLE = "Unstable"
    OVER_DAMPED = "OverDamped"
    CRITICALLY_DAMPED = "CriticallyDamped"
    UNDER_DAMPED = "UnderDamped"
    OSCILLATORY = "Oscillatory"
    CHATTERING = "Chattering"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class ModeThresholds:
    """Decision constants for :func:`classify_mode`.

    ``growth_slope`` is in units of log-amplitude per second.
    ``critical_settling`` is the shortest overshoot-free settling time seen on
    a calibration grid (see :func:`calibrate_critical_settling`); without it
    nothing is labelled critically damped. ``dominant_freq`` (Hz) is estimated
    from the first reference crossing when not given.
    """

    overshoot: float = 0.02
    growth_slope: float = 1e-3
    chatter_freq_ratio: float = 10.0
    chatter_p2p: float = 0.05
    settle_band: float = 0.02
    critical_settling: float | None = None
    critical_factor: float = 1.5
    tail_fraction: float = 0.5
    dominant_freq: float | None = None


def _extrema(e: np.ndarray) -> np.ndarray:
    d = np.diff(e)
    s = np.sign(d)
    # carry signs across flat runs
    for i in range(1, s.size):
        if s[i] == 0:
            s[i] = s[i - 1]
    return np.flatnonzero(s[:-1] * s[1:] < 0) + 1


def _sign_changes(e: np.ndarray, floor: float) -> int:
    s = np.sign(np.where(np.abs(e) < floor, 0.0, e))
    s = s[s != 0]
    return int(np.count_nonzero(s[1:] != s[:-1]))


def settling_time(position: Trace, reference_final: float, band: float = 0.02) -> float:
    """Time after which the trace stays within ``band * |reference|``."""
    e = np.abs(position.samples - reference_final)
    tol = band * abs(reference_final)
    out = np.flatnonzero(e > tol)
    if out.size == 0:
        return 0.0
    if out[-1] == e.size - 1:
        return np.inf
    return float(position.t[out[-1] + 1] - position.t0)


def dominant_frequency(position: Trace, reference_final: float) -> float | None:
    """Treat the first approach to the reference as a quarter period."""
    e = position.samples - reference_final
    if abs(e[0]) < 1e-6 * abs(reference_final):
        return None
    crossed = np.flatnonzero(np.sign(e) != np.sign(e[0]))
    if crossed.size == 0:
        return None
    return 1.0 / (4.0 * (position.t[crossed[0]] - position.t0))


def classify_mode(position: Trace, reference_final: float,
                  thresholds: ModeThresholds | None = None) -> Mode:
    th = thresholds or ModeThresholds()
    if position.diverged:
        return Mode.UNSTABLE
    y = position.samples
    if y.size < 20:
        raise InvalidInputError("trace too short to classify")
    if not np.all(np.isfinite(y)):
        return Mode.UNSTABLE
    scale = abs(reference_final) if reference_final != 0 else max(np.max(np.abs(y)), 1e-300)
    e = y - reference_final
    start = int(y.size * (1.0 - th.tail_fraction))
    tail, t_tail = e[start:], position.t[start:]
    floor = 1e-6 * scale

    ext = _extrema(tail)
    ext = ext[np.abs(tail[ext]) > floor]
    if _sign_changes(tail, floor) >= 3 and ext.size >= 3:
        amps = np.abs(tail[ext])
        slope = np.polyfit(t_tail[ext], np.log(amps), 1)[0]
        if slope > th.growth_slope:
            return Mode.UNSTABLE
        if slope < -th.growth_slope:
            return Mode.UNDER_DAMPED
        half_period = np.mean(np.diff(t_tail[ext])) if ext.size > 1 else np.inf
        freq = 1.0 / (2.0 * half_period)
        dom = th.dominant_freq or dominant_frequency(position, reference_final)
        if dom and freq > th.chatter_freq_ratio * dom and np.ptp(tail) < th.chatter_p2p * scale:
            return Mode.CHATTERING
        return Mode.OSCILLATORY

    mag = np.abs(tail)
    if mag[-1] > th.settle_band * scale and mag[-1] > mag[0]:
        grow = np.polyfit(t_tail, np.log(np.maximum(mag, floor)), 1)[0]
        if grow > th.growth_slope:
            return Mode.UNSTABLE
    overshoot = np.max(np.sign(reference_final or 1.0) * e) / scale
    if overshoot > th.overshoot:
        return Mode.UNDER_DAMPED
    if th.critical_settling is not None:
        ts = settling_time(position, reference_final, th.settle_band)
        if ts <= th.critical_factor * th.critical_settling:
            return Mode.CRITICALLY_DAMPED
    return Mode.OVER_DAMPED


def calibrate_critical_settling(configs, dt: float, duration: float,
                                thresholds: ModeThresholds | None = None) -> float:
    """Shortest settling time among overshoot-free step responses in ``configs``.

    All configs must share one plant (they are integrated as a batch).
    """
    th = thresholds or ModeThresholds()
    configs = list(configs)
    positions, _ = simulate_servo_batch(configs, dt, duration)
    best = np.inf
    for cfg, pos in zip(configs, positions):
        r = cfg.reference.magnitude
        if pos.diverged or np.max(pos.samples - r) / abs(r) > th.overshoot:
            continue
        best = min(best, settling_time(pos, r, th.settle_band))
    if not np.isfinite(best):
        raise InvalidInputError("no overshoot-free settling response in the calibration grid")
    return float(best)


# ------------------------------------------------------------ mode fixtures
# Third-order position plant 10/(s(s+1)(s+10)) behind a unit actuator limit.
# Without saturation the loop is linearly unstable for kp > 11*(1 + kv).
# Each fixture is (kp, kv, step magnitude); the step size relative to the
# limit decides whether the loop slews (chattering around the target) or
# stays linear long enough to show a growing envelope.

FIXTURE_PLANT = TransferFunction([10.0], [0.0, 10.0, 11.0, 1.0])
FIXTURE_SAT = 1.0
FIXTURE_DT = 0.005
FIXTURE_HORIZON = 60.0

MODE_FIXTURES = {
    Mode.UNSTABLE: (11.2, 0.0, 0.05),
    Mode.OVER_DAMPED: (0.1, 0.0, 1.0),
    Mode.CRITICALLY_DAMPED: (10.0, 5.0, 1.0),
    Mode.UNDER_DAMPED: (2.0, 0.0, 1.0),
    Mode.OSCILLATORY: (30.0, 0.0, 1.0),
    Mode.CHATTERING: (50.0, 2.0, 5.0),
}

CALIBRATION_KP = (0.1, 0.2, 0.3, 0.5, 0.7, 1, 1.5, 2, 3, 5, 7, 10, 15, 20, 30, 50)
CALIBRATION_KV = (0, 0.25, 0.5, 1, 2, 3, 5)
# calibrate_critical_settling over the unit-step grid above
CRITICAL_SETTLING = 2.56


def fixture_config(mode: Mode) -> ServoLoopConfig:
    kp, kv, mag = MODE_FIXTURES[Mode(mode)]
    return ServoLoopConfig(FIXTURE_PLANT, kp, kv, FIXTURE_SAT, WaveformSpec("step", mag))


def calibration_grid(plant: TransferFunction = FIXTURE_PLANT, sat_limit=FIXTURE_SAT):
    return [ServoLoopConfig(plant, kp, kv, sat_limit)
            for kv in CALIBRATION_KV for kp in CALIBRATION_KP]


def fixture_thresholds() -> ModeThresholds:
    return ModeThresholds(critical_settling=CRITICAL_SETTLING)
