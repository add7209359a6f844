"""Fixed-step simulation of LTI models plus test-signal generation."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .lti import StateSpaceModel
from .trace import Trace

DIVERGENCE_LIMIT = 1e100


def rk4_step_matrices(A: np.ndarray, B: np.ndarray, h: float):
    """One classical RK4 step of ``x' = A x + B u`` with ``u`` held constant.

    For a linear right-hand side the four stages collapse into
    ``x+ = Phi x + Gamma u`` with the 4th-order Taylor polynomials of the
    matrix exponential and its integral.
    """
    n = A.shape[0]
    hA = h * A
    hA2 = hA @ hA
    hA3 = hA2 @ hA
    eye = np.eye(n)
    phi = eye + hA + hA2 / 2 + hA3 / 6 + hA3 @ hA / 24
    gamma = h * (eye + hA / 2 + hA2 / 6 + hA3 / 24) @ B
    return phi, gamma


def simulate_lti(m: StateSpaceModel, u: Trace, x0=None,
                 divergence_limit: float = DIVERGENCE_LIMIT) -> Trace:
    """Integrate ``m`` driven by the zero-order-held samples of ``u``.

    Output is sampled on the input grid. If any state stops being finite or
    exceeds ``divergence_limit`` in magnitude the trace is cut just before
    that sample and flagged ``diverged``.
    """
    n = m.n
    phi, gamma = rk4_step_matrices(m.A, m.B, u.dt)
    gamma = gamma[:, 0]
    uk = u.samples
    X = np.empty((len(uk), n))
    x = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float).reshape(n)
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(len(uk)):
            X[k] = x
            x = phi @ x + gamma * uk[k]
        y = X @ m.C[0] + m.D.item() * uk
        bad = ~np.isfinite(X).all(axis=1) | (np.abs(X).max(axis=1) > divergence_limit)
    if bad.any():
        stop = int(np.argmax(bad))
        return Trace(u.t0, u.dt, y[:stop], label=u.label, diverged=True)
    return Trace(u.t0, u.dt, y, label=u.label)


def grid_length(dt: float, duration: float) -> int:
    return int(math.floor(duration / dt + 1e-9)) + 1


def step_input(v0: float, dt: float, duration: float) -> Trace:
    return Trace(0.0, dt, np.full(grid_length(dt, duration), float(v0)), label="input")


WAVE_KINDS = ("step", "sine", "triangle", "square")


@dataclass(frozen=True)
class WaveformSpec:
    """Reference signal. Periodic kinds need ``frequency`` in Hz.

    Phase conventions: sine and triangle start at 0 rising, square starts at
    ``+magnitude`` with 50% duty.
    """

    kind: str
    magnitude: float
    frequency: float = 0.0

    def __post_init__(self):
        if self.kind not in WAVE_KINDS:
            raise InvalidInputError(f"unknown waveform kind {self.kind!r}")
        if not self.magnitude > 0:
            raise InvalidInputError("waveform magnitude must be positive")
        if self.kind != "step" and not self.frequency > 0:
            raise InvalidInputError(f"{self.kind} waveform needs a positive frequency")

    @classmethod
    def parse(cls, text: str) -> "WaveformSpec":
        """``kind:magnitude[:frequency]``, e.g. ``sine:6.4:0.1``."""
        parts = text.split(":")
        try:
            kind = parts[0].strip().lower()
            mag = float(parts[1])
            freq = float(parts[2]) if len(parts) > 2 else 0.0
        except (IndexError, ValueError):
            raise InvalidInputError(f"bad waveform spec {text!r}") from None
        if len(parts) > 3:
            raise InvalidInputError(f"bad waveform spec {text!r}")
        return cls(kind, mag, freq)


def generate_reference(spec: WaveformSpec, dt: float, duration: float) -> Trace:
    n = grid_length(dt, duration)
    k = np.arange(n)
    mag = spec.magnitude
    if spec.kind == "step":
        return Trace(0.0, dt, np.full(n, mag), label="input")
    # rounding both before and after the wrap puts samples one period apart
    # on exactly the same phase
    cycles = np.round(k * (dt * spec.frequency), 12)
    phase = np.round(cycles % 1.0, 12) % 1.0
    if spec.kind == "sine":
        x = mag * np.sin(2 * np.pi * phase)
    elif spec.kind == "square":
        x = np.where(phase < 0.5, mag, -mag)
    else:
        p = (phase + 0.25) % 1.0
        x = mag * (1.0 - 4.0 * np.abs(p - 0.5))
    return Trace(0.0, dt, x, label="input")


def add_noise(t: Trace, amplitude: float, seed: int = 0) -> Trace:
    """Add i.i.d. uniform noise on ``[-amplitude, amplitude]``."""
    if amplitude < 0:
        raise InvalidInputError("noise amplitude must be non-negative")
    if amplitude == 0:
        return t
    rng = np.random.default_rng(seed)
    return t.with_samples(t.samples + rng.uniform(-amplitude, amplitude, len(t)))
