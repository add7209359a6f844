"""Markov-parameter identification and companion-form realization.

A strictly proper ``H(s) = sum_i q(i) s^-i`` has, for a step of size ``V0``
applied to a plant whose position transfer function is ``H``, the velocity

    v(t) = V0 * sum_i q(i) t^(i-1) / (i-1)!

Fitting a truncated series to the first ``te`` seconds of ``v`` gives the
``q(i)``; the rank of their Hankel matrix gives the order, and
``A = H_shift H^-1``, ``B = H[:, 0]``, ``C = e_1`` realizes the model.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np

from .errors import IdentificationError, InvalidInputError, OrderTooHighError
from .lti import StateSpaceModel, TransferFunction, ss_to_tf
from .pinv import pinv
from .trace import Trace

GAP_THRESHOLD = 0.05
DROP_RATIO = 0.1
MARKOV_RCOND = 1e-14
REALIZE_RCOND = 1e-8


@dataclass(frozen=True, eq=False)
class MarkovSequence:
    """``q(1)..q(Lm)`` estimated from a step of size ``v0`` over ``te`` seconds."""

    q: np.ndarray
    v0: float = 1.0
    te: float = 0.0

    def __post_init__(self):
        q = np.array(self.q, dtype=float).ravel()
        q.setflags(write=False)
        object.__setattr__(self, "q", q)

    @property
    def lm(self) -> int:
        return self.q.size

    def scaled(self, c: float) -> "MarkovSequence":
        return MarkovSequence(self.q * c, self.v0, self.te)


def series_matrix(t: np.ndarray, lm: int) -> np.ndarray:
    """Columns ``t^(i-1)/(i-1)!`` for ``i = 1..lm``."""
    t = np.asarray(t, dtype=float)
    return np.column_stack([t ** i / factorial(i) for i in range(lm)])


def estimate_markov(v: Trace, v0: float, lm: int, te: float | None = None,
                    zero_tol: float = 1e-3, rcond: float = MARKOV_RCOND,
                    require_rest: bool = True) -> MarkovSequence:
    """Least-squares fit of the truncated series to ``v(k*dt)``, ``0 < k*dt <= te``.

    ``v`` must start at the step onset (``t0 = 0``) from rest. Columns are
    scaled to unit max-norm before the pseudo-inverse and unscaled after.
    ``te`` defaults to a third of the record. A plant of relative degree one
    jumps to ``v0*q(1)`` at ``t = 0+``; pass ``require_rest=False`` to accept
    such a record (``v[0]`` is never used by the fit).
    """
    if v0 == 0:
        raise InvalidInputError("step magnitude v0 must be non-zero")
    if lm < 1:
        raise InvalidInputError("lm must be positive")
    if abs(v.t0) > 0.5 * v.dt:
        raise InvalidInputError("velocity trace must start at the step onset (t0 = 0)")
    if te is None:
        te = v.duration / 3
    if te > v.duration + 1e-9 * v.dt:
        raise InvalidInputError(f"te={te} exceeds the trace duration {v.duration}")
    N = int(np.floor(te / v.dt + 1e-9))
    if N < lm:
        raise InvalidInputError(f"window holds {N} samples, fewer than lm={lm}")
    y = v.samples[1:N + 1]
    peak = np.max(np.abs(v.samples[:N + 1]))
    if require_rest and abs(v.samples[0]) > zero_tol * peak:
        raise InvalidInputError("velocity must start from rest (v(0) = 0)")
    M = series_matrix(v.dt * np.arange(1, N + 1), lm)
    scale = np.max(np.abs(M), axis=0)
    Mp, _, _ = pinv(M / scale, rcond)
    q = (Mp @ (y / v0)) / scale
    return MarkovSequence(q, v0, N * v.dt)


def truncated_response(m: MarkovSequence, dt: float, duration: float) -> Trace:
    """``v0 * sum_i q(i) t^(i-1)/(i-1)!`` on ``[0, duration]``."""
    n = int(np.floor(duration / dt + 1e-9)) + 1
    t = dt * np.arange(n)
    return Trace(0.0, dt, m.v0 * (series_matrix(t, m.lm) @ m.q), label="markov")


def hankel_from(q, size: int, shift: int = 0) -> np.ndarray:
    """``H[i, j] = q(i + j + 1 + shift)`` (``q`` one-based, ``i, j`` zero-based)."""
    q = np.asarray(q, dtype=float)
    if q.size < 2 * size - 1 + shift:
        raise InvalidInputError(f"need {2 * size - 1 + shift} Markov parameters, have {q.size}")
    i = np.arange(size)
    return q[i[:, None] + i[None, :] + shift]


def hankel_build(m: MarkovSequence) -> np.ndarray:
    """Largest square Hankel matrix, ``K = (Lm + 1) / 2``."""
    if m.lm % 2 == 0:
        raise InvalidInputError("an odd number of Markov parameters is required")
    return hankel_from(m.q, (m.lm + 1) // 2)


def hankel_pair(m: MarkovSequence, order: int) -> tuple[np.ndarray, np.ndarray]:
    return hankel_from(m.q, order), hankel_from(m.q, order, shift=1)


def normalized_spectrum(hankel: np.ndarray) -> np.ndarray:
    s = np.linalg.svd(np.asarray(hankel, dtype=float), compute_uv=False)
    return s / s[0] if s[0] > 0 else s


def estimate_order(hankel: np.ndarray, gap_threshold: float = GAP_THRESHOLD,
                   drop_ratio: float = DROP_RATIO) -> tuple[int, np.ndarray]:
    """System order from the normalized singular values of a Hankel matrix.

    A value counts towards the order while it stays above ``gap_threshold``
    (relative to the largest) and has not fallen by more than ``drop_ratio``
    relative to its predecessor; the first sudden drop ends the count.
    """
    h = np.asarray(hankel, dtype=float)
    if h.ndim != 2 or h.shape[0] != h.shape[1] or h.shape[0] < 2:
        raise InvalidInputError("estimate_order needs a square Hankel matrix, K >= 2")
    sn = normalized_spectrum(h)
    if sn[0] == 0:
        return 0, sn
    order = 1
    while order < sn.size:
        nxt = sn[order]
        if nxt <= gap_threshold or nxt < drop_ratio * sn[order - 1]:
            break
        order += 1
    return order, sn


def realize_companion(m: MarkovSequence, order: int,
                      rcond: float = REALIZE_RCOND) -> StateSpaceModel:
    """Companion-form minimal realization from ``2*order`` Markov parameters."""
    if order < 1:
        raise InvalidInputError("order must be positive")
    if m.lm < 2 * order:
        raise InvalidInputError(f"order {order} needs {2 * order} Markov parameters, have {m.lm}")
    h, h_shift = hankel_pair(m, order)
    cond = np.linalg.cond(h)
    if not np.isfinite(cond) or cond * rcond > 1:
        raise OrderTooHighError(
            f"Hankel matrix of size {order} is singular (cond={cond:.3g}); "
            "the order is too high, see estimate_order")
    A = np.linalg.solve(h.T, h_shift.T).T
    B = h[:, 0]
    C = np.eye(order)[0]
    return StateSpaceModel(A, B, C, 0.0)


@dataclass(frozen=True, eq=False)
class MarkovResult:
    model: StateSpaceModel
    tf: TransferFunction
    markov: MarkovSequence
    order: int
    spectrum: np.ndarray

    def __iter__(self):
        return iter((self.model, self.tf))

    @property
    def velocity_model(self) -> StateSpaceModel:
        """Realization whose output is ``d/dt`` of the identified output."""
        m = self.model
        return StateSpaceModel(m.A, m.B, m.C @ m.A, (m.C @ m.B).item())


def identify_markov(v: Trace, v0: float, lm: int = 11, te: float | None = None,
                    gap_threshold: float = GAP_THRESHOLD, order: int | None = None,
                    drop_ratio: float = DROP_RATIO, require_rest: bool = True) -> MarkovResult:
    """Markov fit, order detection (unless ``order`` is given) and realization.

    A failure after the spectrum is known carries it as ``exc.spectrum``.
    The transfer function maps the step input to the integral of ``v`` (the
    position when ``v`` is a velocity) and already includes the ``1/v0``
    normalization.
    """
    if v0 == 0:
        raise InvalidInputError("step magnitude v0 must be non-zero")
    ms = estimate_markov(v, v0, lm, te, require_rest=require_rest)
    k = (lm + 1) // 2 if lm % 2 else lm // 2
    spectrum_h = hankel_from(ms.q, k)
    detected, spectrum = estimate_order(spectrum_h, gap_threshold, drop_ratio)
    use = detected if order is None else order
    if use < 1:
        exc = IdentificationError("no dynamics detected (all-zero Hankel matrix)")
        exc.spectrum = spectrum
        raise exc
    try:
        model = realize_companion(ms, use)
    except IdentificationError as exc:
        exc.spectrum = spectrum
        raise
    return MarkovResult(model, ss_to_tf(model), ms, detected, spectrum)
