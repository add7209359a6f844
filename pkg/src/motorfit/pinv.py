"""State-space identification by least squares on sampled states.

For each sample ``t_k`` the state equation ``X' = A X + B Va`` gives ``n``
scalar equations that are linear in the unknown vector
``[a_1, ..., a_n, B^T]^T`` (``a_j`` the rows of ``A``). Stacking ``L`` samples
and applying the Moore-Penrose pseudo-inverse yields ``A`` and ``B``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import IdentificationError, InvalidInputError
from .lti import StateSpaceModel, TransferFunction, cancel_near_pole_zero, ss_to_tf
from .signals import SyncedRecord, crop, differentiate
from .trace import Trace

RCOND = 1e-10
CANCEL_TOL = 0.05

STATE_CHANNELS = {2: ("position", "velocity"), 3: ("position", "velocity", "current")}


class RankDeficiencyWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class RegressionSystem:
    """``lhs = mat @ theta`` with ``theta = [a_1 .. a_n, b_1 .. b_n]``."""

    lhs: np.ndarray
    mat: np.ndarray
    n: int
    L: int


def regression_from_states(X: np.ndarray, Xdot: np.ndarray, va) -> RegressionSystem:
    """Stack the per-sample block rows.

    ``X`` and ``Xdot`` are ``(L, n)``. Block row ``j`` of sample ``k`` carries
    ``X[k]`` in columns ``j*n .. j*n+n`` and ``Va`` in column ``n*n + j``.
    """
    X = np.asarray(X, dtype=float)
    Xdot = np.asarray(Xdot, dtype=float)
    if X.ndim != 2 or X.shape != Xdot.shape:
        raise InvalidInputError("X and Xdot must be equal-shape (L, n) arrays")
    L, n = X.shape
    va = np.broadcast_to(np.asarray(va, dtype=float), (L,))
    mat = np.zeros((L, n, n * n + n))
    for j in range(n):
        mat[:, j, j * n:(j + 1) * n] = X
        mat[:, j, n * n + j] = va
    return RegressionSystem(Xdot.reshape(-1), mat.reshape(L * n, n * n + n), n, L)


def build_regression(record: SyncedRecord, states: int, va: float) -> RegressionSystem:
    """Regression for the motor state ``[position, velocity(, current)]``.

    Acceleration (and the current's derivative) come from the five-point
    central difference; the measured channels are cropped by two samples at
    each end to share that grid. The position derivative is the measured
    velocity channel itself.
    """
    if states not in STATE_CHANNELS:
        raise InvalidInputError("states must be 2 or 3")
    names = STATE_CHANNELS[states]
    missing = [c for c in names if c not in record.channels]
    if missing:
        raise InvalidInputError(f"record lacks channel(s) {missing} needed for states={states}")
    if len(record) < 5:
        raise InvalidInputError("record too short for five-point differentiation")
    X = np.column_stack([crop(record[c], 2).samples for c in names])
    derivs = [crop(record["velocity"], 2).samples, differentiate(record["velocity"]).samples]
    if states == 3:
        derivs.append(differentiate(record["current"]).samples)
    Xdot = np.column_stack(derivs)
    L = X.shape[0]
    if L < min_samples(states):
        raise InvalidInputError(
            f"{L} usable samples; states={states} needs at least {min_samples(states)}")
    return regression_from_states(X, Xdot, va)


def min_samples(states: int) -> int:
    """Smallest usable sample count after differentiation.

    ``n + 1`` samples give exactly ``n^2 + n`` equations; the third-order
    motor case follows the stricter twelve-sample rule of thumb.
    """
    return 12 if states == 3 else states + 1


@dataclass(frozen=True, eq=False)
class PinvSolution:
    A: np.ndarray
    B: np.ndarray
    theta: np.ndarray
    residual: float
    rank: int
    singular_values: np.ndarray
    rank_deficient: bool


def pinv(M: np.ndarray, rcond: float = RCOND):
    """Moore-Penrose pseudo-inverse via SVD; returns ``(M+, rank, s)``.

    Singular values below ``rcond * s_max`` are treated as zero.
    """
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    cutoff = rcond * (s[0] if s.size else 0.0)
    keep = s > cutoff
    s_inv = np.zeros_like(s)
    s_inv[keep] = 1.0 / s[keep]
    return (Vt.T * s_inv) @ U.T, int(keep.sum()), s


def pinv_solve(sys: RegressionSystem, rcond: float = RCOND) -> PinvSolution:
    Mp, rank, s = pinv(sys.mat, rcond)
    theta = Mp @ sys.lhs
    n = sys.n
    A = theta[:n * n].reshape(n, n)
    B = theta[n * n:].reshape(n, 1)
    residual = float(np.linalg.norm(sys.mat @ theta - sys.lhs))
    deficient = rank < n * n + n
    if deficient:
        warnings.warn(f"regression matrix has rank {rank} < {n * n + n}; "
                      "returning the minimum-norm solution", RankDeficiencyWarning, stacklevel=2)
    return PinvSolution(A, B, theta, residual, rank, s, deficient)


@dataclass(frozen=True, eq=False)
class PinvResult:
    model: StateSpaceModel
    velocity_tf: TransferFunction
    position_tf: TransferFunction
    velocity_tf_reduced: TransferFunction
    position_tf_reduced: TransferFunction
    solution: PinvSolution
    diagnostics: dict = field(default_factory=dict)

    def __iter__(self):
        return iter((self.model, self.velocity_tf_reduced, self.position_tf_reduced))


def identify_pinv(record: SyncedRecord, states: int, va: float,
                  cancel_tol: float = CANCEL_TOL, rcond: float = RCOND) -> PinvResult:
    """Full pseudo-inversion pipeline on a conditioned record.

    The returned model outputs velocity (``C = [0 1 (0)]``); the position
    transfer function uses ``C = [1 0 (0)]``. Both are also given with
    near pole/zero pairs cancelled.
    """
    sol = pinv_solve(build_regression(record, states, va), rcond)
    c_vel = np.eye(states)[1]
    c_pos = np.eye(states)[0]
    model = StateSpaceModel(sol.A, sol.B, c_vel, 0.0)
    hv = ss_to_tf(model)
    hp = ss_to_tf(model.with_output(c_pos))
    first_row_dev = sol.A[0] - np.eye(states)[1]
    return PinvResult(
        model, hv, hp,
        cancel_near_pole_zero(hv, cancel_tol), cancel_near_pole_zero(hp, cancel_tol), sol,
        {"residual": sol.residual, "rank": sol.rank,
         "first_row_deviation": float(np.max(np.abs(first_row_dev))),
         "va": float(va), "dt": record.dt, "samples": len(record), "cancel_tol": cancel_tol},
    )


def first_order_fit(velocity: Trace, va: float, settle_frac: float = 0.1,
                    settle_tol: float = 0.01) -> TransferFunction:
    """``k/(s + 1/tau)`` from the steady state and the 63.2% crossing time."""
    v = velocity.samples
    m = max(2, int(round(settle_frac * v.size)))
    tail = v[-m:]
    v_inf = float(tail.mean())
    if v_inf == 0 or np.ptp(tail) > settle_tol * abs(v_inf):
        raise IdentificationError("first_order_fit: velocity has not settled")
    target = 0.632 * v_inf
    y = v / np.sign(v_inf)
    hits = np.flatnonzero(y >= abs(target))
    k = int(hits[0])
    if k == 0:
        raise IdentificationError("first_order_fit: response starts above 63.2% of final value")
    t = velocity.t - velocity.t0
    frac = (abs(target) - y[k - 1]) / (y[k] - y[k - 1])
    tau = float(t[k - 1] + frac * (t[k] - t[k - 1]))
    if not tau > 0:
        raise IdentificationError("first_order_fit: non-positive time constant")
    gain = v_inf / (va * tau)
    return TransferFunction([gain], [1.0 / tau, 1.0])
