"""SISO continuous-time LTI algebra.

Polynomials are stored as numpy arrays of coefficients in *ascending* powers
of s, i.e. ``c[k]`` multiplies ``s**k``. That is the convention of
``numpy.polynomial.polynomial``, which supplies the arithmetic and the
companion-matrix root finder used here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial import polynomial as P

from .errors import AmbiguousDominanceError, InvalidInputError, InvalidModelError

_TRIM_RTOL = 1e-13


def _as_poly(coeffs) -> np.ndarray:
    c = np.atleast_1d(np.asarray(coeffs, dtype=float)).ravel()
    if c.size == 0:
        raise InvalidModelError("polynomial needs at least one coefficient")
    if not np.all(np.isfinite(c)):
        raise InvalidModelError("polynomial coefficients must be finite")
    return c


def trim(c: np.ndarray, rtol: float = _TRIM_RTOL) -> np.ndarray:
    """Drop leading (highest-power) coefficients that are zero to ``rtol``."""
    c = np.asarray(c, dtype=float)
    scale = np.max(np.abs(c)) if c.size else 0.0
    if scale == 0.0:
        return np.zeros(1)
    k = c.size
    while k > 1 and abs(c[k - 1]) <= rtol * scale:
        k -= 1
    return c[:k].copy()


def _real_poly_from_roots(roots) -> np.ndarray:
    roots = list(roots)
    if not roots:
        return np.ones(1)
    return np.real(P.polyfromroots(roots))


@dataclass(frozen=True, eq=False)
class TransferFunction:
    """Ratio ``num(s)/den(s)`` with a monic denominator.

    Coefficients are ascending. The constructor normalizes: near-zero leading
    coefficients are trimmed and the denominator's leading coefficient is
    divided into both polynomials.
    """

    num: np.ndarray
    den: np.ndarray

    def __post_init__(self):
        num = trim(_as_poly(self.num))
        den = trim(_as_poly(self.den))
        if den.size < 2:
            raise InvalidModelError("denominator degree must be at least 1")
        lead = den[-1]
        num, den = num / lead, den / lead
        if num.size > den.size:
            raise InvalidModelError("transfer function is improper")
        num.setflags(write=False)
        den.setflags(write=False)
        object.__setattr__(self, "num", num)
        object.__setattr__(self, "den", den)

    @property
    def order(self) -> int:
        return self.den.size - 1

    @property
    def num_degree(self) -> int:
        return 0 if not np.any(self.num) else self.num.size - 1

    @property
    def strictly_proper(self) -> bool:
        return self.num.size < self.den.size or not np.any(self.num)

    def __call__(self, s):
        return P.polyval(s, self.num) / P.polyval(s, self.den)

    def poles(self) -> np.ndarray:
        return poles(self)

    def zeros(self) -> np.ndarray:
        return zeros(self)

    def dc_gain(self) -> float:
        if self.den[0] == 0:
            return np.inf if self.num[0] != 0 else np.nan
        return self.num[0] / self.den[0]

    def low_frequency_gain(self) -> tuple[float, int]:
        """``(g, m)`` such that ``H(s) ~ g * s**m`` as ``s -> 0``."""
        i_n = _lowest_nonzero(self.num)
        i_d = _lowest_nonzero(self.den)
        if i_n is None:
            return 0.0, 0
        return self.num[i_n] / self.den[i_d], i_n - i_d

    def __mul__(self, other):
        if isinstance(other, TransferFunction):
            return TransferFunction(P.polymul(self.num, other.num), P.polymul(self.den, other.den))
        return TransferFunction(self.num * float(other), self.den)

    __rmul__ = __mul__

    def allclose(self, other: "TransferFunction", atol: float = 1e-9, rtol: float = 0.0) -> bool:
        n = max(self.num.size, other.num.size)
        d = max(self.den.size, other.den.size)
        return (np.allclose(_pad(self.num, n), _pad(other.num, n), atol=atol, rtol=rtol)
                and np.allclose(_pad(self.den, d), _pad(other.den, d), atol=atol, rtol=rtol))

    def to_dict(self) -> dict:
        return {"num": [float(c) for c in self.num], "den": [float(c) for c in self.den]}

    @classmethod
    def from_dict(cls, d: dict) -> "TransferFunction":
        return cls(d["num"], d["den"])

    @classmethod
    def from_roots(cls, zeros, poles, gain: float = 1.0) -> "TransferFunction":
        return cls(gain * _real_poly_from_roots(zeros), _real_poly_from_roots(poles))

    def __str__(self):
        return f"({_poly_str(self.num)}) / ({_poly_str(self.den)})"

    def __repr__(self):
        return f"TransferFunction(num={list(self.num)}, den={list(self.den)})"


def _lowest_nonzero(c):
    nz = np.flatnonzero(c)
    return int(nz[0]) if nz.size else None


def _pad(c, n):
    out = np.zeros(n)
    out[:c.size] = c
    return out


def _poly_str(c) -> str:
    terms = []
    for k in range(c.size - 1, -1, -1):
        if c[k] == 0 and c.size > 1:
            continue
        mono = "" if k == 0 else ("s" if k == 1 else f"s^{k}")
        coef = f"{c[k]:.6g}"
        if mono and coef == "1":
            coef = ""
        terms.append(f"{coef}{'*' if coef and mono else ''}{mono}")
    return " + ".join(terms).replace("+ -", "- ") or "0"


@dataclass(frozen=True, eq=False)
class StateSpaceModel:
    """``x' = A x + B u``, ``y = C x + D u`` with a scalar input and output."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        n = A.shape[0]
        if A.shape != (n, n) or n < 1:
            raise InvalidModelError(f"A must be square and non-empty, got shape {A.shape}")
        B = np.asarray(self.B, dtype=float).reshape(-1, 1) if np.size(self.B) == n else None
        C = np.asarray(self.C, dtype=float).reshape(1, -1) if np.size(self.C) == n else None
        if B is None or C is None:
            raise InvalidModelError(
                f"B and C must have {n} entries (got {np.size(self.B)} and {np.size(self.C)})")
        if np.size(self.D) != 1:
            raise InvalidModelError("D must be 1x1")
        D = np.asarray(self.D, dtype=float).reshape(1, 1)
        for name, m in zip("ABCD", (A, B, C, D)):
            if not np.all(np.isfinite(m)):
                raise InvalidModelError(f"{name} has non-finite entries")
            m.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "D", D)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    def with_output(self, C, D=0.0) -> "StateSpaceModel":
        return StateSpaceModel(self.A, self.B, C, D)

    def similar(self, T) -> "StateSpaceModel":
        """Realization in coordinates ``z = T x``."""
        T = np.asarray(T, dtype=float)
        Ti = np.linalg.inv(T)
        return StateSpaceModel(T @ self.A @ Ti, T @ self.B, self.C @ Ti, self.D)

    def markov(self, count: int) -> np.ndarray:
        """``C A^(i-1) B`` for ``i = 1..count``."""
        out = np.empty(count)
        x = self.B[:, 0].copy()
        for i in range(count):
            out[i] = (self.C @ x).item()
            x = self.A @ x
        return out

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in "ABCD"}


def ss_to_tf(m: StateSpaceModel) -> TransferFunction:
    """``C adj(sI - A) B / det(sI - A) + D``.

    The characteristic polynomial and the adjugate's matrix coefficients come
    from the Faddeev-LeVerrier recursion, so the denominator is exactly monic.
    """
    if not isinstance(m, StateSpaceModel):
        raise InvalidModelError("ss_to_tf expects a StateSpaceModel")
    A, n = m.A, m.n
    den = np.zeros(n + 1)
    den[n] = 1.0
    num = np.zeros(n + 1)
    M = np.zeros_like(A)
    eye = np.eye(n)
    for k in range(1, n + 1):
        M = A @ M + den[n - k + 1] * eye
        # adj(sI - A) = sum_k M_k s^(n-k)
        num[n - k] = (m.C @ M @ m.B).item()
        den[n - k] = -np.trace(A @ M) / k
    num = num + m.D.item() * den
    return TransferFunction(num, den)


def tf_to_ss_companion(h: TransferFunction) -> StateSpaceModel:
    """Controllable companion realization of a proper transfer function."""
    if h.num.size > h.den.size:
        raise InvalidInputError("tf_to_ss_companion needs a proper transfer function")
    n = h.order
    a = h.den
    b = _pad(h.num, n + 1)
    d = b[n]
    A = np.zeros((n, n))
    A[:-1, 1:] = np.eye(n - 1)
    A[-1, :] = -a[:n]
    B = np.zeros(n)
    B[-1] = 1.0
    C = b[:n] - d * a[:n]
    return StateSpaceModel(A, B, C, d)


def poles(h: TransferFunction) -> np.ndarray:
    return P.polyroots(h.den)


def zeros(h: TransferFunction) -> np.ndarray:
    if h.num.size < 2 or not np.any(h.num):
        return np.array([], dtype=complex)
    return P.polyroots(h.num)


def _match_pairs(ps, zs, tol):
    """Greedy closest-first pairing of poles with zeros within ``tol``."""
    cands = sorted(
        (abs(p - z), i, j) for i, p in enumerate(ps) for j, z in enumerate(zs) if abs(p - z) <= tol
    )
    used_p, used_z = set(), set()
    for _, i, j in cands:
        if i not in used_p and j not in used_z:
            used_p.add(i)
            used_z.add(j)
    return used_p, used_z


def cancel_near_pole_zero(h: TransferFunction, tol: float) -> TransferFunction:
    """Remove pole/zero pairs closer than ``tol`` and rebuild from the rest.

    The numerator's leading coefficient is kept, so the retained factors are
    reproduced exactly. With ``tol <= 0`` or no qualifying pair ``h`` is
    returned unchanged.
    """
    if tol <= 0:
        return h
    zs = zeros(h)
    if zs.size == 0:
        return h
    ps = poles(h)
    used_p, used_z = _match_pairs(ps, zs, tol)
    if not used_p:
        return h
    keep_p = [p for i, p in enumerate(ps) if i not in used_p]
    keep_z = [z for j, z in enumerate(zs) if j not in used_z]
    if not keep_p:
        raise InvalidInputError("cancellation would remove every pole")
    lead = h.num[-1]
    return TransferFunction.from_roots(keep_z, keep_p, lead)


def _root_groups(roots, tol=1e-9):
    """Group roots so that a complex-conjugate pair forms a single group."""
    roots = list(roots)
    groups = []
    used = [False] * len(roots)
    for i, r in enumerate(roots):
        if used[i]:
            continue
        used[i] = True
        scale = max(1.0, abs(r))
        if abs(r.imag) <= tol * scale:
            groups.append([complex(r.real, 0.0)])
            continue
        best, best_d = None, np.inf
        for j in range(i + 1, len(roots)):
            if not used[j]:
                d = abs(roots[j] - np.conj(r))
                if d < best_d:
                    best, best_d = j, d
        if best is None or best_d > 1e-6 * scale:
            raise InvalidInputError("complex root without a conjugate partner")
        used[best] = True
        groups.append([r, np.conj(r)])
    return groups


def dominant_pole_reduce(h: TransferFunction, target_order: int) -> TransferFunction:
    """Keep the ``target_order`` poles closest to the imaginary axis.

    Zeros slower than every discarded pole are kept (at most
    ``target_order - 1`` of them); the gain is then fixed so that the
    low-frequency behaviour ``g * s**m`` of ``h`` is preserved.
    """
    if target_order < 1:
        raise InvalidInputError("target_order must be at least 1")
    if target_order >= h.order:
        if target_order == h.order:
            return h
        raise InvalidInputError("target_order must not exceed the current order")
    groups = sorted(_root_groups(poles(h)), key=lambda g: -g[0].real)
    kept, count = [], 0
    for gi, g in enumerate(groups):
        if count == target_order:
            last = groups[gi - 1][0].real
            if abs(g[0].real - last) <= 1e-9 * max(1.0, abs(last)):
                raise AmbiguousDominanceError("tied real parts at the reduction boundary")
            break
        if count + len(g) > target_order:
            raise AmbiguousDominanceError(
                "reduction would split a complex-conjugate pole pair")
        kept.extend(g)
        count += len(g)
    discarded = [p for g in groups for p in g][len(kept):]
    slowest_discarded = min(-p.real for p in discarded)

    zero_groups = sorted(_root_groups(zeros(h)), key=lambda g: -g[0].real) if h.num_degree else []
    kept_z = []
    for g in zero_groups:
        if -g[0].real < slowest_discarded and len(kept_z) + len(g) <= target_order - 1:
            kept_z.extend(g)

    reduced = TransferFunction.from_roots(kept_z, kept)
    g_old, m_old = h.low_frequency_gain()
    g_new, m_new = reduced.low_frequency_gain()
    if m_old != m_new:
        raise InvalidInputError("cannot preserve low-frequency behaviour")
    return reduced * (g_old / g_new)


def feedback(forward: TransferFunction, gain: float = 1.0) -> TransferFunction:
    """Unity negative feedback around ``gain * forward``."""
    num = gain * forward.num
    den = P.polyadd(forward.den, num)
    return TransferFunction(num, den)


def step_response(h: TransferFunction, v0: float, dt: float, duration: float):
    """Response of ``h`` to ``v0 * u(t)`` from rest, sampled on ``[0, duration]``."""
    from .sim import simulate_lti, step_input

    _check_grid(dt, duration)
    return simulate_lti(tf_to_ss_companion(h), step_input(v0, dt, duration))


def impulse_response(h: TransferFunction, dt: float, duration: float):
    """Unit-impulse response, simulated as the free response from ``x(0) = B``.

    A proper ``h`` carries a delta of weight ``D`` at ``t = 0`` which a sampled
    trace cannot represent; only the regular part is returned.
    """
    from .sim import simulate_lti, step_input

    _check_grid(dt, duration)
    m = tf_to_ss_companion(h)
    u = step_input(0.0, dt, duration)
    return simulate_lti(m.with_output(m.C, 0.0), u, x0=m.B[:, 0])


def _check_grid(dt, duration):
    if not dt > 0:
        raise InvalidInputError("dt must be positive")
    if duration < dt:
        raise InvalidInputError("duration must be at least dt")
