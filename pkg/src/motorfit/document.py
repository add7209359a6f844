"""JSON model documents and model-versus-record comparison."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidInputError, InvalidModelError, ParseError
from .lti import StateSpaceModel, TransferFunction, ss_to_tf, tf_to_ss_companion
from .signals import SyncedRecord, downsample
from .sim import simulate_lti
from .trace import Trace

METHODS = ("pinv", "markov", "first_order")
CONSISTENCY_TOL = 1e-9


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, float)):
        return float(x)
    if isinstance(x, (np.integer, int)) and not isinstance(x, bool):
        return int(x)
    return x


@dataclass(frozen=True, eq=False)
class ModelDocument:
    """An identified model with its transfer functions and diagnostics.

    ``model`` outputs the velocity; ``position_output`` holds the ``(C, D)``
    row that selects the position instead. The ``*_reduced`` transfer
    functions have near pole/zero pairs cancelled (equal to the full ones
    when the method does no cancellation).
    """

    method: str
    model: StateSpaceModel
    position_output: tuple
    velocity_tf: TransferFunction
    position_tf: TransferFunction
    velocity_tf_reduced: TransferFunction
    position_tf_reduced: TransferFunction
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.method not in METHODS:
            raise InvalidModelError(f"unknown method {self.method!r}")

    @property
    def states(self) -> int:
        return self.model.n

    @property
    def position_model(self) -> StateSpaceModel:
        c, d = self.position_output
        return self.model.with_output(c, d)

    def output_model(self, output: str = "velocity") -> StateSpaceModel:
        if output == "velocity":
            return self.model
        if output == "position":
            return self.position_model
        raise InvalidInputError(f"unknown output {output!r} (velocity or position)")

    def tf(self, output: str = "velocity", reduced: bool = False) -> TransferFunction:
        if output not in ("velocity", "position"):
            raise InvalidInputError(f"unknown output {output!r} (velocity or position)")
        return getattr(self, f"{output}_tf" + ("_reduced" if reduced else ""))

    def check_consistency(self, tol: float = CONSISTENCY_TOL):
        """Raise unless the stored transfer functions match the stored matrices."""
        for name, m in (("velocity_tf", self.model), ("position_tf", self.position_model)):
            stored = getattr(self, name)
            if not ss_to_tf(m).allclose(stored, atol=tol, rtol=tol):
                raise InvalidModelError(f"{name} disagrees with the state-space matrices")

    # ------------------------------------------------------------ builders

    @classmethod
    def from_pinv(cls, result, parameters: dict | None = None) -> "ModelDocument":
        n = result.model.n
        diag = dict(result.diagnostics)
        diag["singular_values"] = result.solution.singular_values
        diag["parameters"] = parameters or {}
        return cls("pinv", result.model, (np.eye(n)[0], 0.0),
                   result.velocity_tf, result.position_tf,
                   result.velocity_tf_reduced, result.position_tf_reduced, diag)

    @classmethod
    def from_markov(cls, result, dt: float, parameters: dict | None = None) -> "ModelDocument":
        pos = result.model
        vel = result.velocity_model
        hv = ss_to_tf(vel)
        diag = {"spectrum": result.spectrum, "detected_order": result.order,
                "order": pos.n, "markov": result.markov.q, "te": result.markov.te,
                "v0": result.markov.v0, "dt": dt, "parameters": parameters or {}}
        return cls("markov", vel, (pos.C[0], pos.D.item()), hv, result.tf, hv, result.tf, diag)

    @classmethod
    def from_first_order(cls, velocity_tf: TransferFunction, dt: float, va: float,
                         parameters: dict | None = None) -> "ModelDocument":
        """Wrap ``k/(s + a)``; the position is its integral."""
        # ascending coefficients: dividing by s shifts the denominator up
        pos_tf = TransferFunction(velocity_tf.num, np.concatenate([[0.0], velocity_tf.den]))
        pm = tf_to_ss_companion(pos_tf)
        c = pm.C[0]
        vel = StateSpaceModel(pm.A, pm.B, c @ pm.A, (c @ pm.B).item())
        hv = ss_to_tf(vel)
        hp = ss_to_tf(pm)
        diag = {"k": float(velocity_tf.num[0]), "tau": 1.0 / float(velocity_tf.den[0]),
                "va": va, "dt": dt, "parameters": parameters or {}}
        # the state carries position, so the full velocity TF keeps an s/s pair
        return cls("first_order", vel, (c, pm.D.item()), hv, hp, velocity_tf, hp, diag)

    # ------------------------------------------------------- serialization

    def to_dict(self) -> dict:
        c_pos, d_pos = self.position_output
        return _jsonable({
            "method": self.method,
            "states": self.states,
            "A": self.model.A, "B": self.model.B, "C": self.model.C, "D": self.model.D,
            "C_position": np.atleast_2d(c_pos), "D_position": [[float(d_pos)]],
            "velocity_tf": self.velocity_tf.to_dict(),
            "position_tf": self.position_tf.to_dict(),
            "velocity_tf_reduced": self.velocity_tf_reduced.to_dict(),
            "position_tf_reduced": self.position_tf_reduced.to_dict(),
            "diagnostics": self.diagnostics,
        })

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "ModelDocument":
        try:
            model = StateSpaceModel(d["A"], d["B"], d["C"], d["D"])
            pos = (np.asarray(d["C_position"], dtype=float).ravel(),
                   float(np.asarray(d["D_position"]).item()))
            hv = TransferFunction.from_dict(d["velocity_tf"])
            hp = TransferFunction.from_dict(d["position_tf"])
            hvr = TransferFunction.from_dict(d.get("velocity_tf_reduced", d["velocity_tf"]))
            hpr = TransferFunction.from_dict(d.get("position_tf_reduced", d["position_tf"]))
            doc = cls(d["method"], model, pos, hv, hp, hvr, hpr, d.get("diagnostics", {}))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, InvalidInputError):
                raise
            raise ParseError(f"malformed model document: {exc}") from None
        if "states" in d and d["states"] != doc.states:
            raise InvalidModelError("'states' does not match the size of A")
        doc.check_consistency()
        return doc

    @classmethod
    def load(cls, path) -> "ModelDocument":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ParseError(f"cannot read model {path}: {exc}") from None
        if not isinstance(data, dict):
            raise ParseError(f"{path}: model document must be a JSON object")
        return cls.from_dict(data)


# ------------------------------------------------------------- comparison

@dataclass(frozen=True)
class FitReport:
    """``nrmse`` is the RMS error over the measured peak-to-peak range."""

    nrmse: float
    max_abs_error: float
    horizon: float

    def __post_init__(self):
        if not self.nrmse >= 0:
            raise InvalidInputError("nrmse must be non-negative")

    def __str__(self):
        return (f"nrmse={self.nrmse!r} max_abs_error={self.max_abs_error!r} "
                f"horizon={self.horizon!r}")


def fit_report(measured: Trace, predicted: Trace) -> FitReport:
    n = min(len(measured), len(predicted))
    if n < 2:
        raise InvalidInputError("need at least two overlapping samples to compare")
    y, yh = measured.samples[:n], predicted.samples[:n]
    span = float(np.ptp(y))
    if span == 0:
        raise InvalidInputError("measured signal is constant; nrmse is undefined")
    err = yh - y
    return FitReport(float(np.sqrt(np.mean(err ** 2)) / span), float(np.max(np.abs(err))),
                     float((n - 1) * measured.dt))


def align_to_model(record: SyncedRecord, model_dt: float | None) -> SyncedRecord:
    """Bring the record onto the model's sample period.

    A record sampled finer by an integer factor is decimated; a coarser one
    is used as is (the model is continuous); anything else is an error.
    """
    if model_dt is None or np.isclose(model_dt, record.dt, rtol=1e-6):
        return record
    ratio = model_dt / record.dt
    k = round(ratio)
    if k >= 2 and abs(ratio - k) <= 1e-6 * k:
        return record.map(lambda tr: downsample(tr, k))
    inv = record.dt / model_dt
    if round(inv) >= 2 and abs(inv - round(inv)) <= 1e-6 * inv:
        return record
    raise InvalidInputError(
        f"record dt {record.dt} and model dt {model_dt} are not related by an integer ratio")


def compare(doc: ModelDocument, record: SyncedRecord, channel: str = "velocity",
            reduced: bool = False) -> tuple[FitReport, Trace, Trace]:
    """Simulate ``doc`` on the record's input; returns ``(report, measured, predicted)``.

    ``channel`` names both the record channel and the model output. With
    ``reduced`` the cancelled transfer function is simulated instead of the
    state-space model.
    """
    if channel not in ("velocity", "position"):
        raise InvalidInputError(f"cannot compare channel {channel!r}; use velocity or position")
    if channel not in record.channels:
        raise InvalidInputError(f"record has no {channel!r} channel")
    rec = align_to_model(record, doc.diagnostics.get("dt"))
    m = tf_to_ss_companion(doc.tf(channel, True)) if reduced else doc.output_model(channel)
    predicted = simulate_lti(m, rec.input)
    measured = rec[channel]
    return fit_report(measured, predicted), measured, predicted.with_samples(
        predicted.samples, label="model")
