"""Conditioning of oscilloscope-style records ahead of identification.

The pipeline is: load -> synchronize on the step onset -> unwrap the position
encoder -> zero-shift -> decimate -> differentiate.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidInputError, ParseError, SyncError
from .trace import Trace

MIN_ROWS = 16
JITTER_TOL = 0.01

STEP_THRESHOLD = 0.5
UNWRAP_JUMP = 15.0
UNWRAP_SPAN = 20.4
GLITCH_FLOOR = 1.0
GLITCH_STEP = 5.0


@dataclass(frozen=True, eq=False)
class SyncedRecord:
    """Step input plus named channels on one common grid starting at t = 0."""

    input: Trace
    channels: dict

    def __post_init__(self):
        n = len(self.input)
        for name, tr in self.channels.items():
            if len(tr) != n or not np.isclose(tr.dt, self.input.dt, rtol=1e-9):
                raise InvalidInputError(f"channel {name!r} is not on the input grid")

    @property
    def dt(self) -> float:
        return self.input.dt

    def __len__(self):
        return len(self.input)

    def __getitem__(self, name) -> Trace:
        try:
            return self.channels[name]
        except KeyError:
            raise InvalidInputError(f"record has no {name!r} channel") from None

    def map(self, fn, names=None) -> "SyncedRecord":
        """Apply ``fn`` to the input and the channels in ``names`` (default all)."""
        names = self.channels.keys() if names is None else names
        chans = {k: (fn(v) if k in names else v) for k, v in self.channels.items()}
        return SyncedRecord(fn(self.input), chans)


# --------------------------------------------------------------------- I/O

def _read_rows(path):
    try:
        text = Path(path).read_text(encoding="utf-8-sig")
    except (OSError, UnicodeDecodeError) as exc:
        raise ParseError(f"cannot read {path}: {exc}") from None
    return list(csv.reader(io.StringIO(text)))


def _floats(cells):
    try:
        return [float(c) for c in cells]
    except ValueError:
        return None


def _uniform_dt(t: np.ndarray, path) -> float:
    d = np.diff(t)
    dt = float(np.median(d))
    if not dt > 0:
        raise ParseError(f"{path}: timestamps are not increasing")
    if np.any(np.abs(d - dt) > JITTER_TOL * dt):
        raise ParseError(f"{path}: non-uniform sampling (deviation above 1% of dt)")
    return dt


def _table(path, fmt):
    rows = _read_rows(path)
    data, header = [], None
    for row in rows:
        cells = [c.strip() for c in row]
        if fmt == "scope":
            cells = [c for c in cells if c]
            vals = _floats(cells[-3:]) if len(cells) >= 3 else None
            if vals is not None:
                data.append(vals)
            continue
        if not any(cells):
            continue
        vals = _floats(cells)
        if vals is None:
            if data or header is not None:
                raise ParseError(f"{path}: unparsable row {row!r}")
            header = cells
            continue
        if data and len(vals) != len(data[0]):
            raise ParseError(f"{path}: ragged row {row!r}")
        data.append(vals)
    if len(data) < MIN_ROWS:
        raise ParseError(f"{path}: need at least {MIN_ROWS} data rows, found {len(data)}")
    arr = np.array(data)
    if header is not None and len(header) != arr.shape[1]:
        raise ParseError(f"{path}: header has {len(header)} columns, data {arr.shape[1]}")
    return arr, header


def load_trace_csv(path, format: str = "native") -> tuple[Trace, Trace]:
    """Read ``(input, signal)`` from a three-column record.

    ``native`` files hold ``t,input,signal`` rows with an optional header.
    ``scope`` files may carry leading metadata columns and blank cells; every
    row whose last three non-blank cells are numbers is taken as data.
    """
    if format not in ("native", "scope"):
        raise InvalidInputError(f"unknown CSV format {format!r}")
    arr, header = _table(path, format)
    if arr.shape[1] != 3:
        raise ParseError(f"{path}: expected 3 columns, found {arr.shape[1]}")
    dt = _uniform_dt(arr[:, 0], path)
    name = header[2] if header else "signal"
    t0 = arr[0, 0]
    return Trace(t0, dt, arr[:, 1], label="input"), Trace(t0, dt, arr[:, 2], label=name)


def load_record_csv(path) -> SyncedRecord:
    """Read a multi-channel native file ``t,input,<name>,...`` (header required)."""
    arr, header = _table(path, "native")
    if header is None or arr.shape[1] < 3:
        raise ParseError(f"{path}: record files need a header and at least 3 columns")
    dt = _uniform_dt(arr[:, 0], path)
    t0 = arr[0, 0]
    inp = Trace(t0, dt, arr[:, 1], label="input")
    chans = {name: Trace(t0, dt, arr[:, j], label=name) for j, name in enumerate(header[2:], 2)}
    return SyncedRecord(inp, chans)


def fmt_float(x: float) -> str:
    return repr(float(x))


def write_record_csv(path_or_file, record: SyncedRecord):
    names = list(record.channels)
    cols = [record.input.t, record.input.samples] + [record[n].samples for n in names]
    lines = [",".join(["t", "input"] + names)]
    lines += [",".join(fmt_float(c[k]) for c in cols) for k in range(len(record))]
    text = "\n".join(lines) + "\n"
    if hasattr(path_or_file, "write"):
        path_or_file.write(text)
    else:
        Path(path_or_file).write_text(text, encoding="utf-8")


# ----------------------------------------------------------------- conditioning

def step_onset(inp: Trace, threshold: float = STEP_THRESHOLD) -> int:
    above = inp.samples >= threshold
    if not above.any():
        raise SyncError("synchronize: no step onset")
    k = int(np.argmax(above))
    if not above[k:].all():
        raise SyncError("synchronize: input crosses the threshold more than once")
    return k


def synchronize(inp: Trace, signals, threshold: float = STEP_THRESHOLD) -> SyncedRecord:
    """Cut every trace at the step onset, rebase time to 0, trim to equal length."""
    signals = list(signals.items()) if isinstance(signals, dict) else list(signals)
    for name, tr in signals:
        if not np.isclose(tr.dt, inp.dt, rtol=1e-6):
            raise SyncError(f"synchronize: channel {name!r} has dt {tr.dt}, input {inp.dt}")
    k = step_onset(inp, threshold)
    n = min([len(inp)] + [len(tr) for _, tr in signals]) - k
    if n < 2:
        raise SyncError("synchronize: fewer than 2 samples after the step onset")

    def cut(tr):
        return Trace(0.0, inp.dt, tr.samples[k:k + n], label=tr.label)

    return SyncedRecord(cut(inp), {name: cut(tr) for name, tr in signals})


def merge_records(records) -> SyncedRecord:
    """Combine separately synchronized records (one channel each) into one."""
    records = list(records)
    if not records:
        raise InvalidInputError("nothing to merge")
    dt = records[0].dt
    if any(not np.isclose(r.dt, dt, rtol=1e-6) for r in records):
        raise SyncError("synchronize: records have different sample periods")
    n = min(len(r) for r in records)
    cut = lambda tr: Trace(0.0, dt, tr.samples[:n], label=tr.label)  # noqa: E731
    chans = {}
    for r in records:
        for name, tr in r.channels.items():
            if name in chans:
                raise InvalidInputError(f"channel {name!r} appears in more than one record")
            chans[name] = cut(tr)
    return SyncedRecord(cut(records[0].input), chans)


def unwrap_position(p: Trace, jump: float = UNWRAP_JUMP, span: float = UNWRAP_SPAN,
                    glitch_floor: float = GLITCH_FLOOR, glitch_step: float = GLITCH_STEP) -> Trace:
    """Undo the encoder's +-10 V wrap-around.

    First pass: a near-zero sample (``|P(i)| < glitch_floor``) that jumps more
    than ``glitch_step`` from its predecessor is replaced by the predecessor.
    Second pass: a drop larger than ``jump`` between neighbours adds ``span``
    to everything after it, a rise larger than ``jump`` subtracts ``span``.
    """
    if not (jump > 0 and span > 0):
        raise InvalidInputError("jump and span must be positive")
    x = p.samples.copy()
    for i in range(1, x.size):
        if abs(x[i]) < glitch_floor and abs(x[i] - x[i - 1]) > glitch_step:
            x[i] = x[i - 1]
    # both tests see the offset applied by the earlier one, as the
    # sequential in-place update does
    offset = 0.0
    out = x.copy()
    for i in range(x.size - 1):
        cur = x[i] + offset
        if cur - (x[i + 1] + offset) > jump:
            offset += span
        if cur - (x[i + 1] + offset) < -jump:
            offset -= span
        out[i + 1] = x[i + 1] + offset
    return p.with_samples(out)


def zero_shift(t: Trace) -> Trace:
    if len(t) == 0:
        raise InvalidInputError("zero_shift needs a non-empty trace")
    return t.with_samples(t.samples - t.samples[0])


def downsample(t: Trace, ratio: int) -> Trace:
    """Keep every ``ratio``-th sample starting at index 0 (no filtering)."""
    if int(ratio) != ratio or ratio < 1:
        raise InvalidInputError("ratio must be a positive integer")
    ratio = int(ratio)
    kept = t.samples[::ratio]
    if kept.size < 2:
        raise InvalidInputError("downsampled trace would have fewer than 2 samples")
    return Trace(t.t0, t.dt * ratio, kept, label=t.label, diverged=t.diverged)


STENCILS = {
    "central3": (1, np.array([-1.0, 0.0, 1.0]) / 2.0),
    "central5": (2, np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0),
}


def differentiate(t: Trace, scheme: str = "central5") -> Trace:
    """Central-difference derivative; samples lacking a full stencil are dropped."""
    try:
        half, w = STENCILS[scheme]
    except KeyError:
        raise InvalidInputError(f"unknown differentiation scheme {scheme!r}") from None
    x = t.samples
    if x.size < 2 * half + 1:
        raise InvalidInputError(f"{scheme} needs at least {2 * half + 1} samples")
    n = x.size - 2 * half
    d = sum(w[j] * x[j:j + n] for j in range(w.size) if w[j] != 0.0) / t.dt
    return Trace(t.t0 + half * t.dt, t.dt, d, label=f"d{t.label}/dt" if t.label else "")


def crop(t: Trace, k: int) -> Trace:
    """Drop ``k`` samples from both ends, keeping the time base consistent."""
    if k == 0:
        return t
    if len(t) <= 2 * k:
        raise InvalidInputError("trace too short to crop")
    return Trace(t.t0 + k * t.dt, t.dt, t.samples[k:-k], label=t.label)
