"""Command-line front end: preprocess, identify, simulate, compare.

Exit status is 0 on success, 2 for bad input and 3 when an identification
algorithm fails. Error messages on stderr start with the failing stage.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import markov, pinv, signals
from .document import ModelDocument, compare
from .errors import IdentificationError, InvalidInputError, InvalidModelError, MotorfitError
from .lti import TransferFunction, tf_to_ss_companion
from .servo import ServoLoopConfig, simulate_servo_loop
from .signals import SyncedRecord, fmt_float
from .sim import WaveformSpec, add_noise, generate_reference, simulate_lti

SEED_ENV = "MOTORFIT_SEED"

TF_HELP = ('transfer function literal "num;den" with comma-separated coefficients in '
           'ascending powers of s, e.g. "36;36,1,1" for 36/(s^2+s+36)')
INPUT_HELP = ("reference kind:magnitude[:frequency_hz], kind one of step, sine, triangle, "
              "square; sine and triangle start at 0 rising, square starts at +magnitude "
              "with 50%% duty (default step:1)")


def parse_tf(text: str) -> TransferFunction:
    parts = text.split(";")
    if len(parts) != 2:
        raise InvalidModelError(f'malformed transfer function literal {text!r}; expected "num;den"')
    try:
        num, den = ([float(c) for c in p.split(",")] for p in parts)
    except ValueError:
        raise InvalidModelError(f"malformed transfer function literal {text!r}") from None
    return TransferFunction(num, den)


def _write_text(text: str, out):
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


def _columns_csv(header, cols) -> str:
    lines = [",".join(header)]
    lines += [",".join(fmt_float(c[k]) for c in cols) for k in range(len(cols[0]))]
    return "\n".join(lines) + "\n"


def _info(args, msg):
    # keep stdout clean when it carries the data
    stream = sys.stderr if args.output in (None, "-") else sys.stdout
    print(msg, file=stream)


# ---------------------------------------------------------------- preprocess

def _load_inputs(paths, fmt, names):
    """Each file is synchronized on its own input, then the channels are merged."""
    names = list(names) if names else []
    if names and len(names) != len(paths):
        raise InvalidInputError("--names needs one name per input file")
    parts = []
    for i, path in enumerate(paths):
        inp, sig = signals.load_trace_csv(path, fmt)
        name = names[i] if names else (sig.label if sig.label != "signal" else f"signal{i + 1}")
        parts.append((inp, name, sig.with_samples(sig.samples, label=name)))
    return parts


def cmd_preprocess(args) -> int:
    parts = _load_inputs(args.files, args.format, args.names.split(",") if args.names else None)
    dt_in = parts[0][0].dt
    recs = [signals.synchronize(inp, [(name, sig)], args.threshold) for inp, name, sig in parts]
    rec = recs[0] if len(recs) == 1 else signals.merge_records(recs)
    if args.unwrap:
        if args.position_channel not in rec.channels:
            raise InvalidInputError(f"no {args.position_channel!r} channel to unwrap")
        rec = rec.map(lambda tr: signals.unwrap_position(
            tr, args.jump, args.span, args.glitch_floor), [args.position_channel])
    if not args.no_zero_shift:
        rec = SyncedRecord(rec.input, {k: signals.zero_shift(v) for k, v in rec.channels.items()})
    rec = rec.map(lambda tr: signals.downsample(tr, args.ratio))
    if args.output in (None, "-"):
        signals.write_record_csv(sys.stdout, rec)
    else:
        signals.write_record_csv(args.output, rec)
    _info(args, f"preprocess: {len(rec)} samples kept, dt {dt_in:.6g} -> {rec.dt:.6g}, "
                f"channels {','.join(rec.channels)}")
    return 0


# ------------------------------------------------------------------ identify

def _record_va(rec: SyncedRecord, va):
    return float(np.median(rec.input.samples)) if va is None else va


def cmd_identify(args) -> int:
    rec = signals.load_record_csv(args.record)
    va = _record_va(rec, args.va)
    params = {"va": va}
    if args.method == "pinv":
        params.update(states=args.states, cancel_tol=args.cancel_tol, rcond=args.rcond)
        res = pinv.identify_pinv(rec, args.states, va, args.cancel_tol, args.rcond)
        doc = ModelDocument.from_pinv(res, params)
    elif args.method == "markov":
        params.update(lm=args.lm, te=args.te, gap_threshold=args.gap, order=args.order,
                      channel=args.channel)
        try:
            res = markov.identify_markov(rec[args.channel], va, args.lm, args.te, args.gap,
                                         args.order, require_rest=not args.allow_jump)
        except IdentificationError as exc:
            if getattr(exc, "spectrum", None) is not None:
                _print_spectrum(exc.spectrum, None)
            raise
        _print_spectrum(res.spectrum, res.order)
        doc = ModelDocument.from_markov(res, rec.dt, params)
    else:
        params.update(channel=args.channel)
        hv = pinv.first_order_fit(rec[args.channel], va)
        doc = ModelDocument.from_first_order(hv, rec.dt, va, params)
    doc.check_consistency()
    _write_text(doc.to_json(), args.output)
    _info(args, f"identify: velocity TF {doc.velocity_tf_reduced}")
    return 0


def _print_spectrum(spectrum, order):
    vals = " ".join(f"{v:.4g}" for v in spectrum)
    print(f"normalized Hankel singular values: {vals}", file=sys.stderr)
    if order is not None:
        print(f"detected order: {order}", file=sys.stderr)


# ------------------------------------------------------------------ simulate

def _seed(args) -> int:
    env = os.environ.get(SEED_ENV)
    if env is None:
        return args.seed
    try:
        return int(env)
    except ValueError:
        raise InvalidInputError(f"{SEED_ENV} must be an integer, got {env!r}") from None


def cmd_simulate(args) -> int:
    if (args.model is None) == (args.tf is None):
        raise InvalidInputError("give exactly one of --model or --tf")
    doc = ModelDocument.load(args.model) if args.model else None
    spec = WaveformSpec.parse(args.input)
    ref = generate_reference(spec, args.dt, args.duration)
    if any(g is not None for g in (args.kp, args.kv, args.sat)):
        plant = doc.position_tf if doc else parse_tf(args.tf)
        cfg = ServoLoopConfig(plant, args.kp or 0.0, args.kv or 0.0, args.sat, spec)
        pos, vel = simulate_servo_loop(cfg, args.dt, args.duration)
        out = vel if args.output_channel == "velocity" else pos
    else:
        if doc:
            m = doc.output_model(args.output_channel or "velocity")
        else:
            if args.output_channel:
                raise InvalidInputError("--output-channel needs --model or a closed loop")
            m = tf_to_ss_companion(parse_tf(args.tf))
        out = simulate_lti(m, ref)
    if out.diverged:
        print(f"simulate: response diverged at t={out.t0 + len(out) * out.dt!r}; output truncated",
              file=sys.stderr)
    out = add_noise(out, args.noise, _seed(args))
    n = len(out)
    _write_text(_columns_csv(["t", "input", "output"],
                             [ref.t[:n], ref.samples[:n], out.samples]), args.output)
    return 0


# ------------------------------------------------------------------- compare

def cmd_compare(args) -> int:
    doc = ModelDocument.load(args.model)
    rec = signals.load_record_csv(args.record)
    report, measured, predicted = compare(doc, rec, args.channel, args.reduced)
    print(report)
    if args.curves:
        n = min(len(measured), len(predicted))
        cols = [measured.t[:n], measured.samples[:n], predicted.samples[:n]]
        Path(args.curves).write_text(_columns_csv(["t", "measured", "model"], cols),
                                     encoding="utf-8")
    return 0


# ---------------------------------------------------------------------- main

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="motorfit", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    pp = sub.add_parser("preprocess", help="synchronize, unwrap, zero-shift and decimate records")
    pp.add_argument("files", nargs="+", help="three-column t,input,signal files")
    pp.add_argument("--format", choices=("native", "scope"), default="native")
    pp.add_argument("--names", help="comma-separated channel names, one per file")
    pp.add_argument("--threshold", type=float, default=signals.STEP_THRESHOLD,
                    help="step-onset threshold in volts (default %(default)s)")
    pp.add_argument("--unwrap", action="store_true", help="unwrap the position channel")
    pp.add_argument("--position-channel", default="position")
    pp.add_argument("--jump", type=float, default=signals.UNWRAP_JUMP)
    pp.add_argument("--span", type=float, default=signals.UNWRAP_SPAN)
    pp.add_argument("--glitch-floor", type=float, default=signals.GLITCH_FLOOR)
    pp.add_argument("--no-zero-shift", action="store_true")
    pp.add_argument("--ratio", type=int, default=1, help="decimation ratio (default 1)")
    pp.add_argument("-o", "--output", help="output CSV (default stdout)")
    pp.set_defaults(func=cmd_preprocess)

    pi = sub.add_parser("identify", help="identify a model from a preprocessed record")
    pi.add_argument("record", help="native record CSV with a t,input,<channels> header")
    pi.add_argument("--method", choices=("pinv", "markov", "first-order"), required=True)
    pi.add_argument("--va", type=float, help="step magnitude (default: median of the input)")
    pi.add_argument("--states", type=int, choices=(2, 3), default=2)
    pi.add_argument("--cancel-tol", type=float, default=pinv.CANCEL_TOL)
    pi.add_argument("--rcond", type=float, default=pinv.RCOND)
    pi.add_argument("--channel", default="velocity", help="signal for markov/first-order")
    pi.add_argument("--lm", type=int, default=11, help="number of Markov parameters")
    pi.add_argument("--te", type=float, help="fit window in seconds (default duration/3)")
    pi.add_argument("--gap", type=float, default=markov.GAP_THRESHOLD,
                    help="order-detection threshold (default %(default)s)")
    pi.add_argument("--order", type=int, help="force the realized order")
    pi.add_argument("--allow-jump", action="store_true",
                    help="accept a signal that does not start at zero (relative degree one)")
    pi.add_argument("-o", "--output", help="model JSON (default stdout)")
    pi.set_defaults(func=cmd_identify)

    ps = sub.add_parser("simulate", help="simulate a model or transfer function")
    src = ps.add_mutually_exclusive_group()
    src.add_argument("--model", help="model JSON from identify")
    src.add_argument("--tf", help=TF_HELP)
    ps.add_argument("--input", default="step:1", help=INPUT_HELP)
    ps.add_argument("--dt", type=float, default=0.01)
    ps.add_argument("--duration", type=float, default=5.0)
    ps.add_argument("--kp", type=float, help="position gain; closes the loop around the "
                    "position transfer function")
    ps.add_argument("--kv", type=float, help="velocity feedback gain")
    ps.add_argument("--sat", type=float, help="symmetric actuator limit in volts")
    ps.add_argument("--output-channel", choices=("position", "velocity"),
                    help="model output (default velocity open loop, position closed loop)")
    ps.add_argument("--noise", type=float, default=0.0, help="uniform noise amplitude")
    ps.add_argument("--seed", type=int, default=0, help=f"noise seed ({SEED_ENV} overrides)")
    ps.add_argument("-o", "--output", help="output CSV (default stdout)")
    ps.set_defaults(func=cmd_simulate)

    pc = sub.add_parser("compare", help="fit of a model against a record")
    pc.add_argument("model")
    pc.add_argument("record")
    pc.add_argument("--channel", choices=("velocity", "position"), default="velocity")
    pc.add_argument("--reduced", action="store_true",
                    help="simulate the pole/zero-cancelled transfer function")
    pc.add_argument("--curves", help="write t,measured,model CSV here")
    pc.set_defaults(func=cmd_compare)
    return p


def _error_line(exc: MotorfitError) -> str:
    msg = str(exc)
    return msg if msg.startswith(f"{exc.stage}:") else f"{exc.stage}: {msg}"


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InvalidInputError as exc:
        print(f"motorfit {args.command}: {_error_line(exc)}", file=sys.stderr)
        return 2
    except MotorfitError as exc:
        print(f"motorfit {args.command}: {_error_line(exc)}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
