"""Regenerate data/synthetic_motor/: a noisy three-channel motor step record.

The ground truth is a 3-state armature model ``x = [position, velocity,
current]`` whose velocity transfer function has a zero. The files mimic a
scope capture: a short pre-trigger segment, a wrapped position encoder and
uniform measurement noise.
"""

import argparse
from pathlib import Path

import numpy as np

from motorfit.lti import StateSpaceModel, ss_to_tf
from motorfit.sim import add_noise, simulate_lti
from motorfit.trace import Trace

A = [[0.0, 1.0, 0.0], [0.0, -2.5, 0.6], [0.0, -0.5, -5.0]]
B = [0.0, 2.0, 3.0]
VA = 5.92
DT = 0.004
PRE_TRIGGER = 0.2
DURATION = 4.5
WRAP = 10.2
NOISE = {"position": 0.01, "velocity": 0.02, "current": 0.05}


def wrap(x, half=WRAP):
    return (x + half) % (2 * half) - half


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default=Path(__file__).resolve().parents[1] / "data" / "synthetic_motor")
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args(argv)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    n = int(round(DURATION / DT)) + 1
    t = np.round(-PRE_TRIGGER + DT * np.arange(n), 10)
    u = np.where(t >= -1e-12, VA, 0.0)
    base = StateSpaceModel(A, B, [1.0, 0.0, 0.0], 0.0)
    inp = Trace(t[0], DT, u, label="input")
    for j, name in enumerate(("position", "velocity", "current")):
        y = simulate_lti(base.with_output(np.eye(3)[j]), inp).samples
        y = add_noise(Trace(t[0], DT, y), NOISE[name], args.seed + j).samples
        if name == "position":
            y = wrap(y)
        rows = ["t,input," + name] + [f"{a!r},{b!r},{c!r}" for a, b, c in zip(t.tolist(), u.tolist(), y.tolist())]
        (out / f"{name}.csv").write_text("\n".join(rows) + "\n", encoding="utf-8")
    print("velocity TF:", ss_to_tf(base.with_output([0.0, 1.0, 0.0])))


if __name__ == "__main__":
    main()
