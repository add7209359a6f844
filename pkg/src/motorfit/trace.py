"""Uniformly sampled scalar signal."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np


@dataclass(frozen=True, eq=False)
class Trace:
    """A scalar record sampled every ``dt`` seconds starting at ``t0``.

    Sample ``k`` sits at ``t0 + k*dt``. ``diverged`` marks a simulation that
    blew up; such a trace is truncated at the last finite sample.
    """

    t0: float
    dt: float
    samples: np.ndarray
    label: str = ""
    diverged: bool = field(default=False)

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        arr = np.array(self.samples, dtype=float).ravel()
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)
        object.__setattr__(self, "t0", float(self.t0))
        object.__setattr__(self, "dt", float(self.dt))

    def __len__(self):
        return self.samples.size

    @property
    def t(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.samples.size)

    @property
    def duration(self) -> float:
        return self.dt * max(self.samples.size - 1, 0)

    def with_samples(self, samples, **changes) -> "Trace":
        return replace(self, samples=samples, **changes)

    def at(self, t: float) -> float:
        """Sample nearest to time ``t``."""
        k = int(round((t - self.t0) / self.dt))
        if not 0 <= k < len(self):
            raise IndexError(f"t={t} outside trace")
        return float(self.samples[k])

    def __repr__(self):
        flag = ", diverged" if self.diverged else ""
        return (f"Trace(t0={self.t0:g}, dt={self.dt:g}, n={len(self)}"
                f"{', ' + self.label if self.label else ''}{flag})")
