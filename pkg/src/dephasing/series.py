from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .errors import ValidationError

SPECTRAL = "SPECTRAL"
INTEGRATOR = "INTEGRATOR"
GAP_SUM = "GAP_SUM"
REGULARIZED = "REGULARIZED"
TOY = "TOY"
COMMUTATOR = "COMMUTATOR"
PROVENANCES = (SPECTRAL, INTEGRATOR, GAP_SUM, REGULARIZED, TOY, COMMUTATOR)


@dataclass(frozen=True)
class TimeGrid:
    """``steps`` equal intervals on ``[t_start, t_end]``, i.e. ``steps + 1`` sample times."""

    t_start: float = 0.0
    t_end: float = 5.0
    steps: int = 1000

    def __post_init__(self):
        if not self.t_end > self.t_start:
            raise ValidationError(f"t_end ({self.t_end}) must exceed t_start ({self.t_start})")
        if int(self.steps) < 1:
            raise ValidationError("a time grid needs at least one step")

    @property
    def times(self) -> np.ndarray:
        return np.linspace(self.t_start, self.t_end, int(self.steps) + 1)


def as_times(grid) -> np.ndarray:
    """Sample times of a ``TimeGrid`` or of any array-like."""
    if isinstance(grid, TimeGrid):
        return grid.times
    return np.asarray(grid, dtype=float)


@dataclass
class TimeSeries:
    times: np.ndarray
    values: np.ndarray
    provenance: str
    metadata: dict[str, Any] = field(default_factory=dict)
    imag_residual: np.ndarray | None = None
    reference: np.ndarray | None = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.times.shape != self.values.shape:
            raise ValidationError("times and values must have equal length")
        if self.times.size > 1 and np.any(np.diff(self.times) < 0):
            raise ValidationError("times must be ascending")
        if self.provenance not in PROVENANCES:
            raise ValidationError(f"unknown provenance {self.provenance!r}")

    def __len__(self):
        return self.times.shape[0]

    def window(self, t_lo: float, t_hi: float) -> np.ndarray:
        mask = (self.times >= t_lo) & (self.times <= t_hi)
        return self.values[mask]
