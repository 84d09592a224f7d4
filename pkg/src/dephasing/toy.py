"""Random-gap toy model of dephasing.

``N`` gaps are drawn uniformly from ``[-delta_max, delta_max]`` and given real
weights proportional to a zero-mean Gaussian density of standard deviation
``sqrt(2)/tau`` (rescaled to sum to ``dA0``), so that for large ``N`` the phase
sum approaches ``dA0 * exp(-(t/tau)**2)``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .phasesum import iter_phase_sums, phase_sums
from .series import TOY, TimeSeries

HORIZON_POINTS = 10**4
HORIZON_SPAN = 10.0
SUP_POINTS = 201


@dataclass(frozen=True, eq=False)
class ToyEnsemble:
    N: int
    delta_max: float
    tau: float
    seed: int
    deltas: np.ndarray
    amplitudes: np.ndarray
    dA0: float

    @property
    def density_std(self) -> float:
        return math.sqrt(2.0) / self.tau

    def envelope(self, times) -> np.ndarray:
        t = np.asarray(times, dtype=float)
        return self.dA0 * np.exp(-((t / self.tau) ** 2))


def sample_toy_ensemble(N: int, delta_max: float, tau: float, seed: int, dA0: float = 1.0) -> ToyEnsemble:
    if int(N) < 1:
        raise ValidationError("N must be at least 1")
    if not tau > 0 or not delta_max > 0:
        raise ValidationError("tau and delta_max must be positive")
    std = math.sqrt(2.0) / tau
    if std > delta_max / 4:
        warnings.warn(
            f"weight profile std {std:.3g} is not small against delta_max={delta_max}; "
            "the Gaussian envelope will be distorted",
            stacklevel=2,
        )
    rng = np.random.default_rng(int(seed))
    deltas = rng.uniform(-delta_max, delta_max, int(N))
    weights = np.exp(-0.5 * (deltas / std) ** 2) / (std * math.sqrt(2.0 * math.pi))
    total = float(np.sum(weights))
    if total == 0.0:
        raise ValidationError("all toy weights underflowed to zero; cannot normalize")
    return ToyEnsemble(int(N), float(delta_max), float(tau), int(seed), deltas, weights * (dA0 / total), float(dA0))


def toy_deviation(ens: ToyEnsemble, times) -> TimeSeries:
    times = np.asarray(times, dtype=float)
    s = phase_sums(ens.deltas, ens.amplitudes, times)
    return TimeSeries(
        times,
        s.real,
        TOY,
        metadata={"N": ens.N, "tau": ens.tau, "delta_max": ens.delta_max, "seed": ens.seed},
        imag_residual=np.abs(s.imag),
        reference=ens.envelope(times),
    )


def toy_sup_error(ens: ToyEnsemble, t_max: float | None = None, points: int = SUP_POINTS) -> float:
    """``sup |Delta A(t) - dA0 exp(-(t/tau)^2)|`` over ``points`` times on ``[0, t_max]``."""
    t_max = 2.0 * ens.tau if t_max is None else t_max
    series = toy_deviation(ens, np.linspace(0.0, t_max, points))
    return float(np.max(np.abs(series.values - series.reference)))


def horizon_grid(tau: float) -> np.ndarray:
    return np.linspace(0.0, HORIZON_SPAN * tau, HORIZON_POINTS)


def toy_error_horizon(ens: ToyEnsemble, eps: float) -> float:
    """Last grid time up to which the envelope error stays within ``eps`` from ``t = 0``.

    The grid has ``HORIZON_POINTS`` points on ``[0, HORIZON_SPAN * tau]``; the
    full span is returned when the bound is never violated and 0 when it fails
    already at ``t = 0``.
    """
    if not eps > 0:
        raise ValidationError("eps must be positive")
    times = horizon_grid(ens.tau)
    env = ens.envelope(times)
    for sl, block in iter_phase_sums(ens.deltas, ens.amplitudes, times):
        bad = np.flatnonzero(np.abs(block.real - env[sl]) > eps)
        if bad.size:
            first = sl.start + int(bad[0])
            return float(times[first - 1]) if first > 0 else 0.0
    return float(times[-1])


def equilibration_time(ens: ToyEnsemble, points: int = 4001) -> float:
    """First time on ``[0, 4 tau]`` at which ``Delta A(t) <= dA0 / e``."""
    times = np.linspace(0.0, 4.0 * ens.tau, points)
    series = toy_deviation(ens, times)
    hit = np.flatnonzero(series.values <= ens.dA0 / math.e)
    return float(times[hit[0]]) if hit.size else float("nan")


@dataclass(frozen=True)
class ConvergenceRow:
    N: int
    seed: int
    sup_error: float
    horizon: float | None


def toy_convergence(
    Ns, seeds, tau: float = 1.0, delta_max: float = 20.0, eps: float | None = None
) -> tuple[list[ConvergenceRow], float]:
    """Sup-error (and optionally horizon) table plus the log-log slope of error vs ``N``.

    The slope is a least-squares fit through every ``(N, seed)`` point.
    """
    rows = []
    for N in Ns:
        for seed in seeds:
            ens = sample_toy_ensemble(N, delta_max, tau, seed)
            horizon = toy_error_horizon(ens, eps) if eps is not None else None
            rows.append(ConvergenceRow(int(N), int(seed), toy_sup_error(ens), horizon))
    x = np.log([r.N for r in rows])
    y = np.log([r.sup_error for r in rows])
    slope = float(np.polyfit(x, y, 1)[0]) if len(set(x)) > 1 else float("nan")
    return rows, slope
