"""Gap amplitudes, their Gaussian regularization and the resulting deviations.

For a pure state with eigenbasis amplitudes ``c`` the pair ``(i, j)``
contributes ``z = A_ij c_j conj(c_i)`` at gap ``E_i - E_j``, so that
``<A(t)> = sum_ij z_ij exp(i (E_i - E_j) t)``.  Pairs with ``|E_i - E_j|``
at or below the zero threshold form the infinite-time average.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .phasesum import phase_sums
from .series import GAP_SUM, REGULARIZED, TimeSeries, as_times
from .spectral import ZERO_GAP, EigenSystem

MAX_ENTRIES = 2**31
WEIGHT_TOLERANCE = 1e-8
DEFAULT_T = 33.0
DEFAULT_M = 5000
KERNEL_TRUNCATION = 8.0


@dataclass(frozen=True, eq=False)
class GapAmplitudeSet:
    """Nonzero gaps ``deltas`` (ascending) with complex ``amplitudes``.

    ``rows``/``cols`` give the eigenbasis pair behind each entry and are
    ``None`` once entries with equal gaps have been merged.
    """

    deltas: np.ndarray
    amplitudes: np.ndarray
    zero_threshold: float
    steady_state: float
    initial_deviation: float
    expectation0: float
    rows: np.ndarray | None = None
    cols: np.ndarray | None = None
    steady_state_imag: float = 0.0

    def __len__(self):
        return self.deltas.shape[0]

    @property
    def total(self) -> complex:
        return complex(np.sum(self.amplitudes))

    @property
    def coalesced(self) -> bool:
        return self.rows is None


def gap_amplitudes(
    es: EigenSystem, A_eig: np.ndarray, c: np.ndarray, zero_threshold: float = ZERO_GAP
) -> GapAmplitudeSet:
    """Collect all ``(E_i - E_j, A_ij c_j conj(c_i))`` with a nonzero gap.

    ``A_eig`` and ``c`` must already be expressed in the eigenbasis of ``es``.
    """
    d = es.dim
    A_eig = np.asarray(A_eig)
    c = np.asarray(c, dtype=complex)
    if A_eig.shape != (d, d) or c.shape != (d,):
        raise ValidationError(
            f"operator {A_eig.shape} / state {c.shape} do not match eigensystem dimension {d}"
        )
    norm = np.linalg.norm(c)
    if abs(norm - 1.0) > 1e-10:
        raise ValidationError(f"state must be normalized, |c| = {norm:.15g}")
    if d * d > MAX_ENTRIES:
        raise ValidationError(f"{d * d} gap pairs exceed the storage cap of {MAX_ENTRIES}")

    E = es.energies
    gaps = E[:, None] - E[None, :]
    weights = A_eig * np.outer(c.conj(), c)
    degenerate = np.abs(gaps) <= zero_threshold
    steady = np.sum(weights[degenerate])
    expectation = np.sum(weights)

    keep = ~degenerate
    keep &= weights != 0
    del degenerate
    flat = np.flatnonzero(keep)
    del keep
    g = gaps.ravel()[flat]
    del gaps
    order = np.argsort(g, kind="stable")
    flat = flat[order]
    deltas = g[order]
    amplitudes = weights.ravel()[flat]
    del weights
    rows, cols = np.divmod(flat, d)
    return GapAmplitudeSet(
        deltas=deltas,
        amplitudes=amplitudes,
        zero_threshold=float(zero_threshold),
        steady_state=float(steady.real),
        initial_deviation=float(expectation.real - steady.real),
        expectation0=float(expectation.real),
        rows=rows.astype(np.int32),
        cols=cols.astype(np.int32),
        steady_state_imag=float(steady.imag),
    )


def coalesce(gs: GapAmplitudeSet, tol: float = ZERO_GAP) -> GapAmplitudeSet:
    """Merge runs of entries whose consecutive gaps differ by at most ``tol``."""
    if len(gs) == 0:
        return gs
    starts = np.concatenate(([0], np.flatnonzero(np.diff(gs.deltas) > tol) + 1))
    counts = np.diff(np.append(starts, len(gs)))
    deltas = np.add.reduceat(gs.deltas, starts) / counts
    amplitudes = np.add.reduceat(gs.amplitudes, starts)
    return GapAmplitudeSet(
        deltas=deltas,
        amplitudes=amplitudes,
        zero_threshold=gs.zero_threshold,
        steady_state=gs.steady_state,
        initial_deviation=gs.initial_deviation,
        expectation0=gs.expectation0,
        steady_state_imag=gs.steady_state_imag,
    )


def deviation_exact(gs: GapAmplitudeSet, times) -> TimeSeries:
    """``Delta A(t) = Re sum z exp(i Delta t)``, with ``|Im|`` kept as a residual."""
    times = as_times(times)
    s = phase_sums(gs.deltas, gs.amplitudes, times)
    return TimeSeries(times, s.real, GAP_SUM, imag_residual=np.abs(s.imag))


@dataclass(frozen=True, eq=False)
class RegularizedDistribution:
    lambda_grid: np.ndarray
    values: np.ndarray
    kernel_std: float
    cutoff_time: float
    signed: bool = True
    total_weight: complex = 0.0

    @property
    def M(self) -> int:
        return self.lambda_grid.shape[0]


def default_kernel_std(T: float) -> float:
    # Fourier damping exp(-(kernel_std t)^2 / 2) == exp(-(t / T)^2).
    return math.sqrt(2.0) / T


def regularize(
    gs: GapAmplitudeSet,
    T: float = DEFAULT_T,
    M: int = DEFAULT_M,
    kernel_std: float | None = None,
    signed: bool = True,
) -> RegularizedDistribution:
    """Sample ``z_T(l) = sum z N(l; Delta, kernel_std)`` on ``M`` equally spaced points.

    The signed grid spans ``[-max|Delta|, max|Delta|]``; otherwise the grid runs
    between the smallest and largest positive gap.  Kernels are cut at
    ``KERNEL_TRUNCATION`` standard deviations.
    """
    if len(gs) == 0:
        raise ValidationError("cannot regularize an empty gap set")
    if M < 2:
        raise ValidationError("the lambda grid needs at least two points")
    if not T > 0:
        raise ValidationError("cutoff time T must be positive")
    sigma = default_kernel_std(T) if kernel_std is None else float(kernel_std)
    if not sigma > 0:
        raise ValidationError("kernel_std must be positive")

    deltas = gs.deltas
    z = gs.amplitudes
    dmax = float(np.max(np.abs(deltas)))
    if signed:
        grid = np.linspace(-dmax, dmax, M)
        total = complex(np.sum(z))
    else:
        positive = deltas > 0
        dmin = float(np.min(deltas[positive]))
        grid = np.linspace(dmin, dmax, M) if dmax > dmin else np.linspace(dmin - sigma, dmax + sigma, M)
        total = complex(np.sum(z[positive]))

    reach = KERNEL_TRUNCATION * sigma
    lo = np.searchsorted(deltas, grid - reach, side="left")
    hi = np.searchsorted(deltas, grid + reach, side="right")
    norm = 1.0 / (sigma * math.sqrt(2.0 * math.pi))
    values = np.zeros(M, dtype=complex)
    for k in range(M):
        a, b = lo[k], hi[k]
        if a == b:
            continue
        u = (grid[k] - deltas[a:b]) / sigma
        values[k] = np.sum(z[a:b] * np.exp(-0.5 * u * u)) * norm
    return RegularizedDistribution(grid, values, sigma, float(T), bool(signed), total)


@dataclass(frozen=True)
class WeightCheck:
    error: float
    relative: bool
    passed: bool
    integral: complex
    total: complex
    tolerance: float = WEIGHT_TOLERANCE


def weight_conservation_check(
    rd: RegularizedDistribution, gs: GapAmplitudeSet | None = None, tolerance: float = WEIGHT_TOLERANCE
) -> WeightCheck:
    """Trapezoidal ``int z_T`` against the summed amplitudes it was built from."""
    integral = complex(np.trapezoid(rd.values, rd.lambda_grid))
    if gs is None:
        total = rd.total_weight
    elif rd.signed:
        total = gs.total
    else:
        total = complex(np.sum(gs.amplitudes[gs.deltas > 0]))
    scale = abs(total)
    if scale == 0.0:
        err = abs(integral)
        return WeightCheck(err, False, False, integral, total, tolerance)
    err = abs(integral - total) / scale
    return WeightCheck(err, True, bool(err <= tolerance), integral, total, tolerance)


def regularized_deviation(
    rd: RegularizedDistribution, times, gs: GapAmplitudeSet | None = None
) -> TimeSeries:
    """Trapezoidal ``int z_T(l) exp(i l t) dl`` on the stored grid.

    With ``gs`` the closed form ``sum z exp(i Delta t) exp(-(kernel_std t)^2 / 2)``
    is attached as ``reference``.
    """
    times = as_times(times)
    if times.size and np.max(np.abs(times)) > rd.cutoff_time / 3:
        warnings.warn(
            f"times beyond T/3 = {rd.cutoff_time / 3:.3g}: the regularized deviation is "
            "damped by the cutoff there",
            stacklevel=2,
        )
    out = np.empty(times.shape[0], dtype=complex)
    block = 128
    for a in range(0, times.shape[0], block):
        t = times[a : a + block]
        phases = np.exp(1j * np.outer(t, rd.lambda_grid))
        out[a : a + block] = np.trapezoid(rd.values[None, :] * phases, rd.lambda_grid, axis=1)
    reference = None
    if gs is not None:
        damp = np.exp(-0.5 * (rd.kernel_std * times) ** 2)
        if rd.signed:
            s = phase_sums(gs.deltas, gs.amplitudes, times)
        else:
            pos = gs.deltas > 0
            s = phase_sums(gs.deltas[pos], gs.amplitudes[pos], times)
        reference = (s * damp).real
    return TimeSeries(
        times,
        out.real,
        REGULARIZED,
        metadata={"cutoff_time": rd.cutoff_time, "kernel_std": rd.kernel_std},
        imag_residual=np.abs(out.imag),
        reference=reference,
    )


@dataclass(frozen=True, eq=False)
class PhaseCloud:
    t: float
    points: np.ndarray

    @property
    def anisotropy(self) -> float:
        """``|sum p| / sum |p|``: 1 for aligned points, near 0 for an isotropic cloud."""
        denom = float(np.sum(np.abs(self.points)))
        return abs(complex(np.sum(self.points))) / denom if denom else 0.0


def phase_cloud_snapshot(rd: RegularizedDistribution, t: float) -> PhaseCloud:
    return PhaseCloud(float(t), rd.values * np.exp(1j * rd.lambda_grid * float(t)))


@dataclass(frozen=True)
class PeakShare:
    share: float
    peaks: np.ndarray
    basins: tuple[tuple[int, int], ...]
    total: float


def dominant_peak_share(rd: RegularizedDistribution, n_peaks: int = 2) -> PeakShare:
    """Fraction of ``int |z_T|`` carried by the ``n_peaks`` highest local maxima of ``|z_T|``.

    Each maximum owns the basin between the nearest local minima on either
    side (or the grid ends); basins are integrated with the trapezoid rule.
    """
    mod = np.abs(rd.values)
    x = rd.lambda_grid
    total = float(np.trapezoid(mod, x))
    if total == 0.0:
        return PeakShare(0.0, np.array([], dtype=int), (), 0.0)
    rising = mod[1:] > mod[:-1]
    # A plateau belongs to the maximum at its left end.
    maxima = np.flatnonzero(np.r_[True, rising] & np.r_[~rising, True])
    minima = np.flatnonzero(np.r_[True, ~rising] & np.r_[rising, True])
    minima = np.union1d(minima, [0, mod.size - 1])
    top = maxima[np.argsort(-mod[maxima], kind="stable")[:n_peaks]]
    basins = []
    weight = 0.0
    for k in top:
        lo = int(minima[minima <= k].max())
        hi = int(minima[minima >= k].min())
        basins.append((lo, hi))
        weight += float(np.trapezoid(mod[lo : hi + 1], x[lo : hi + 1]))
    return PeakShare(weight / total, np.sort(top), tuple(basins), total)
