"""Deterministic evaluation of ``S(t) = sum_k w_k exp(i d_k t)`` on many times.

On uniform time grids the phases are advanced by a fixed rotation and
re-anchored with exact exponentials every ``anchor`` steps, which keeps the
accumulated rounding error near ``anchor * eps``.  Reductions use numpy's
pairwise summation in a fixed order, so results do not depend on thread count.
"""

from __future__ import annotations

from typing import Iterator

import numpy as np

CHUNK = 1 << 21
ANCHOR = 64


def _is_uniform(times: np.ndarray) -> bool:
    if times.shape[0] < 3:
        return False
    d = np.diff(times)
    return bool(np.all(np.abs(d - d[0]) <= 1e-12 * max(1.0, abs(d[0]))))


def iter_phase_sums(
    freqs: np.ndarray, weights: np.ndarray, times: np.ndarray, anchor: int = ANCHOR
) -> Iterator[tuple[slice, np.ndarray]]:
    """Yield ``(time_slice, sums)`` blocks in time order; callers may stop early."""
    freqs = np.asarray(freqs, dtype=float)
    weights = np.asarray(weights, dtype=complex)
    times = np.asarray(times, dtype=float)
    nt = times.shape[0]
    n = freqs.shape[0]
    chunks = [slice(a, min(a + CHUNK, n)) for a in range(0, n, CHUNK)] or [slice(0, 0)]
    uniform = _is_uniform(times)
    h = times[1] - times[0] if uniform else 0.0
    rot = [np.exp(1j * h * freqs[c]) for c in chunks] if uniform else None
    for start in range(0, nt, anchor):
        stop = min(start + anchor, nt)
        out = np.zeros(stop - start, dtype=complex)
        for ci, c in enumerate(chunks):
            f = freqs[c]
            w = weights[c]
            if uniform:
                p = np.exp(1j * times[start] * f)
                for k in range(stop - start):
                    if k:
                        p *= rot[ci]
                    out[k] += np.sum(w * p)
            else:
                for k in range(stop - start):
                    out[k] += np.sum(w * np.exp(1j * times[start + k] * f))
        yield slice(start, stop), out


def phase_sums(freqs: np.ndarray, weights: np.ndarray, times: np.ndarray) -> np.ndarray:
    times = np.asarray(times, dtype=float)
    out = np.empty(times.shape[0], dtype=complex)
    for sl, block in iter_phase_sums(freqs, weights, times):
        out[sl] = block
    return out
