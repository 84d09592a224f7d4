"""Spectral and integrated time evolution, commutator growth and the LR window."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse
from scipy.integrate import solve_ivp

from .errors import IntegratorError, ValidationError
from .series import COMMUTATOR, INTEGRATOR, SPECTRAL, TimeSeries, as_times
from .spectral import EigenSystem, diagonalize, rotate_to_eigenbasis

INTEGRATOR_RTOL = 1e-10
INTEGRATOR_ATOL = 1e-12
RENORM_THRESHOLD = 1e-12
ABORT_DRIFT = 1e-6
ARRIVAL_THRESHOLD = 0.1


def _apply(op: np.ndarray, x: np.ndarray) -> np.ndarray:
    # Avoid promoting a real operator to a complex copy.
    if np.isrealobj(op) and np.iscomplexobj(x):
        return op @ np.ascontiguousarray(x.real) + 1j * (op @ np.ascontiguousarray(x.imag))
    return op @ x


def evolve_spectral(es: EigenSystem, c0: np.ndarray, A_eig: np.ndarray, grid) -> TimeSeries:
    """``<A(t)>`` from ``c_i(t) = exp(-i E_i t) c0_i`` in the eigenbasis."""
    times = as_times(grid)
    c0 = np.asarray(c0, dtype=complex)
    if c0.shape != (es.dim,) or np.shape(A_eig) != (es.dim, es.dim):
        raise ValidationError("state/operator dimensions do not match the eigensystem")
    values = np.empty(times.shape[0])
    block = 256
    for a in range(0, times.shape[0], block):
        t = times[a : a + block]
        C = c0[:, None] * np.exp(-1j * np.outer(es.energies, t))
        AC = _apply(A_eig, C)
        values[a : a + block] = np.sum(C.conj() * AC, axis=0).real
    return TimeSeries(times, values, SPECTRAL)


def evolve_integrator(
    H: np.ndarray,
    psi0: np.ndarray,
    A: np.ndarray,
    grid,
    rtol: float = INTEGRATOR_RTOL,
    atol: float = INTEGRATOR_ATOL,
) -> TimeSeries:
    """Integrate ``d psi/dt = -i H psi`` with DOP853 between consecutive grid times.

    The state is renormalized at a grid time only when its norm has drifted by
    more than ``RENORM_THRESHOLD``; a drift beyond ``ABORT_DRIFT`` aborts.
    Metadata records renormalizations, the worst drift and ``<H>`` per time.
    """
    times = as_times(grid)
    psi = np.asarray(psi0, dtype=complex).copy()
    dim = psi.shape[0]
    if np.shape(H) != (dim, dim) or np.shape(A) != (dim, dim):
        raise ValidationError("H, A and psi0 dimensions differ")
    if abs(np.linalg.norm(psi) - 1.0) > 1e-12:
        raise ValidationError("initial state must be normalized")
    Hs = scipy.sparse.csr_matrix(H)
    As = scipy.sparse.csr_matrix(A)

    def rhs(_t, y):
        return -1j * (Hs @ y)

    def observe(y):
        return float(np.vdot(y, As @ y).real), float(np.vdot(y, Hs @ y).real)

    values = np.empty(times.shape[0])
    energy = np.empty(times.shape[0])
    values[0], energy[0] = observe(psi)
    renormalizations = 0
    max_drift = 0.0
    first_step = None
    for k in range(1, times.shape[0]):
        t0, t1 = times[k - 1], times[k]
        sol = solve_ivp(
            rhs, (t0, t1), psi, method="DOP853", rtol=rtol, atol=atol,
            first_step=first_step if first_step and first_step < t1 - t0 else None,
        )
        if sol.status != 0:
            raise IntegratorError(f"integration failed on [{t0}, {t1}]: {sol.message}")
        if sol.t.shape[0] > 1:
            first_step = float(sol.t[-1] - sol.t[-2])
        psi = sol.y[:, -1]
        drift = abs(np.linalg.norm(psi) - 1.0)
        max_drift = max(max_drift, drift)
        if drift > ABORT_DRIFT:
            raise IntegratorError(f"norm drift {drift:.3e} at t={t1}: integrator misconfigured")
        if drift > RENORM_THRESHOLD:
            psi = psi / np.linalg.norm(psi)
            renormalizations += 1
        values[k], energy[k] = observe(psi)
    return TimeSeries(
        times,
        values,
        INTEGRATOR,
        metadata={
            "renormalizations": renormalizations,
            "max_norm_drift": max_drift,
            "energy": energy,
            "rtol": rtol,
            "atol": atol,
        },
    )


def commutator_profile(H, A: np.ndarray, B: np.ndarray, grid) -> TimeSeries:
    """Spectral norm of ``[A(t), B]`` with ``A`` evolved in the Heisenberg picture.

    ``H`` may be a dense Hamiltonian or an already computed ``EigenSystem``.
    """
    es = H if isinstance(H, EigenSystem) else diagonalize(H)
    if np.shape(A) != (es.dim, es.dim) or np.shape(B) != (es.dim, es.dim):
        raise ValidationError("operator dimensions do not match the Hamiltonian")
    times = as_times(grid)
    Ae = rotate_to_eigenbasis(es, A)
    Be = rotate_to_eigenbasis(es, B)
    E = es.energies
    norms = np.empty(times.shape[0])
    for k, t in enumerate(times):
        ph = np.exp(1j * E * t)
        At = Ae * np.outer(ph, ph.conj())
        C = At @ Be - Be @ At
        # i[A, B] is Hermitian for Hermitian A, B.
        w = np.linalg.eigvalsh(1j * C)
        norms[k] = max(abs(w[0]), abs(w[-1]))
    return TimeSeries(times, norms, COMMUTATOR)


def arrival_time(profile: TimeSeries, threshold: float = ARRIVAL_THRESHOLD) -> float:
    """First grid time at which the commutator norm exceeds ``threshold`` (``nan`` if never)."""
    hit = np.flatnonzero(profile.values > threshold)
    return float(profile.times[hit[0]]) if hit.size else float("nan")


@dataclass(frozen=True)
class LightConeFit:
    separations: np.ndarray
    arrival_times: np.ndarray
    slope: float
    intercept: float
    velocity: float
    threshold: float


def fit_light_cone(profiles: dict[int, TimeSeries], threshold: float = ARRIVAL_THRESHOLD) -> LightConeFit:
    """Linear fit of arrival time against separation; the velocity is the inverse slope."""
    seps = np.array(sorted(profiles), dtype=float)
    arrivals = np.array([arrival_time(profiles[int(s)], threshold) for s in seps])
    ok = np.isfinite(arrivals)
    if ok.sum() < 2:
        raise ValidationError("need at least two separations with a detected arrival")
    slope, intercept = np.polyfit(seps[ok], arrivals[ok], 1)
    velocity = 1.0 / slope if slope > 0 else float("inf")
    return LightConeFit(seps, arrivals, float(slope), float(intercept), float(velocity), threshold)


def lr_time_window(L: int, v_estimate: float) -> float:
    if not v_estimate > 0:
        raise ValidationError(f"Lieb-Robinson velocity must be positive, got {v_estimate}")
    return L / v_estimate
