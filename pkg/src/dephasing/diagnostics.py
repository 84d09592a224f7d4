"""Empirical checks of spectral, observable and state properties.

None of these assert the unknown constants of the corresponding rigorous
bounds; decay statements are probed by linear fits of log-quantities with an
``R^2`` quality figure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import product as iproduct

import numpy as np
from scipy.special import ndtr

from .errors import ValidationError
from .model import PAULI, HamiltonianSpec, StatePrep, compile_hamiltonian, prepare_state, product_vector, site_states
from .spectral import ZERO_GAP, EigenSystem


def _degenerate_groups(energies: np.ndarray, tol: float) -> np.ndarray:
    """Start indices of runs of ascending energies closer than ``tol``."""
    return np.concatenate(([0], np.flatnonzero(np.diff(energies) > tol) + 1))


def level_populations(es: EigenSystem, c: np.ndarray, tol: float = ZERO_GAP) -> np.ndarray:
    """Populations ``|c_i|^2`` summed within degenerate levels."""
    p = np.abs(np.asarray(c)) ** 2
    return np.add.reduceat(p, _degenerate_groups(es.energies, tol))


def effective_dimension(es: EigenSystem, c: np.ndarray, tol: float = ZERO_GAP) -> float:
    """Inverse participation ratio ``1 / sum_k P_k^2`` of the energy-level populations."""
    c = np.asarray(c)
    if abs(np.linalg.norm(c) - 1.0) > 1e-10:
        raise ValidationError("state must be normalized")
    P = level_populations(es, c, tol)
    return float(1.0 / np.sum(P * P))


def linear_fit(x, y) -> tuple[float, float, float]:
    """Least-squares ``y = slope * x + intercept``; returns ``(slope, intercept, R^2)``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape[0] < 2:
        return float("nan"), float("nan"), float("nan")
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else float("nan")
    return float(slope), float(intercept), r2


@dataclass(frozen=True)
class EnergyMoments:
    mu: float
    sigma: float
    s: float
    method: str

    @property
    def variance(self) -> float:
        return self.sigma**2


def energy_moments_dense(spec: HamiltonianSpec, psi: np.ndarray) -> EnergyMoments:
    H = compile_hamiltonian(spec)
    psi = np.asarray(psi, dtype=complex)
    Hpsi = H @ psi
    mu = float(np.vdot(psi, Hpsi).real)
    var = float(np.vdot(Hpsi, Hpsi).real) - mu * mu
    sigma = math.sqrt(max(var, 0.0))
    return EnergyMoments(mu, sigma, sigma / math.sqrt(spec.L), "dense")


def energy_moments_local(spec: HamiltonianSpec, site_vectors) -> EnergyMoments:
    """Moments of a product state from term expectations and overlapping-term covariances.

    Terms with disjoint supports are uncorrelated in a product state, so only
    pairs sharing a site enter the variance.
    """
    states = [np.asarray(v, dtype=complex) / np.linalg.norm(v) for v in site_vectors]
    if len(states) != spec.L:
        raise ValidationError(f"need {spec.L} single-site states, got {len(states)}")
    # <phi| P |phi> and <phi| P Q |phi> per site.
    one = [{a: np.vdot(v, PAULI[a] @ v) for a in "IXYZ"} for v in states]
    two = [
        {(a, b): np.vdot(v, PAULI[a] @ PAULI[b] @ v) for a, b in iproduct("IXYZ", repeat=2)}
        for v in states
    ]
    means = []
    for term in spec.terms:
        m = term.coefficient
        for s, a in term.factors:
            m *= one[s][a]
        means.append(m)
    mu = float(np.sum(means).real)

    by_site: dict[int, list[int]] = {}
    for k, term in enumerate(spec.terms):
        for s in term.sites:
            by_site.setdefault(s, []).append(k)
    var = 0.0 + 0.0j
    for k, tk in enumerate(spec.terms):
        partners = sorted({q for s in tk.sites for q in by_site[s]})
        for q in partners:
            tq = spec.terms[q]
            joint = tk.coefficient * tq.coefficient
            for s in sorted(set(tk.sites) | set(tq.sites)):
                joint *= two[s][(tk.axis_at(s), tq.axis_at(s))]
            var += joint - means[k] * means[q]
    sigma = math.sqrt(max(var.real, 0.0))
    return EnergyMoments(mu, sigma, sigma / math.sqrt(spec.L), "local")


def energy_moments(spec: HamiltonianSpec, state, method: str = "dense") -> EnergyMoments:
    """Energy mean and spread of ``state``.

    ``state`` is a ``StatePrep``, a list of single-site vectors, or (dense
    method only) a full state vector.
    """
    if method == "local":
        if isinstance(state, StatePrep):
            return energy_moments_local(spec, site_states(state, spec.L))
        if isinstance(state, np.ndarray) and state.ndim == 1 and state.shape[0] == 2**spec.L:
            raise ValidationError("local method needs a product state given site by site")
        return energy_moments_local(spec, state)
    if method != "dense":
        raise ValidationError(f"unknown method {method!r}")
    if isinstance(state, StatePrep):
        psi = prepare_state(state, spec.L)
    elif isinstance(state, np.ndarray) and state.ndim == 1:
        psi = state
    else:
        psi = product_vector([np.asarray(v, dtype=complex) / np.linalg.norm(v) for v in state])
    return energy_moments_dense(spec, psi)


def spectral_cdf_distance(
    es: EigenSystem, weights=None, mu: float | None = None, sigma: float | None = None
) -> float:
    """``sup_y |F(y) - G(y)|`` between the weighted spectral CDF and a Gaussian CDF.

    ``weights=None`` uses uniform weights (density of states).  Mean and
    standard deviation default to those of the weighted spectrum; both sides of
    every step of ``F`` are compared.
    """
    E = es.energies
    w = np.full(E.shape[0], 1.0 / E.shape[0]) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != E.shape or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-10:
        raise ValidationError("weights must be non-negative, one per level, and sum to 1")
    if mu is None:
        mu = float(np.sum(w * E))
    if sigma is None:
        sigma = math.sqrt(max(float(np.sum(w * (E - mu) ** 2)), 0.0))
    if not sigma > 0:
        raise ValidationError("weighted spectrum has zero width; Gaussian comparison undefined")
    starts = _degenerate_groups(E, 0.0)
    levels = E[starts]
    mass = np.add.reduceat(w, starts)
    F_right = np.cumsum(mass)
    F_left = F_right - mass
    G = ndtr((levels - mu) / sigma)
    return float(max(np.max(np.abs(F_right - G)), np.max(np.abs(F_left - G))))


@dataclass
class BandNormProfile:
    epsilon: float
    epsilon_prime: np.ndarray
    norms: np.ndarray
    R: float
    decay_rate: float = float("nan")
    offset: float = float("nan")
    r_squared: float = float("nan")
    fit_points: int = 0
    fit_window: tuple[float, float] = (1e-12, 1e-2)


def observable_band_norms(
    es: EigenSystem,
    A_eig: np.ndarray,
    epsilon: float,
    epsilon_prime,
    R: float = 0.0,
    fit_window: tuple[float, float] = (1e-12, 1e-2),
) -> BandNormProfile:
    """Spectral norms of the block of ``A`` from energies ``<= epsilon`` to ``>= epsilon'``.

    The log-norms inside ``fit_window`` are fitted linearly against
    ``epsilon' - epsilon - 2R``; ``decay_rate`` is minus the fitted slope.
    """
    E = es.energies
    eps_p = np.asarray(epsilon_prime, dtype=float)
    if eps_p.size == 0 or epsilon >= eps_p.min():
        raise ValidationError("every epsilon' must exceed epsilon")
    cols = np.flatnonzero(E <= epsilon)
    if cols.size == 0:
        raise ValidationError(f"no levels at or below epsilon={epsilon}")
    norms = np.empty(eps_p.shape[0])
    sub = np.asarray(A_eig)[:, cols]
    for k, ep in enumerate(eps_p):
        rows = np.flatnonzero(E >= ep)
        if rows.size == 0:
            raise ValidationError(f"no levels at or above epsilon'={ep}")
        norms[k] = np.linalg.norm(sub[rows], 2)
    profile = BandNormProfile(float(epsilon), eps_p, norms, float(R), fit_window=fit_window)
    lo, hi = fit_window
    sel = (norms >= lo) & (norms <= hi)
    if sel.sum() >= 2:
        slope, intercept, r2 = linear_fit(eps_p[sel] - epsilon - 2 * R, np.log(norms[sel]))
        profile.decay_rate, profile.offset, profile.r_squared = -slope, intercept, r2
        profile.fit_points = int(sel.sum())
    return profile


@dataclass
class TailWeights:
    a: np.ndarray
    upper: np.ndarray
    lower: np.ndarray
    bulk: np.ndarray
    mean_energy: float
    n: int
    slope: float = float("nan")
    intercept: float = float("nan")
    r_squared: float = float("nan")
    fit_points: int = 0


def state_tail_weights(
    es: EigenSystem, c: np.ndarray, a_grid, n: int | None = None, floor: float = 1e-14
) -> TailWeights:
    """Population above ``<H> + n a`` and below ``<H> - n a`` for each ``a``.

    ``n`` defaults to the number of sites.  ``log(upper)`` is fitted against
    ``n a^2`` over weights above ``floor``.
    """
    c = np.asarray(c)
    if abs(np.linalg.norm(c) - 1.0) > 1e-10:
        raise ValidationError("state must be normalized")
    a = np.asarray(a_grid, dtype=float)
    if np.any(a <= 0):
        raise ValidationError("a values must be positive")
    n = es.L if n is None else int(n)
    E = es.energies
    p = np.abs(c) ** 2
    mu = float(np.sum(p * E))
    order = np.argsort(E, kind="stable")
    Es, ps = E[order], p[order]
    cum = np.concatenate(([0.0], np.cumsum(ps)))
    total = cum[-1]
    up_idx = np.searchsorted(Es, mu + n * a, side="left")
    lo_idx = np.searchsorted(Es, mu - n * a, side="right")
    upper = total - cum[up_idx]
    lower = cum[lo_idx]
    upper = np.maximum(upper, 0.0)
    bulk = total - upper - lower
    tw = TailWeights(a, upper, lower, bulk, mu, n)
    sel = upper > floor
    if sel.sum() >= 2:
        tw.slope, tw.intercept, tw.r_squared = linear_fit(n * a[sel] ** 2, np.log(upper[sel]))
        tw.fit_points = int(sel.sum())
    return tw


@dataclass
class EthStatistics:
    energy_edges: np.ndarray
    omega_edges: np.ndarray
    diag_count: np.ndarray
    diag_mean: np.ndarray
    diag_var: np.ndarray
    offdiag_count: np.ndarray
    offdiag_mean: np.ndarray
    offdiag_mean_sq: np.ndarray
    extras: dict = field(default_factory=dict)

    @property
    def energy_centers(self) -> np.ndarray:
        return 0.5 * (self.energy_edges[1:] + self.energy_edges[:-1])

    @property
    def omega_centers(self) -> np.ndarray:
        return 0.5 * (self.omega_edges[1:] + self.omega_edges[:-1])

    def diag_standard_error(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.sqrt(self.diag_var / self.diag_count)


def eth_band_statistics(es: EigenSystem, A_eig: np.ndarray, energy_bins: int, omega_bins: int) -> EthStatistics:
    """Binned diagonal and off-diagonal matrix-element statistics.

    Diagonal elements are binned by energy; off-diagonal ones by mean energy
    ``(E_i + E_j)/2`` and gap ``E_i - E_j``.  Empty bins hold ``nan``.
    """
    if energy_bins < 2 or omega_bins < 2:
        raise ValidationError("need at least two bins per axis")
    E = es.energies
    A = np.asarray(A_eig)
    d = E.shape[0]
    e_edges = np.linspace(E[0], E[-1], energy_bins + 1)
    span = E[-1] - E[0]
    w_edges = np.linspace(-span, span, omega_bins + 1)

    def bin_of(x, edges):
        return np.clip(np.searchsorted(edges, x, side="right") - 1, 0, len(edges) - 2)

    diag = np.real(np.diagonal(A))
    eb = bin_of(E, e_edges)
    dc = np.bincount(eb, minlength=energy_bins).astype(float)
    with np.errstate(invalid="ignore", divide="ignore"):
        dmean = np.bincount(eb, weights=diag, minlength=energy_bins) / dc
        dsq = np.bincount(eb, weights=diag * diag, minlength=energy_bins) / dc
        dvar = np.maximum(dsq - dmean**2, 0.0) * dc / np.maximum(dc - 1, 1)
    dvar[dc < 2] = np.nan

    oc = np.zeros(energy_bins * omega_bins)
    osum = np.zeros_like(oc)
    osq = np.zeros_like(oc)
    block = max(1, (1 << 22) // d)
    for a in range(0, d, block):
        rows = np.arange(a, min(a + block, d))
        Ebar = 0.5 * (E[rows, None] + E[None, :])
        omega = E[rows, None] - E[None, :]
        off = rows[:, None] != np.arange(d)[None, :]
        idx = bin_of(Ebar[off], e_edges) * omega_bins + bin_of(omega[off], w_edges)
        vals = A[rows][off]
        oc += np.bincount(idx, minlength=oc.size)
        osum += np.bincount(idx, weights=np.real(vals), minlength=oc.size)
        osq += np.bincount(idx, weights=np.abs(vals) ** 2, minlength=oc.size)
    oc = oc.reshape(energy_bins, omega_bins)
    with np.errstate(invalid="ignore", divide="ignore"):
        omean = osum.reshape(oc.shape) / oc
        omsq = osq.reshape(oc.shape) / oc
    return EthStatistics(e_edges, w_edges, dc, dmean, dvar, oc, omean, omsq)


def diagonal_smoothness(stats: EthStatistics, central_fraction: float = 0.5) -> float:
    """Largest adjacent-bin jump of the diagonal mean over the central bins, in units of
    the larger of the two bins' standard errors."""
    n = stats.diag_mean.shape[0]
    lo = int(round(n * (0.5 - central_fraction / 2)))
    hi = int(round(n * (0.5 + central_fraction / 2)))
    m = stats.diag_mean[lo:hi]
    se = stats.diag_standard_error()[lo:hi]
    jumps = np.abs(np.diff(m))
    scale = np.maximum(se[1:], se[:-1])
    ok = np.isfinite(jumps) & np.isfinite(scale) & (scale > 0)
    return float(np.max(jumps[ok] / scale[ok])) if ok.any() else float("nan")


BAND_EPS_FRACTION = 0.1
BAND_SPAN = (0.003, 0.68)
BAND_POINTS = 120
TAIL_A_RANGE = (0.05, 3.0)
TAIL_POINTS = 60
ETH_ENERGY_BINS = 64
ETH_OMEGA_BINS = 16


def default_band_grid(es: EigenSystem) -> tuple[float, np.ndarray]:
    """``epsilon`` at a tenth of the bandwidth and ``epsilon'`` spanning most of the rest."""
    width = float(es.energies[-1] - es.energies[0])
    eps = es.energies[0] + BAND_EPS_FRACTION * width
    return eps, eps + width * np.linspace(*BAND_SPAN, BAND_POINTS)


def default_tail_grid(spec: HamiltonianSpec) -> np.ndarray:
    """``a`` values in units of the largest term norm."""
    scale = spec.max_term_norm if spec.max_term_norm > 0 else 1.0
    return scale * np.linspace(*TAIL_A_RANGE, TAIL_POINTS)
