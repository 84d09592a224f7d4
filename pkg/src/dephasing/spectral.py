"""Dense eigendecomposition with the ground state shifted to zero energy."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import NumericalError, ValidationError

#: Absolute cutoff below which two energies (or a gap) count as equal.
ZERO_GAP = 1e-13


@dataclass(frozen=True, eq=False)
class EigenSystem:
    """Ascending ``energies`` with ``energies[0] == 0`` and eigenvector columns ``transform``.

    The original spectrum is ``energies + shift``.
    """

    energies: np.ndarray
    transform: np.ndarray
    shift: float
    L: int

    def __post_init__(self):
        for arr in (self.energies, self.transform):
            arr.flags.writeable = False

    @property
    def dim(self) -> int:
        return self.energies.shape[0]


def _chain_length(dim: int) -> int:
    L = int(dim).bit_length() - 1
    if 1 << L != dim:
        raise ValidationError(f"dimension {dim} is not a power of two")
    return L


def diagonalize(H: np.ndarray, hermiticity_tol: float = 1e-10) -> EigenSystem:
    H = np.asarray(H)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ValidationError(f"expected a square matrix, got shape {H.shape}")
    L = _chain_length(H.shape[0])
    residual = np.max(np.abs(H - H.conj().T)) if H.size else 0.0
    if residual > hermiticity_tol:
        raise ValidationError(f"matrix is not Hermitian (max |H - H^dag| = {residual:.3e})")
    try:
        w, v = scipy.linalg.eigh(H, driver="evd")
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericalError(f"eigensolver failed: {exc}") from exc
    shift = float(w[0])
    energies = w - shift
    energies[0] = 0.0
    return EigenSystem(energies, v, shift, L)


def rotate_to_eigenbasis(es: EigenSystem, x: np.ndarray) -> np.ndarray:
    """``U^dag x U`` for operators, ``U^dag x`` for vectors."""
    x = np.asarray(x)
    U = es.transform
    if x.shape[0] != es.dim or (x.ndim == 2 and x.shape != (es.dim, es.dim)) or x.ndim > 2:
        raise ValidationError(f"shape {x.shape} does not match eigensystem dimension {es.dim}")
    Ud = U.conj().T
    if x.ndim == 1:
        return Ud @ x
    return Ud @ x @ U


def extreme_gaps(es: EigenSystem, zero_threshold: float = ZERO_GAP) -> tuple[float, float]:
    """Smallest and largest positive gap ``E_i - E_j`` exceeding ``zero_threshold``."""
    E = es.energies
    dmax = float(E[-1] - E[0])
    if dmax <= zero_threshold:
        raise ValidationError("spectrum has a single energy level; no nonzero gaps")
    # For each level the smallest admissible gap is to the first level beyond E + threshold.
    nxt = np.searchsorted(E, E + zero_threshold, side="right")
    ok = nxt < E.shape[0]
    dmin = float(np.min(E[nxt[ok]] - E[ok]))
    return dmin, dmax
