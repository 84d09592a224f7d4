"""Spin-chain Hamiltonians, product states and local observables as Pauli strings.

Basis convention: site 0 is the leftmost tensor factor, ``|0>`` is spin up
(sigma^z eigenvalue +1) and ``|1>`` is spin down, so the computational basis
index of a configuration is ``sum_s bit_s * 2**(L-1-s)``.  Boundaries are open.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import ValidationError

AXES = ("X", "Y", "Z")
DEFAULT_MAX_SITES = 14

PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


@dataclass(frozen=True)
class PauliTerm:
    """``coefficient * prod_s sigma^{axis_s}_{site_s}``."""

    coefficient: float
    factors: tuple[tuple[int, str], ...]

    def __post_init__(self):
        factors = tuple((int(s), str(a).upper()) for s, a in self.factors)
        object.__setattr__(self, "factors", factors)
        object.__setattr__(self, "coefficient", float(self.coefficient))
        if not math.isfinite(self.coefficient):
            raise ValidationError(f"non-finite coefficient {self.coefficient!r}")
        if not factors:
            raise ValidationError("a Pauli term needs at least one factor")
        sites = [s for s, _ in factors]
        if sites[0] < 0 or any(b <= a for a, b in zip(sites, sites[1:])):
            raise ValidationError(f"sites must be non-negative and strictly increasing: {sites}")
        for _, axis in factors:
            if axis not in AXES:
                raise ValidationError(f"unknown Pauli axis {axis!r}")

    @property
    def sites(self) -> tuple[int, ...]:
        return tuple(s for s, _ in self.factors)

    @property
    def leftmost(self) -> int:
        return self.factors[0][0]

    @property
    def label(self) -> str:
        return "".join(f"{a}{s}" for s, a in self.factors)

    def axis_at(self, site: int) -> str:
        for s, a in self.factors:
            if s == site:
                return a
        return "I"

    def commutes_with(self, other: PauliTerm) -> bool:
        # Pauli strings anticommute iff they differ on an odd number of shared sites.
        clashes = 0
        for s, a in self.factors:
            b = other.axis_at(s)
            if b != "I" and b != a:
                clashes += 1
        return clashes % 2 == 0


@dataclass(frozen=True)
class HamiltonianSpec:
    L: int
    terms: tuple[PauliTerm, ...]
    name: str = "custom"
    params: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        if int(self.L) < 1:
            raise ValidationError(f"chain length must be positive, got {self.L}")
        if not self.terms:
            raise ValidationError("a Hamiltonian needs at least one term")
        for term in self.terms:
            if term.sites[-1] >= self.L:
                raise ValidationError(f"term {term.label} does not fit on {self.L} sites")

    @property
    def n_terms(self) -> int:
        return len(self.terms)

    @property
    def max_term_norm(self) -> float:
        return max(abs(t.coefficient) for t in self.terms)


_PRESET_PARAMS = {
    "XX": (),
    "ISING": ("J", "h_x", "h_z"),
    "XXZ_NNN": ("J", "U", "J_nnn"),
}
_PRESET_MIN_L = {"XX": 2, "ISING": 2, "XXZ_NNN": 3}


def preset_model(name: str, params: Mapping[str, float] | None, L: int) -> HamiltonianSpec:
    """Build one of the three open-boundary chains used in the numerics.

    ``XX``: sum_i X_i X_{i+1} + Y_i Y_{i+1}.
    ``ISING``: sum_i J X_i X_{i+1} + h_x X_i + h_z Z_i.
    ``XXZ_NNN``: sum_i J (X_i X_{i+1} + Y_i Y_{i+1}) + U Z_i Z_{i+1}
    + J_nnn (X_i Z_{i+1} X_{i+2} + Y_i Z_{i+1} Y_{i+2}).

    Terms are ordered by leftmost site, then by their position in the sums above.
    Zero coefficients are kept so that term counts depend on ``L`` only.
    """
    key = str(name).upper()
    if key not in _PRESET_PARAMS:
        raise ValidationError(f"unknown preset {name!r}; expected one of {sorted(_PRESET_PARAMS)}")
    params = dict(params or {})
    expected = set(_PRESET_PARAMS[key])
    missing = expected - set(params)
    extra = set(params) - expected
    if missing or extra:
        raise ValidationError(
            f"preset {key} takes parameters {sorted(expected)}; "
            f"missing {sorted(missing)}, unexpected {sorted(extra)}"
        )
    params = {k: float(v) for k, v in params.items()}
    L = int(L)
    if L < _PRESET_MIN_L[key]:
        raise ValidationError(f"preset {key} needs L >= {_PRESET_MIN_L[key]}, got {L}")

    keyed: list[tuple[int, int, PauliTerm]] = []

    def add(kind: int, coefficient: float, *factors: tuple[int, str]):
        keyed.append((factors[0][0], kind, PauliTerm(coefficient, factors)))

    for i in range(L):
        if key == "XX":
            if i + 1 < L:
                add(0, 1.0, (i, "X"), (i + 1, "X"))
                add(1, 1.0, (i, "Y"), (i + 1, "Y"))
        elif key == "ISING":
            if i + 1 < L:
                add(0, params["J"], (i, "X"), (i + 1, "X"))
            add(1, params["h_x"], (i, "X"))
            add(2, params["h_z"], (i, "Z"))
        else:
            if i + 1 < L:
                add(0, params["J"], (i, "X"), (i + 1, "X"))
                add(1, params["J"], (i, "Y"), (i + 1, "Y"))
                add(2, params["U"], (i, "Z"), (i + 1, "Z"))
            if i + 2 < L:
                add(3, params["J_nnn"], (i, "X"), (i + 1, "Z"), (i + 2, "X"))
                add(4, params["J_nnn"], (i, "Y"), (i + 1, "Z"), (i + 2, "Y"))
    keyed.sort(key=lambda k: (k[0], k[1]))
    return HamiltonianSpec(L, tuple(t for _, _, t in keyed), name=key, params=params)


def _check_size(L: int, max_sites: int):
    if L > max_sites:
        raise ValidationError(
            f"L={L} exceeds the dense-matrix guard of {max_sites} sites "
            f"(a dense operator would need {16 * 4**L / 2**30:.1f} GiB)"
        )


def _accumulate(terms: Sequence[PauliTerm], L: int) -> np.ndarray:
    """Sum Pauli strings into a dense matrix using their monomial structure."""
    dim = 1 << L
    cols = np.arange(dim, dtype=np.int64)
    re = np.zeros((dim, dim))
    im = None
    for term in terms:
        xmask = 0
        zmask = 0
        n_y = 0
        for site, axis in term.factors:
            bit = 1 << (L - 1 - site)
            if axis in ("X", "Y"):
                xmask |= bit
            if axis in ("Z", "Y"):
                zmask |= bit
            n_y += axis == "Y"
        # P|b> = i^{n_y} (-1)^{popcount(b & zmask)} |b ^ xmask>
        sign = 1.0 - 2.0 * (np.bitwise_count(cols & zmask) & 1)
        unit = 1j**n_y
        rows = cols ^ xmask
        if n_y % 2 == 0:
            re[rows, cols] += term.coefficient * unit.real * sign
        else:
            if im is None:
                im = np.zeros((dim, dim))
            im[rows, cols] += term.coefficient * unit.imag * sign
    if im is None or not im.any():
        return re
    return re + 1j * im


def compile_hamiltonian(spec: HamiltonianSpec, max_sites: int = DEFAULT_MAX_SITES) -> np.ndarray:
    """Dense ``2**L x 2**L`` matrix of ``spec``; real dtype whenever it is real."""
    _check_size(spec.L, max_sites)
    return _accumulate(spec.terms, spec.L)


@dataclass(frozen=True)
class ObservableSpec:
    """A unit-norm Pauli string observable (one axis on one site by default)."""

    factors: tuple[tuple[int, str], ...] = ((0, "Z"),)

    @classmethod
    def single(cls, site: int, axis: str = "Z") -> ObservableSpec:
        return cls(((int(site), str(axis).upper()),))

    @property
    def term(self) -> PauliTerm:
        return PauliTerm(1.0, self.factors)

    @property
    def label(self) -> str:
        return self.term.label


def compile_observable(obs: ObservableSpec, L: int, max_sites: int = DEFAULT_MAX_SITES) -> np.ndarray:
    _check_size(L, max_sites)
    if obs.term.sites[-1] >= L:
        raise ValidationError(f"observable {obs.label} lies outside a chain of {L} sites")
    return _accumulate([obs.term], L)


def support_radius(ham: HamiltonianSpec, obs: ObservableSpec) -> float:
    """Sum of ``|coefficient|`` over terms that overlap ``obs`` and fail to commute with it."""
    a = obs.term
    if a.sites[-1] >= ham.L:
        raise ValidationError(f"observable {a.label} lies outside a chain of {ham.L} sites")
    support = set(a.sites)
    return float(
        sum(
            abs(t.coefficient)
            for t in ham.terms
            if support.intersection(t.sites) and not t.commutes_with(a)
        )
    )


STATE_KINDS = ("CDW", "ALL_UP", "RANDOM_PRODUCT_CENTER_UP", "EXPLICIT_PRODUCT")


@dataclass(frozen=True)
class StatePrep:
    """Product initial state.

    ``seed`` is only used by ``RANDOM_PRODUCT_CENTER_UP``; ``amplitudes`` holds
    one ``(up, down)`` pair per site for ``EXPLICIT_PRODUCT``.
    """

    kind: str = "ALL_UP"
    seed: int = 0
    amplitudes: tuple[tuple[complex, complex], ...] | None = None

    def __post_init__(self):
        kind = str(self.kind).upper()
        object.__setattr__(self, "kind", kind)
        if kind not in STATE_KINDS:
            raise ValidationError(f"unknown state kind {self.kind!r}; expected one of {STATE_KINDS}")
        if int(self.seed) < 0:
            raise ValidationError("seed must be a non-negative integer")
        if kind == "EXPLICIT_PRODUCT" and self.amplitudes is None:
            raise ValidationError("EXPLICIT_PRODUCT needs per-site amplitudes")


def center_site(L: int) -> int:
    return L // 2


def site_states(prep: StatePrep, L: int) -> list[np.ndarray]:
    """Normalized single-site vectors whose tensor product is the initial state."""
    if L < 1:
        raise ValidationError("L must be at least 1")
    up = np.array([1.0, 0.0], dtype=complex)
    down = np.array([0.0, 1.0], dtype=complex)
    if prep.kind == "ALL_UP":
        return [up.copy() for _ in range(L)]
    if prep.kind == "CDW":
        # |1,0,1,0,...>: site 0 down, alternating.
        return [down.copy() if s % 2 == 0 else up.copy() for s in range(L)]
    if prep.kind == "RANDOM_PRODUCT_CENTER_UP":
        rng = np.random.default_rng(int(prep.seed))
        draws = rng.standard_normal((L, 4))
        states = []
        for s in range(L):
            if s == center_site(L):
                states.append(up.copy())
                continue
            v = np.array([draws[s, 0] + 1j * draws[s, 1], draws[s, 2] + 1j * draws[s, 3]])
            states.append(v / np.linalg.norm(v))
        return states
    amps = prep.amplitudes
    if len(amps) != L:
        raise ValidationError(f"EXPLICIT_PRODUCT has {len(amps)} site states for L={L}")
    states = []
    for s, pair in enumerate(amps):
        v = np.asarray(pair, dtype=complex)
        norm = np.linalg.norm(v) if v.shape == (2,) else 0.0
        if not np.isfinite(norm) or norm == 0.0:
            raise ValidationError(f"site {s} amplitudes {pair!r} cannot be normalized")
        states.append(v / norm)
    return states


def product_vector(states: Sequence[np.ndarray]) -> np.ndarray:
    psi = np.ones(1, dtype=complex)
    for v in states:
        psi = np.kron(psi, v)
    return psi


def prepare_state(prep: StatePrep, L: int, max_sites: int = DEFAULT_MAX_SITES) -> np.ndarray:
    _check_size(L, max_sites)
    psi = product_vector(site_states(prep, L))
    return psi / np.linalg.norm(psi)
