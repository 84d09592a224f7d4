"""Cached pipeline pieces shared between test modules (eigensolves dominate runtime)."""

from __future__ import annotations

from functools import lru_cache

from dephasing.gaps import gap_amplitudes
from dephasing.model import (
    ObservableSpec,
    StatePrep,
    center_site,
    compile_hamiltonian,
    compile_observable,
    prepare_state,
    preset_model,
)
from dephasing.spectral import diagonalize, rotate_to_eigenbasis

EQ_ISING = (("J", 4.0), ("h_x", 1.0), ("h_z", -2.1))
NEQ_ISING = (("J", 1.0), ("h_x", 0.5), ("h_z", -1.05))
XXZ = (("J", 1.0), ("U", 2.0), ("J_nnn", 0.2))

# Reference pairings of model, state and observable site (None = center).
SETUPS = {
    "ising_eq": ("ISING", EQ_ISING, ("RANDOM_PRODUCT_CENTER_UP", 0), None),
    "ising_neq": ("ISING", NEQ_ISING, ("ALL_UP", 0), None),
    "xx": ("XX", (), ("CDW", 0), 0),
    "xxz": ("XXZ_NNN", XXZ, ("CDW", 0), 0),
}


@lru_cache(maxsize=None)
def spec(name, params, L):
    return preset_model(name, dict(params), L)


@lru_cache(maxsize=None)
def eigensystem(name, params, L):
    return diagonalize(compile_hamiltonian(spec(name, params, L)))


@lru_cache(maxsize=4)
def setup(key, L):
    """(spec, es, psi, A_eig, c) for a named setup."""
    name, params, (kind, seed), site = SETUPS[key]
    sp = spec(name, params, L)
    es = eigensystem(name, params, L)
    A = compile_observable(observable(key, L), L)
    psi = prepare_state(StatePrep(kind, seed), L)
    return sp, es, psi, rotate_to_eigenbasis(es, A), rotate_to_eigenbasis(es, psi)


def observable(key, L):
    site = SETUPS[key][3]
    return ObservableSpec.single(center_site(L) if site is None else site, "Z")


def observable_matrix(key, L):
    return compile_observable(observable(key, L), L)


@lru_cache(maxsize=2)
def gaps(key, L):
    _, es, _, A_eig, c = setup(key, L)
    return gap_amplitudes(es, A_eig, c)


def clear_caches():
    for fn in (spec, eigensystem, setup, gaps):
        fn.cache_clear()
