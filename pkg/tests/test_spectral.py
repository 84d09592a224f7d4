import numpy as np
import pytest

from dephasing.errors import ValidationError
from dephasing.model import compile_hamiltonian, preset_model
from dephasing.spectral import EigenSystem, diagonalize, extreme_gaps, rotate_to_eigenbasis

import oracles
import shared


@pytest.mark.parametrize("key", ["ising_eq", "ising_neq", "xx", "xxz"])
def test_eigensystem_invariants(key):
    name, params, _, _ = shared.SETUPS[key]
    H = compile_hamiltonian(shared.spec(name, params, 8))
    es = shared.eigensystem(name, params, 8)
    E, U = es.energies, es.transform
    assert E[0] == 0.0
    assert np.all(np.diff(E) >= 0)
    assert np.max(np.abs(U.conj().T @ U - np.eye(es.dim))) <= 1e-10
    recon = U @ np.diag(E + es.shift) @ U.conj().T
    assert np.max(np.abs(recon - H)) <= 1e-8 * np.linalg.norm(H, 2)
    assert es.L == 8 and es.dim == 256


def test_xx_l2_energies():
    es = diagonalize(compile_hamiltonian(preset_model("XX", None, 2)))
    np.testing.assert_allclose(es.energies, [0, 2, 2, 4], atol=1e-12)
    assert es.shift == pytest.approx(-2.0, abs=1e-12)


@pytest.mark.parametrize("L", [4, 6, 8])
def test_xx_free_fermion_spectrum(L):
    es = shared.eigensystem("XX", (), L)
    np.testing.assert_allclose(es.energies + es.shift, oracles.free_fermion_spectrum(L), atol=1e-10)


def test_diagonalize_rejects_non_hermitian():
    with pytest.raises(ValidationError):
        diagonalize(np.array([[0, 1], [0, 0]], dtype=float))
    with pytest.raises(ValidationError):
        diagonalize(np.eye(3))
    with pytest.raises(ValidationError):
        diagonalize(np.ones((2, 4)))


def test_eigensystem_is_read_only():
    es = shared.eigensystem("XX", (), 4)
    with pytest.raises(ValueError):
        es.energies[0] = 1.0


def test_rotation_shapes_and_roundtrip():
    es = shared.eigensystem("XXZ_NNN", shared.XXZ, 6)
    rng = np.random.default_rng(1)
    v = rng.standard_normal(64) + 1j * rng.standard_normal(64)
    c = rotate_to_eigenbasis(es, v)
    np.testing.assert_allclose(es.transform @ c, v, atol=1e-12)
    H = compile_hamiltonian(shared.spec("XXZ_NNN", shared.XXZ, 6))
    D = rotate_to_eigenbasis(es, H)
    np.testing.assert_allclose(D, np.diag(es.energies + es.shift), atol=1e-10)
    with pytest.raises(ValidationError):
        rotate_to_eigenbasis(es, np.zeros(32))


def test_extreme_gaps_against_pair_scan():
    es = shared.eigensystem("ISING", shared.EQ_ISING, 5)
    E = es.energies
    gaps = [E[i] - E[j] for i in range(len(E)) for j in range(len(E)) if E[i] - E[j] > 1e-13]
    dmin, dmax = extreme_gaps(es)
    assert dmin == pytest.approx(min(gaps), abs=1e-12)
    assert dmax == pytest.approx(max(gaps), abs=1e-12)


def test_extreme_gaps_degenerate_levels_skipped():
    es = EigenSystem(np.array([0.0, 0.0, 1.0, 1.0 + 5e-14, 3.0]), np.eye(5), 0.0, 2)
    dmin, dmax = extreme_gaps(es)
    assert dmin == pytest.approx(1.0 - 0.0, abs=1e-12)
    assert dmax == 3.0
    with pytest.raises(ValidationError):
        extreme_gaps(EigenSystem(np.zeros(4), np.eye(4), 0.0, 2))
