import math

import numpy as np
import pytest

from dephasing.diagnostics import (
    default_band_grid,
    default_tail_grid,
    diagonal_smoothness,
    effective_dimension,
    energy_moments,
    eth_band_statistics,
    level_populations,
    linear_fit,
    observable_band_norms,
    spectral_cdf_distance,
    state_tail_weights,
    ETH_ENERGY_BINS,
    ETH_OMEGA_BINS,
)
from dephasing.errors import ValidationError
from dephasing.model import StatePrep, compile_hamiltonian, prepare_state, site_states
from dephasing.spectral import EigenSystem, diagonalize, rotate_to_eigenbasis

import oracles
import shared


def _diag_es(energies):
    E = np.asarray(energies, dtype=float)
    return EigenSystem(E - E[0], np.eye(E.shape[0]), float(E[0]), int(math.log2(E.shape[0])))


# --- effective dimension --------------------------------------------------------------------


def test_deff_single_eigenvector():
    _, es, _, _, _ = shared.setup("xxz", 8)
    c = np.zeros(es.dim, dtype=complex)
    c[37] = 1j
    assert effective_dimension(es, c) == 1.0


def test_deff_uniform_over_four_levels():
    es = _diag_es([0.0, 1.0, 2.5, 3.0])
    assert effective_dimension(es, np.full(4, 0.5)) == pytest.approx(4.0, abs=1e-14)


def test_deff_degenerate_levels_are_summed():
    es = _diag_es([0.0, 1.0, 1.0, 3.0])
    c = np.array([0.0, 1.0, 1.0, 0.0]) / math.sqrt(2)
    assert effective_dimension(es, c) == pytest.approx(1.0, abs=1e-14)
    np.testing.assert_allclose(level_populations(es, c), [0.0, 1.0, 0.0], atol=1e-15)


@pytest.mark.parametrize("key", ["ising_eq", "xx", "xxz"])
def test_deff_matches_scan_oracle(key):
    _, es, _, _, c = shared.setup(key, 8)
    ref = oracles.participation_ratio(es.energies, c, 1e-13)
    assert effective_dimension(es, c) == pytest.approx(ref, rel=1e-12)
    assert 1.0 <= effective_dimension(es, c) <= es.dim


def test_deff_rejects_unnormalized():
    es = _diag_es([0.0, 1.0])
    with pytest.raises(ValidationError):
        effective_dimension(es, np.array([1.0, 1.0]))


def test_deff_cdw_xxz_increases_with_L():
    # Frozen from the pipeline run: 5.279, 7.227, 9.849.
    values = []
    for L in (8, 10, 12):
        _, es, _, _, c = shared.setup("xxz", L)
        values.append(effective_dimension(es, c))
        shared.clear_caches()
    np.testing.assert_allclose(values, [5.279, 7.227, 9.849], atol=5e-4)
    assert values[0] < values[1] < values[2]


# --- energy moments ------------------------------------------------------------------------


@pytest.mark.parametrize("L", [3, 6, 8])
def test_all_up_ising_closed_form(L):
    J, hx, hz = 4.0, 1.0, -2.1
    sp = shared.spec("ISING", shared.EQ_ISING, L)
    mean, var = oracles.product_moments(oracles.ising_terms(L, J, hx, hz), site_states(StatePrep("ALL_UP"), L))
    assert mean == pytest.approx(hz * L, abs=1e-12)
    assert var == pytest.approx((L - 1) * J**2 + L * hx**2, abs=1e-10)
    for method in ("dense", "local"):
        m = energy_moments(sp, StatePrep("ALL_UP"), method)
        assert m.mu == pytest.approx(mean, abs=1e-9)
        assert m.variance == pytest.approx(var, abs=1e-9)
        assert m.s == pytest.approx(m.sigma / math.sqrt(L))


@pytest.mark.parametrize("key", ["ising_eq", "ising_neq", "xx", "xxz"])
def test_moments_dense_local_agree(key):
    name, params, (kind, seed), _ = shared.SETUPS[key]
    sp = shared.spec(name, params, 8)
    prep = StatePrep(kind, seed)
    dense = energy_moments(sp, prep, "dense")
    local = energy_moments(sp, prep, "local")
    assert abs(dense.mu - local.mu) <= 1e-9
    assert abs(dense.sigma - local.sigma) <= 1e-9
    assert dense.sigma >= 0


def test_moments_match_enumeration_oracle_random_state():
    vs = site_states(StatePrep("RANDOM_PRODUCT_CENTER_UP", 5), 6)
    mean, var = oracles.product_moments(oracles.xxz_nnn_terms(6, 1.0, 2.0, 0.2), vs)
    m = energy_moments(shared.spec("XXZ_NNN", shared.XXZ, 6), vs, "local")
    assert m.mu == pytest.approx(mean, abs=1e-10)
    assert m.variance == pytest.approx(var, abs=1e-10)


def test_eigenstate_has_zero_spread():
    sp = shared.spec("ISING", shared.EQ_ISING, 6)
    es = shared.eigensystem("ISING", shared.EQ_ISING, 6)
    m = energy_moments(sp, np.ascontiguousarray(es.transform[:, 5]), "dense")
    assert m.sigma <= 1e-6
    assert m.mu == pytest.approx(es.energies[5] + es.shift, abs=1e-10)


def test_local_method_rejects_full_vector():
    sp = shared.spec("XX", (), 4)
    with pytest.raises(ValidationError):
        energy_moments(sp, prepare_state(StatePrep("CDW"), 4), "local")
    with pytest.raises(ValidationError):
        energy_moments(sp, StatePrep("CDW"), "bogus")


# --- spectral CDF distance -----------------------------------------------------------------


def test_cdf_single_level_at_mean():
    es = _diag_es([0.0, 1.0, 2.0, 3.0])
    w = np.array([0.0, 0.0, 1.0, 0.0])
    # Zero-width weighted spectrum is rejected unless a width is supplied.
    with pytest.raises(ValidationError):
        spectral_cdf_distance(es, w)
    assert spectral_cdf_distance(es, w, mu=2.0, sigma=1.0) == pytest.approx(0.5, abs=1e-15)


def test_cdf_symmetric_two_level():
    es = _diag_es([-1.0, 1.0])
    d = spectral_cdf_distance(es, np.array([0.5, 0.5]))
    assert d == pytest.approx(abs(0.5 - oracles.gaussian_cdf(-1.0, 0.0, 1.0)), abs=1e-15)


def test_cdf_matches_bruteforce_scan():
    _, es, _, _, c = shared.setup("ising_neq", 6)
    w = np.abs(c) ** 2
    w = w / w.sum()
    mu = float(np.sum(w * es.energies))
    sigma = math.sqrt(float(np.sum(w * (es.energies - mu) ** 2)))
    best = 0.0
    for y in es.energies:
        for F in (np.sum(w[es.energies < y]), np.sum(w[es.energies <= y])):
            best = max(best, abs(F - oracles.gaussian_cdf(y, mu, sigma)))
    assert spectral_cdf_distance(es, w) == pytest.approx(best, abs=1e-12)


def test_cdf_bad_weights():
    es = _diag_es([0.0, 1.0])
    with pytest.raises(ValidationError):
        spectral_cdf_distance(es, np.array([0.7, 0.7]))
    with pytest.raises(ValidationError):
        spectral_cdf_distance(es, np.array([1.5, -0.5]))


def test_cdf_uniform_xx_decreases_with_L():
    # Frozen from the scaling run: 0.0391, 0.0177, 0.0128.
    d = [spectral_cdf_distance(shared.eigensystem("XX", (), L)) for L in (8, 10, 12)]
    shared.clear_caches()
    np.testing.assert_allclose(d, [0.0391, 0.0177, 0.0128], atol=5e-5)
    assert d[0] > d[2]


# --- band norms ------------------------------------------------------------------------------


def test_band_norms_diagonal_observable_vanish():
    es = _diag_es(np.arange(8.0))
    prof = observable_band_norms(es, np.diag(np.arange(8.0)), 2.0, [3.0, 4.5, 7.0])
    np.testing.assert_array_equal(prof.norms, 0.0)


def test_band_norms_match_svd():
    rng = np.random.default_rng(0)
    es = _diag_es(np.sort(rng.uniform(0, 5, 16)))
    X = rng.standard_normal((16, 16)) + 1j * rng.standard_normal((16, 16))
    A = (X + X.conj().T) / 2
    eps = float(es.energies[4])
    grid = es.energies[6:15] - 1e-9
    prof = observable_band_norms(es, A, eps, grid)
    for ep, n in zip(grid, prof.norms):
        block = A[np.ix_(es.energies >= ep, es.energies <= eps)]
        assert n == pytest.approx(np.linalg.svd(block, compute_uv=False)[0], rel=1e-12)


def test_band_norms_errors():
    es = _diag_es(np.arange(4.0))
    A = np.eye(4)
    with pytest.raises(ValidationError):
        observable_band_norms(es, A, 2.0, [1.0])
    with pytest.raises(ValidationError):
        observable_band_norms(es, A, -1.0, [1.0])
    with pytest.raises(ValidationError):
        observable_band_norms(es, A, 1.0, [10.0])


def test_band_norm_decay_ising_L10():
    sp, es, _, A_eig, _ = shared.setup("ising_eq", 10)
    from dephasing.model import support_radius

    eps, grid = default_band_grid(es)
    prof = observable_band_norms(es, A_eig, eps, grid, R=support_radius(sp, shared.observable("ising_eq", 10)))
    assert np.all(np.diff(prof.norms) <= 1e-12)
    assert np.all((prof.norms >= 0) & (prof.norms <= 1 + 1e-12))
    assert prof.decay_rate > 0
    assert prof.r_squared >= 0.9
    shared.clear_caches()


# --- tail weights ----------------------------------------------------------------------------


def test_tail_ground_state_has_no_upper_tail():
    _, es, _, _, _ = shared.setup("xx", 6)
    c = np.zeros(es.dim)
    c[0] = 1.0
    tw = state_tail_weights(es, c, [0.01, 0.5, 2.0])
    np.testing.assert_array_equal(tw.upper, 0.0)


def test_tail_beyond_spectrum_is_empty():
    _, es, _, _, c = shared.setup("ising_neq", 6)
    width = es.energies[-1]
    tw = state_tail_weights(es, c, [2 * width / es.L])
    assert tw.upper[0] == 0.0 and tw.lower[0] == 0.0
    assert tw.bulk[0] == pytest.approx(1.0, abs=1e-12)


def test_tail_sum_rule_and_monotone():
    _, es, _, _, c = shared.setup("ising_neq", 8)
    a = np.linspace(0.01, 1.5, 80)
    tw = state_tail_weights(es, c, a)
    np.testing.assert_allclose(tw.upper + tw.lower + tw.bulk, 1.0, atol=1e-12)
    assert np.all(np.diff(tw.upper) <= 0) and np.all(np.diff(tw.lower) <= 0)


def test_tail_errors():
    es = _diag_es([0.0, 1.0])
    with pytest.raises(ValidationError):
        state_tail_weights(es, np.array([1.0, 0.0]), [0.0, 1.0])
    with pytest.raises(ValidationError):
        state_tail_weights(es, np.array([1.0, 1.0]), [1.0])


def test_tail_decay_all_up_ising_L12():
    sp = shared.spec("ISING", shared.NEQ_ISING, 12)
    es = shared.eigensystem("ISING", shared.NEQ_ISING, 12)
    c = rotate_to_eigenbasis(es, prepare_state(StatePrep("ALL_UP"), 12))
    tw = state_tail_weights(es, c, default_tail_grid(sp))
    shared.clear_caches()
    assert tw.slope < 0
    assert tw.r_squared >= 0.9


def test_linear_fit_exact_line():
    slope, intercept, r2 = linear_fit([0, 1, 2, 3], [1, 3, 5, 7])
    assert (slope, intercept, r2) == pytest.approx((2.0, 1.0, 1.0))


# --- ETH statistics -------------------------------------------------------------------------


def test_eth_identity():
    _, es, _, _, _ = shared.setup("xx", 6)
    stats = eth_band_statistics(es, np.eye(es.dim), 8, 4)
    filled = stats.diag_count > 0
    np.testing.assert_allclose(stats.diag_mean[filled], 1.0)
    assert np.all(np.isnan(stats.diag_mean[~filled]))
    off = stats.offdiag_count > 0
    np.testing.assert_array_equal(stats.offdiag_mean[off], 0.0)
    assert np.all(np.isnan(stats.offdiag_mean[~off]))
    assert stats.diag_count.sum() == es.dim
    assert stats.offdiag_count.sum() == es.dim * (es.dim - 1)


def test_eth_hamiltonian_reproduces_binned_energies():
    es = shared.eigensystem("ISING", shared.EQ_ISING, 6)
    stats = eth_band_statistics(es, np.diag(es.energies), 10, 4)
    for k in range(10):
        lo, hi = stats.energy_edges[k], stats.energy_edges[k + 1]
        inside = (es.energies >= lo) & ((es.energies < hi) if k < 9 else (es.energies <= hi))
        if inside.any():
            assert stats.diag_mean[k] == pytest.approx(es.energies[inside].mean(), abs=1e-12)
        else:
            assert np.isnan(stats.diag_mean[k])


def test_eth_bins_validated():
    es = _diag_es([0.0, 1.0])
    with pytest.raises(ValidationError):
        eth_band_statistics(es, np.eye(2), 1, 4)


def test_eth_diagonal_smoothness_ising_L12():
    # Bin count fixed after the exploratory run; ratio there was 4.71.
    sp = shared.spec("ISING", shared.EQ_ISING, 12)
    es = shared.eigensystem("ISING", shared.EQ_ISING, 12)
    A_eig = rotate_to_eigenbasis(es, shared.observable_matrix("ising_eq", 12))
    stats = eth_band_statistics(es, A_eig, ETH_ENERGY_BINS, ETH_OMEGA_BINS)
    shared.clear_caches()
    assert diagonal_smoothness(stats) < 5.0
