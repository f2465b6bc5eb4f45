import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dplda.corpus import random_model
from dplda.exceptions import EigenvalueError, RankDeficientError
from dplda.moments import population_moments
from dplda.spectral import (SpectralFactors, alpha_from_eigenvalues, eigen_scale,
                            is_symmetric, project_columns_to_simplex, simultaneous_power,
                            spectral_fit, unwhiten, whiten, whiten_tensor)

from oracles import best_matching_bruteforce, whiten_tensor_loop


def odeco(k, seed, gap=0.1):
    """Random orthogonally decomposable tensor with separated eigenvalues."""
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.standard_normal((k, k)))
    lam = 0.5 + gap * np.arange(k) + rng.uniform(0, 0.05, k)
    rng.shuffle(lam)
    return np.einsum("r,ir,jr,lr->ijl", lam, q, q, q), q, lam


def test_whitening_identities():
    m = random_model(3, 8, 1.0, seed=2)
    m2 = population_moments(m).m2
    wh = whiten(m2, 3)
    np.testing.assert_allclose(wh.W.T @ m2 @ wh.W, np.eye(3), atol=1e-12)
    np.testing.assert_allclose(wh.Wpinv @ wh.W, np.eye(3), atol=1e-12)
    assert wh.singular_values.shape == (4,)
    assert abs(wh.singular_values[3]) < 1e-12


def test_whitening_full_rank_appends_zero():
    a = np.diag([3.0, 2.0, 1.0])
    wh = whiten(a, 3)
    np.testing.assert_allclose(wh.singular_values, [3, 2, 1, 0])


def test_whitening_ignores_negative_eigenvalues():
    a = np.diag([-5.0, 2.0, 1.0])
    wh = whiten(a, 2)
    np.testing.assert_allclose(wh.singular_values[:2], [2, 1])


def test_rank_deficiency_is_typed():
    with pytest.raises(RankDeficientError, match="rank deficient at k=3"):
        whiten(np.diag([1.0, 1.0, 0.0]), 3)
    with pytest.raises(ValueError):
        whiten(np.eye(2), 3)


def test_whitening_sign_convention_is_deterministic():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((6, 6))
    a = x @ x.T
    w1, w2 = whiten(a, 4).W, whiten(a.copy(), 4).W
    np.testing.assert_array_equal(w1, w2)
    top = np.argmax(np.abs(w1), axis=0)
    assert np.all(w1[top, np.arange(4)] > 0)


@pytest.mark.parametrize("seed", range(4))
def test_whiten_tensor_matches_loop(seed):
    rng = np.random.default_rng(seed)
    d, k = 5, 3
    t = rng.standard_normal((d, d, d))
    w = rng.standard_normal((d, k))
    np.testing.assert_allclose(whiten_tensor(t, w), whiten_tensor_loop(t, w), atol=1e-10)


def test_whiten_tensor_shape_check():
    with pytest.raises(ValueError):
        whiten_tensor(np.zeros((3, 3, 3)), np.zeros((4, 2)))


@pytest.mark.parametrize("seed", range(10))
def test_power_method_recovers_odeco_components(seed):
    k = 2 + seed % 7
    t, q, lam = odeco(k, seed)
    f = simultaneous_power(t, seed=seed)
    assert f.converged
    order = np.argsort(-lam)
    np.testing.assert_allclose(f.eigenvalues, lam[order], atol=1e-8)
    signs = np.sign(np.sum(f.vectors * q[:, order], axis=0))
    np.testing.assert_allclose(f.vectors, q[:, order] * signs, atol=1e-8)
    np.testing.assert_allclose(f.reconstruct(), t, atol=1e-8)


def test_power_method_flips_negative_components():
    t, q, lam = odeco(3, 1)
    t = t - 2 * np.einsum("i,j,l->ijl", q[:, 0], q[:, 0], q[:, 0]) * lam[0]
    f = simultaneous_power(t, seed=0)
    assert np.all(f.eigenvalues > 0)
    np.testing.assert_allclose(f.reconstruct(), t, atol=1e-8)


def test_power_method_warns_when_capped():
    t, _, _ = odeco(4, 2)
    with pytest.warns(RuntimeWarning, match="did not converge"):
        f = simultaneous_power(t, max_iters=1, seed=0)
    assert not f.converged


def test_power_method_rejects_asymmetric_input():
    t = np.zeros((2, 2, 2))
    t[0, 1, 0] = 1.0
    assert not is_symmetric(t)
    with pytest.raises(ValueError, match="symmetric"):
        simultaneous_power(t)


def test_eigenvalue_alpha_round_trip():
    alpha = np.array([0.2, 0.5, 1.3])
    a0 = alpha.sum()
    eigs = 2 * np.sqrt(a0 * (a0 + 1)) / ((a0 + 2) * np.sqrt(alpha))
    np.testing.assert_allclose(alpha_from_eigenvalues(eigs, a0), alpha)
    np.testing.assert_allclose(eigen_scale(a0) * eigs, 1 / np.sqrt(alpha))


def test_unwhiten_rejects_nonpositive_eigenvalues():
    m = random_model(2, 4, 1.0, seed=0)
    wh = whiten(population_moments(m).m2, 2)
    bad = SpectralFactors(np.eye(2), np.array([1.0, -0.1]), 0, 0.0)
    with pytest.raises(EigenvalueError, match="non-positive eigenvalue"):
        unwhiten(bad, wh, 1.0)


@pytest.mark.parametrize("k, d, alpha0, seed", [(2, 8, 0.5, 0), (3, 16, 1.0, 1), (5, 16, 10.0, 2)])
def test_exact_recovery_from_population_moments(k, d, alpha0, seed):
    m = random_model(k, d, alpha0, seed=seed)
    pm = population_moments(m)
    fit = spectral_fit(pm.m2, pm.m3, k, alpha0)
    perm, cost = best_matching_bruteforce(fit.model.mu, m.mu)
    assert cost / k <= 1e-6
    np.testing.assert_allclose(fit.model.alpha[perm], m.alpha, atol=1e-6)


@given(st.integers(1, 6), st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_simplex_projection(d, k, seed):
    x = np.random.default_rng(seed).normal(size=(d, k))
    p = project_columns_to_simplex(x)
    assert np.all(p >= 0)
    np.testing.assert_allclose(p.sum(axis=0), 1.0)


def test_simplex_projection_of_empty_column_is_uniform():
    p = project_columns_to_simplex(np.array([[-1.0, 2.0], [-3.0, 2.0]]))
    np.testing.assert_allclose(p, [[0.5, 0.5], [0.5, 0.5]])
