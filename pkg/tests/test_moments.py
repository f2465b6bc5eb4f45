import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dplda import moments
from dplda.corpus import Corpus, LdaModel, generate_synthetic, random_model
from dplda.moments import (DocMoments, dirichlet_moments, doc_moments, empirical_moments,
                           m1_hat, m2_hat, m3_hat, population_moments, symmetrize)

from oracles import (doc_pair_moment, doc_triple_moment, lda_m2_loop, lda_m3_loop,
                     population_moments_from_dirichlet)

count_rows = arrays(np.int64, st.integers(1, 4), elements=st.integers(0, 3))


def _corpus(rng, n, d, lo=3, hi=6):
    rows = []
    while len(rows) < n:
        c = rng.multinomial(rng.integers(lo, hi + 1), rng.dirichlet(np.ones(d)))
        rows.append(c)
    return Corpus(d, np.array(rows))


@pytest.mark.parametrize("counts", [[3, 0, 0], [1, 1, 1], [2, 1, 0, 3], [0, 4, 1]])
def test_document_moments_match_enumeration(counts):
    np.testing.assert_allclose(doc_moments(counts, 2), doc_pair_moment(counts), atol=1e-14)
    np.testing.assert_allclose(doc_moments(counts, 3), doc_triple_moment(counts), atol=1e-14)


def test_document_moment_needs_enough_tokens():
    with pytest.raises(ValueError, match="insufficient tokens"):
        doc_moments([1, 1, 0], 3)
    with pytest.raises(ValueError):
        doc_moments([1, 1], 4)


def test_doc_moments_cached_view():
    dm = DocMoments([2, 1, 1])
    assert dm.m3 is dm.m3
    np.testing.assert_allclose(dm.m1, [0.5, 0.25, 0.25])


@given(count_rows.filter(lambda c: c.sum() >= 3))
def test_document_moments_are_distributions(c):
    for order in (1, 2, 3):
        m = doc_moments(c, order)
        assert np.all(m >= -1e-15)
        assert np.isclose(m.sum(), 1.0)


@pytest.mark.parametrize("seed", range(6))
def test_estimators_match_loop_oracles(seed):
    rng = np.random.default_rng(seed)
    n, d = int(rng.integers(3, 7)), int(rng.integers(2, 5))
    corpus = _corpus(rng, n, d)
    alpha0 = float(rng.choice([0.3, 1.0, 7.0]))
    np.testing.assert_allclose(m2_hat(corpus, alpha0), lda_m2_loop(corpus.counts, alpha0),
                               atol=1e-10)
    np.testing.assert_allclose(m3_hat(corpus, alpha0), lda_m3_loop(corpus.counts, alpha0),
                               atol=1e-10)


def test_first_moment_is_mean_of_frequencies():
    c = Corpus.from_docs(2, [[3, 1], [0, 4], [2, 2]])
    np.testing.assert_allclose(m1_hat(c), [(0.75 + 0 + 0.5) / 3, (0.25 + 1 + 0.5) / 3])


def test_chunking_does_not_change_result(monkeypatch):
    rng = np.random.default_rng(3)
    corpus = _corpus(rng, 40, 5, hi=15)
    full = m3_hat(corpus, 1.0)
    monkeypatch.setattr(moments, "_CHUNK_ENTRIES", 30)
    np.testing.assert_allclose(m3_hat(corpus, 1.0), full, atol=1e-14)


def test_vocabulary_guard():
    c = Corpus(300, np.full((3, 300), 1))
    with pytest.raises(ValueError, match="max_dim"):
        m3_hat(c, 1.0)


def test_too_few_documents():
    c = Corpus.from_docs(2, [[3, 0], [1, 2]])
    with pytest.raises(ValueError, match="distinct-triple"):
        m3_hat(c, 1.0)
    with pytest.raises(ValueError, match="cross term"):
        m2_hat(Corpus.from_docs(2, [[3, 0]]), 1.0)


@given(st.integers(0, 2**32 - 1), st.sampled_from([0.1, 1.0, 5.0]))
def test_estimates_are_symmetric(seed, alpha0):
    corpus = _corpus(np.random.default_rng(seed), 5, 3)
    m2 = m2_hat(corpus, alpha0)
    m3 = m3_hat(corpus, alpha0)
    np.testing.assert_allclose(m2, m2.T, atol=1e-15)
    np.testing.assert_allclose(m3, symmetrize(m3), atol=1e-15)


@pytest.mark.parametrize("k, d, alpha0", [(2, 4, 0.5), (3, 5, 1.0), (4, 6, 10.0)])
def test_population_moments_match_dirichlet_construction(k, d, alpha0):
    m = random_model(k, d, alpha0, seed=k + d)
    pm = population_moments(m)
    m1, m2, m3 = population_moments_from_dirichlet(m.mu, m.alpha)
    np.testing.assert_allclose(pm.m1, m1, atol=1e-14)
    np.testing.assert_allclose(pm.m2, m2, atol=1e-14)
    np.testing.assert_allclose(pm.m3, m3, atol=1e-14)


def test_dirichlet_moments_monte_carlo():
    alpha = np.array([0.4, 1.1, 2.5])
    first, second, third = dirichlet_moments(alpha)
    theta = np.random.default_rng(0).dirichlet(alpha, size=400_000)
    np.testing.assert_allclose(first, theta.mean(axis=0), atol=3e-3)
    np.testing.assert_allclose(second, theta.T @ theta / len(theta), atol=3e-3)
    emp3 = np.einsum("ni,nj,nk->ijk", theta, theta, theta) / len(theta)
    np.testing.assert_allclose(third, emp3, atol=3e-3)


def test_dirichlet_moments_reject_nonpositive():
    with pytest.raises(ValueError):
        dirichlet_moments([1.0, 0.0])


def test_estimators_are_close_on_a_large_sample():
    m = LdaModel(np.array([[0.6, 0.1], [0.3, 0.2], [0.1, 0.7]]), np.array([0.4, 0.6]))
    corpus = generate_synthetic(m, 60_000, 8, seed=1)
    est = empirical_moments(corpus, m.alpha0)
    pm = population_moments(m)
    np.testing.assert_allclose(est.m1, pm.m1, atol=5e-3)
    np.testing.assert_allclose(est.m2, pm.m2, atol=5e-3)
    np.testing.assert_allclose(est.m3, pm.m3, atol=5e-3)


def test_zero_alpha0_drops_cross_terms():
    c = Corpus.from_docs(2, [[3, 1], [0, 4], [2, 2]])
    expected = sum(doc_pair_moment(r) for r in c.counts) / 3
    np.testing.assert_allclose(m2_hat(c, 0.0), expected)
