from decimal import Decimal

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dplda.corpus import generate_synthetic, random_model
from dplda.evaluation import recovery_error
from dplda.exceptions import CalibrationError, EigenvalueError, RankDeficientError
from dplda.moments import population_moments
from dplda.pipeline import (BUDGET_SLOTS, CONFIG_EDGES, ConfigId, fit, fit_nonprivate,
                            postprocess, requested_totals, split_budget)
from dplda.privacy import compose
from dplda.sensitivity import EdgeId

PRIVATE = [ConfigId.CONFIG1, ConfigId.CONFIG2, ConfigId.CONFIG3, ConfigId.CONFIG4]


@pytest.fixture(scope="module")
def data():
    truth = random_model(3, 10, 1.0, seed=1)
    return truth, generate_synthetic(truth, 5000, 30, seed=2)


def huge_budget(config):
    """Enormous epsilon so every noise scale is negligible."""
    return {slot: (1e12, 0.4) for slot in BUDGET_SLOTS[config]}


# Config 3 noises unit eigenvectors at a local-sensitivity scale that is
# huge at this corpus size, so its structural tests need a far larger budget.
EPS_SCALE = {ConfigId.CONFIG3: 5000.0}


def model_distance(a, b):
    return max(np.abs(a.mu - b.mu).max(), np.abs(a.alpha - b.alpha).max())


def test_consistency_trend():
    errors = {}
    for n in (5000, 50_000):
        errs = []
        for seed in range(5):
            truth = random_model(3, 10, 1.0, seed=100 + seed)
            corpus = generate_synthetic(truth, n, 20, seed=200 + seed)
            errs.append(recovery_error(fit_nonprivate(corpus, 3, 1.0).model, truth)[1])
        errors[n] = np.mean(errs)
    assert errors[50_000] < errors[5000]


def test_population_moment_injection_recovers_exactly():
    truth = random_model(4, 12, 0.5, seed=3)
    report = fit_nonprivate(None, 4, 0.5, moments=population_moments(truth))
    assert recovery_error(report.model, truth)[1] <= 1e-6
    assert len(report.ledger) == 0
    assert report.noised_edges == frozenset()


def test_k_larger_than_d_is_argument_error(data):
    with pytest.raises(ValueError, match="k=11"):
        fit_nonprivate(data[1], 11, 1.0)


@pytest.mark.parametrize("config", PRIVATE)
def test_zero_noise_limit(data, config):
    baseline = fit_nonprivate(data[1], 3, 1.0).model
    report = fit(data[1], 3, 1.0, config, huge_budget(config), allow_large_epsilon=True)
    assert model_distance(report.model, baseline) <= 1e-8


@pytest.mark.parametrize("config", PRIVATE)
def test_cut_discipline(data, config):
    eps = EPS_SCALE.get(config, 50.0)
    budget = {slot: (eps, 1e-3) for slot in BUDGET_SLOTS[config]}
    report = fit(data[1], 3, 1.0, config, budget, seed=5, allow_large_epsilon=True)
    assert report.noised_edges == CONFIG_EDGES[config]
    # the model is a function of the releases alone
    again = postprocess(config, report.releases, 3, 1.0, seed=5)
    np.testing.assert_array_equal(again.mu, report.model.mu)
    np.testing.assert_array_equal(again.alpha, report.model.alpha)


def test_releases_differ_from_clean_quantities(data):
    from dplda.moments import empirical_moments
    m = empirical_moments(data[1], 1.0)
    budget = {s: (0.5, 1e-4) for s in BUDGET_SLOTS[ConfigId.CONFIG1]}
    r = fit(data[1], 3, 1.0, ConfigId.CONFIG1, budget)
    assert not np.allclose(r.releases[EdgeId.E3], m.m3)
    assert not np.allclose(r.releases[EdgeId.E4], m.m2)
    assert not np.allclose(r.releases[EdgeId.E4], r.releases[EdgeId.E8])


@pytest.mark.parametrize("config", PRIVATE)
def test_budget_exactness(data, config):
    base = EPS_SCALE.get(config, 10.7)
    budget = {slot: (base * (i + 1), 1e-3 * (i + 1))
              for i, slot in enumerate(BUDGET_SLOTS[config])}
    report = fit(data[1], 3, 1.0, config, budget, allow_large_epsilon=True)
    expected_eps = sum(Decimal(repr(base * (i + 1))) for i in range(len(budget)))
    expected_delta = sum(Decimal(repr(1e-3 * (i + 1))) for i in range(len(budget)))
    assert compose(report.ledger) == (expected_eps, expected_delta)
    assert compose(report.ledger) == requested_totals(config, budget)
    assert report.ledger.labels() == list(BUDGET_SLOTS[config])


@pytest.mark.parametrize("config", PRIVATE)
def test_determinism(data, config):
    budget = {slot: (0.5, 1e-4) for slot in BUDGET_SLOTS[config]}

    def run():
        try:
            return fit(data[1], 3, 1.0, config, budget, seed=11)
        except EigenvalueError as exc:
            return str(exc)

    a, b = run(), run()
    if isinstance(a, str):
        assert a == b
        return
    np.testing.assert_array_equal(a.model.mu, b.model.mu)
    assert a.diagnostics_text() == b.diagnostics_text()
    assert a.ledger.to_csv() == b.ledger.to_csv()


def test_config1_collapse_is_typed():
    truth = random_model(4, 4, 1.0, seed=0)
    corpus = generate_synthetic(truth, 50, 5, seed=0)
    budget = {s: (0.01, 1e-6) for s in BUDGET_SLOTS[ConfigId.CONFIG1]}
    with pytest.raises(RankDeficientError, match="privatized spectrum collapsed"):
        fit(corpus, 4, 1.0, ConfigId.CONFIG1, budget)


def test_config2_calibration_collapse():
    truth = random_model(3, 10, 1.0, seed=0)
    corpus = generate_synthetic(truth, 60, 10, seed=0)
    budget = {"sigma_k": (0.01, 1e-6), "e6": (0.5, 1e-5), "e8": (0.5, 1e-5)}
    with pytest.raises(CalibrationError, match="calibration collapsed"):
        fit(corpus, 3, 1.0, ConfigId.CONFIG2, budget)


def test_config2_diagnostics(data):
    budget = {"sigma_k": (0.5, 1e-3), "e6": (1e12, 0.4), "e8": (1e12, 0.4)}
    r = fit(data[1], 3, 1.0, ConfigId.CONFIG2, budget, allow_large_epsilon=True)
    d = r.diagnostics
    assert 0 < d["sigma_k_tilde"] <= d["sigma_k_hat"]
    assert len(d["singular_values"]) == 4
    assert {"e6", "e8"} == set(d["noise_sigma"])
    assert "gamma_s" in d and "power_residual" in d


def test_config3_negative_eigenvalue_error(data):
    budget = {"sigma_k": (1.0, 1e-3), "gamma_s": (1.0, 1e-3), "e7": (0.5, 1e-4),
              "e8": (0.5, 1e-4)}
    with pytest.raises(EigenvalueError, match="non-positive eigenvalue"):
        fit(data[1], 3, 1.0, ConfigId.CONFIG3, budget, seed=0)


def test_config4_output_on_simplex(data):
    budget = {s: (0.3, 1e-4) for s in BUDGET_SLOTS[ConfigId.CONFIG4]}
    r = fit(data[1], 3, 1.0, ConfigId.CONFIG4, budget, seed=1)
    assert np.all(r.model.mu >= 0)
    np.testing.assert_allclose(r.model.mu.sum(axis=0), 1)
    assert np.all(r.model.alpha > 0)
    assert r.model.alpha0 == pytest.approx(1.0)


def test_missing_budget_entry(data):
    with pytest.raises(ValueError, match="missing privacy budget for 'e8'"):
        fit(data[1], 3, 1.0, ConfigId.CONFIG1, {"e3": (0.5, 1e-5), "e4": (0.5, 1e-5)})


def test_large_epsilon_requires_override(data):
    with pytest.raises(ValueError, match="epsilon <= 1"):
        fit(data[1], 3, 1.0, ConfigId.CONFIG1, huge_budget(ConfigId.CONFIG1))


def test_config_parsing():
    assert ConfigId.parse("none") is ConfigId.NONPRIVATE
    assert ConfigId.parse("3") is ConfigId.CONFIG3
    assert ConfigId.parse("Config4") is ConfigId.CONFIG4
    with pytest.raises(ValueError):
        ConfigId.parse("5")


def test_diagnostics_text_is_key_value(data):
    r = fit_nonprivate(data[1], 3, 1.0)
    lines = r.diagnostics_text().splitlines()
    assert lines[0] == "config=none"
    assert all("=" in line for line in lines)
    assert any(line.startswith("singular_values=") for line in lines)


@given(st.sampled_from(PRIVATE), st.floats(0.01, 100), st.floats(1e-9, 0.5),
       st.lists(st.floats(0.05, 1), min_size=4, max_size=4))
def test_split_budget_is_exact(config, eps, delta, raw):
    n = len(BUDGET_SLOTS[config])
    fractions = np.array(raw[:n]) / sum(raw[:n])
    if abs(fractions.sum() - 1) > 1e-12:
        return
    budget = split_budget(config, eps, delta, fractions)
    assert requested_totals(config, budget) == (Decimal(repr(eps)), Decimal(repr(delta)))


def test_split_budget_validation():
    with pytest.raises(ValueError):
        split_budget(ConfigId.CONFIG1, 1.0, 1e-5, [0.5, 0.5])
    with pytest.raises(ValueError):
        split_budget(ConfigId.CONFIG1, 1.0, 1e-5, [0.5, 0.5, 0.5])
    assert split_budget(ConfigId.NONPRIVATE, 1.0, 1e-5) == {}


def test_even_split_of_three_gives_whole_shares():
    shares = split_budget(ConfigId.CONFIG1, 3.0, 3e-4)
    assert all(eps == Decimal(1) for eps, _ in shares.values())
    assert sum(d for _, d in shares.values()) == Decimal("0.0003")
