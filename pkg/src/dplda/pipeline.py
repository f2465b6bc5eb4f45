"""Non-private spectral estimator and the four differentially private
configurations.

Every private fit is split into a *release* step, which touches the corpus and
returns only noised quantities keyed by edge, and a *post-processing* step
(``postprocess``) that maps those releases to a model without access to the
data. ``FitReport.releases`` records exactly what crossed the cut.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from decimal import Context, Decimal, localcontext

import numpy as np

from .corpus import LdaModel, make_rng, validate
from .exceptions import RankDeficientError
from .moments import MAX_TENSOR_DIM, empirical_moments, symmetrize
from .privacy import (BudgetLedger, PrivacyParams, _dec, calibrate_local_sensitivity, compose,
                      perturb)
from .sensitivity import (EdgeId, SpectralContext, decomposition_bound_applies,
                          eigengap, sens_decomposition_output, sens_final_output,
                          sens_m2, sens_m3, sens_whitened_tensor)
from .spectral import (SpectralFactors, Whitening, project_columns_to_simplex,
                       simultaneous_power, unwhiten, whiten, whiten_tensor)

logger = logging.getLogger(__name__)


class ConfigId(enum.Enum):
    NONPRIVATE = "none"
    CONFIG1 = "1"
    CONFIG2 = "2"
    CONFIG3 = "3"
    CONFIG4 = "4"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        text = str(value).strip().lower()
        for alias, member in (("nonprivate", cls.NONPRIVATE), ("config1", cls.CONFIG1),
                              ("config2", cls.CONFIG2), ("config3", cls.CONFIG3),
                              ("config4", cls.CONFIG4)):
            if text == alias:
                return member
        return cls(text)

    def __str__(self):
        return self.value


CONFIG_EDGES = {
    ConfigId.NONPRIVATE: frozenset(),
    ConfigId.CONFIG1: frozenset({EdgeId.E3, EdgeId.E4, EdgeId.E8}),
    ConfigId.CONFIG2: frozenset({EdgeId.E6, EdgeId.E8}),
    ConfigId.CONFIG3: frozenset({EdgeId.E7, EdgeId.E8}),
    ConfigId.CONFIG4: frozenset({EdgeId.E9}),
}

# budget entries each configuration consumes, in ledger order
BUDGET_SLOTS = {
    ConfigId.NONPRIVATE: (),
    ConfigId.CONFIG1: ("e3", "e4", "e8"),
    ConfigId.CONFIG2: ("sigma_k", "e6", "e8"),
    ConfigId.CONFIG3: ("sigma_k", "gamma_s", "e7", "e8"),
    ConfigId.CONFIG4: ("sigma_k", "gamma_s", "e9"),
}

# noisy prior weights are floored at this fraction of alpha0 before rescaling
ALPHA_FLOOR = 1e-8

# independent random streams, spawned from the fit seed
_STREAMS = ("power", "e3", "e4", "e6", "e7", "e8", "e9", "calibration")


@dataclass
class FitReport:
    config: ConfigId
    model: LdaModel
    ledger: BudgetLedger
    diagnostics: dict = field(default_factory=dict)
    releases: dict = field(default_factory=dict)

    @property
    def noised_edges(self):
        return frozenset(self.releases)

    def diagnostics_text(self):
        """``key=value`` lines; nested dicts flatten to ``key.sub=value``."""
        lines = [f"config={self.config}"]
        for key, value in self.diagnostics.items():
            if isinstance(value, dict):
                lines.extend(f"{key}.{sub}={_fmt(v)}" for sub, v in value.items())
            else:
                lines.append(f"{key}={_fmt(value)}")
        return "\n".join(lines) + "\n"


def _fmt(value):
    if isinstance(value, (list, tuple, np.ndarray)):
        return ",".join(_fmt(v) for v in value)
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _streams(seed):
    children = np.random.SeedSequence(seed).spawn(len(_STREAMS))
    return dict(zip(_STREAMS, children))


def _budget_params(budget, label, allow_large_epsilon):
    try:
        entry = budget[label]
    except (KeyError, TypeError):
        raise ValueError(f"missing privacy budget for '{label}'") from None
    if isinstance(entry, PrivacyParams):
        eps, delta = entry.epsilon, entry.delta
        allow_large_epsilon = allow_large_epsilon or entry.allow_large_epsilon
    else:
        eps, delta = entry
    # Decimal entries pass through so ledger totals stay exact
    if not isinstance(eps, Decimal):
        eps = float(eps)
    if not isinstance(delta, Decimal):
        delta = float(delta)
    return PrivacyParams(eps, delta, allow_large_epsilon)


def requested_totals(config, budget):
    """Exact (sum eps, sum delta) of the budget entries a configuration uses."""
    slots = BUDGET_SLOTS[ConfigId.parse(config)]
    return compose([(s, *_entry(budget[s])) for s in slots])


def _entry(e):
    return (e.epsilon, e.delta) if isinstance(e, PrivacyParams) else e


def _private_whitening(m2, k, sigma, seed):
    noisy = perturb(m2, sigma, seed)
    try:
        return noisy, whiten(noisy, k)
    except RankDeficientError as exc:
        raise RankDeficientError(f"privatized spectrum collapsed: {exc}") from None


def _power(t, seed, diagnostics):
    factors = simultaneous_power(symmetrize(t), seed=seed, warn=False)
    diagnostics["power_iterations"] = factors.iterations
    diagnostics["power_residual"] = factors.residual
    diagnostics["power_converged"] = factors.converged
    diagnostics["gamma_s"] = eigengap(factors.eigenvalues)
    if not factors.converged:
        logger.info("power iteration stopped at residual %.3e", factors.residual)
    return factors


def _prepare(corpus, k, alpha0, moments, max_dim):
    if alpha0 <= 0:
        raise ValueError("alpha0 must be positive")
    if moments is None:
        validate(corpus)
        moments = empirical_moments(corpus, alpha0, max_dim=max_dim)
    d = moments.m2.shape[0]
    if not 1 <= k <= d:
        raise ValueError(f"k={k} must lie in 1..d={d}")
    return moments


def postprocess(config, releases, k, alpha0, seed=0, diagnostics=None):
    """Model from released quantities only; no corpus access."""
    config = ConfigId.parse(config)
    diag = {} if diagnostics is None else diagnostics
    streams = _streams(seed)
    if config is ConfigId.CONFIG1:
        wh_w = whiten(releases[EdgeId.E4], k)
        wh_p = whiten(releases[EdgeId.E8], k)
        factors = _power(whiten_tensor(releases[EdgeId.E3], wh_w.W), streams["power"], diag)
        return unwhiten(factors, Whitening(wh_w.W, wh_p.Wpinv, wh_p.singular_values), alpha0)
    if config is ConfigId.CONFIG2:
        wh_p = whiten(releases[EdgeId.E8], k)
        factors = _power(releases[EdgeId.E6], streams["power"], diag)
        return unwhiten(factors, wh_p, alpha0)
    if config is ConfigId.CONFIG3:
        wh_p = whiten(releases[EdgeId.E8], k)
        vectors, eigenvalues = releases[EdgeId.E7]
        factors = SpectralFactors(vectors, eigenvalues, iterations=0, residual=0.0)
        return unwhiten(factors, wh_p, alpha0)
    if config is ConfigId.CONFIG4:
        mu, alpha = releases[EdgeId.E9]
        return _project_model(mu, alpha, alpha0)
    raise ValueError(f"no post-processing for {config}")


def _project_model(mu, alpha, alpha0):
    alpha = np.maximum(np.asarray(alpha, dtype=float), ALPHA_FLOOR * alpha0)
    return LdaModel(project_columns_to_simplex(mu), alpha * (alpha0 / alpha.sum()))



def _clean_fit(moments, k, alpha0, streams, diag):
    wh = whiten(moments.m2, k)
    t = symmetrize(whiten_tensor(moments.m3, wh.W))
    factors = _power(t, streams["power"], diag)
    sv = wh.singular_values
    diag["singular_values"] = sv.tolist()
    return wh, t, factors


def _context(n_docs, k, alpha0, wh, factors):
    sv = wh.singular_values
    return SpectralContext(N=n_docs, k=k, d=wh.W.shape[0], alpha0=alpha0,
                           sigma_k=float(sv[k - 1]), sigma_k1=float(max(sv[k], 0.0)),
                           sigma_1=float(sv[0]),
                           gamma_s=eigengap(factors.eigenvalues) if factors is not None else 0.0,
                           sigma1_T=float(factors.eigenvalues[0]) if factors is not None else 0.0)


def fit_nonprivate(corpus, k, alpha0, seed=0, moments=None, max_dim=MAX_TENSOR_DIM):
    """Spectral estimate with no noise; ``moments`` may inject exact moments."""
    moments = _prepare(corpus, k, alpha0, moments, max_dim)
    diag = {}
    wh, _, factors = _clean_fit(moments, k, alpha0, _streams(seed), diag)
    diag["eigenvalues"] = factors.eigenvalues.tolist()
    model = unwhiten(factors, wh, alpha0)
    return FitReport(ConfigId.NONPRIVATE, model, BudgetLedger(), diag, {})


def fit_config1(corpus, k, alpha0, budget, seed=0, allow_large_epsilon=False,
                moments=None, max_dim=MAX_TENSOR_DIM):
    """Noise M3 (e3) and two independent copies of M2 (e4 for W, e8 for W+)."""
    moments = _prepare(corpus, k, alpha0, moments, max_dim)
    n = _n_docs(corpus, moments)
    streams = _streams(seed)
    p3, p4, p8 = (_budget_params(budget, e, allow_large_epsilon) for e in ("e3", "e4", "e8"))
    ledger = BudgetLedger()
    for label, p in (("e3", p3), ("e4", p4), ("e8", p8)):
        ledger.charge(label, p.epsilon, p.delta)
    s2, s3 = sens_m2(alpha0, n), sens_m3(alpha0, n)
    noise = {"e3": s3 * p3.tau, "e4": s2 * p4.tau, "e8": s2 * p8.tau}
    releases = {EdgeId.E3: perturb(moments.m3, noise["e3"], streams["e3"])}
    releases[EdgeId.E4], wh_w = _private_whitening(moments.m2, k, noise["e4"], streams["e4"])
    releases[EdgeId.E8], wh_p = _private_whitening(moments.m2, k, noise["e8"], streams["e8"])
    diag = {"noise_sigma": noise, "singular_values": wh_w.singular_values.tolist(),
            "singular_values_e8": wh_p.singular_values.tolist()}
    model = postprocess(ConfigId.CONFIG1, releases, k, alpha0, seed, diag)
    return FitReport(ConfigId.CONFIG1, model, ledger, diag, releases)


def fit_config2(corpus, k, alpha0, budget, seed=0, allow_large_epsilon=False,
                moments=None, max_dim=MAX_TENSOR_DIM):
    """Noise the whitened tensor (e6, locally calibrated) and M2 for W+ (e8)."""
    moments = _prepare(corpus, k, alpha0, moments, max_dim)
    n = _n_docs(corpus, moments)
    streams = _streams(seed)
    p1, p6, p8 = (_budget_params(budget, e, allow_large_epsilon)
                  for e in ("sigma_k", "e6", "e8"))
    ledger = BudgetLedger()
    wh = whiten(moments.m2, k)
    t = symmetrize(whiten_tensor(moments.m3, wh.W))
    ctx = _context(n, k, alpha0, wh, None)
    cal = calibrate_local_sensitivity(
        lambda sk, _: sens_whitened_tensor(ctx.with_lower_bounds(sk)),
        ctx.sigma_k, None, n, p1.epsilon, p1.delta, mech=p6,
        seed=streams["calibration"], ledger=ledger, label="e6")
    ledger.charge("e8", p8.epsilon, p8.delta)
    sigma8 = sens_m2(alpha0, n) * p8.tau
    releases = {EdgeId.E6: perturb(t, cal.noise_sigma, streams["e6"])}
    releases[EdgeId.E8], _ = _private_whitening(moments.m2, k, sigma8, streams["e8"])
    diag = {"singular_values": wh.singular_values.tolist(),
            "sigma_k_hat": cal.sigma_k_hat, "sigma_k_tilde": cal.sigma_k_tilde,
            "local_sensitivity": cal.local_sensitivity,
            "noise_sigma": {"e6": cal.noise_sigma, "e8": sigma8}}
    model = postprocess(ConfigId.CONFIG2, releases, k, alpha0, seed, diag)
    return FitReport(ConfigId.CONFIG2, model, ledger, diag, releases)


def fit_config3(corpus, k, alpha0, budget, seed=0, allow_large_epsilon=False,
                moments=None, max_dim=MAX_TENSOR_DIM):
    """Noise the decomposition output (e7) and M2 for W+ (e8)."""
    moments = _prepare(corpus, k, alpha0, moments, max_dim)
    n = _n_docs(corpus, moments)
    streams = _streams(seed)
    p1, p1p, p7, p8 = (_budget_params(budget, e, allow_large_epsilon)
                       for e in ("sigma_k", "gamma_s", "e7", "e8"))
    ledger = BudgetLedger()
    diag = {}
    wh, _, factors = _clean_fit(moments, k, alpha0, streams, diag)
    ctx = _context(n, k, alpha0, wh, factors)

    def template(sk, gap):
        delta_t = sens_whitened_tensor(ctx.with_lower_bounds(sk))
        return sens_decomposition_output(delta_t, k, gap)

    cal = calibrate_local_sensitivity(template, ctx.sigma_k, ctx.gamma_s, n, p1.epsilon, p1.delta,
                               p1p.epsilon, p1p.delta, mech=p7,
                               seed=streams["calibration"], ledger=ledger, label="e7")
    ledger.charge("e8", p8.epsilon, p8.delta)
    sigma8 = sens_m2(alpha0, n) * p8.tau
    rng7 = make_rng(streams["e7"])
    releases = {EdgeId.E7: (perturb(factors.vectors, cal.noise_sigma, rng7, symmetric=False),
                            perturb(factors.eigenvalues, cal.noise_sigma, rng7))}
    releases[EdgeId.E8], _ = _private_whitening(moments.m2, k, sigma8, streams["e8"])
    delta_t = sens_whitened_tensor(ctx.with_lower_bounds(cal.sigma_k_tilde))
    diag.update({"sigma_k_hat": cal.sigma_k_hat, "sigma_k_tilde": cal.sigma_k_tilde,
                 "gamma_s_hat": cal.gap_hat, "gamma_s_tilde": cal.gap_tilde,
                 "local_sensitivity": cal.local_sensitivity,
                 "noise_sigma": {"e7": cal.noise_sigma, "e8": sigma8},
                 "decomposition_bound_applies": decomposition_bound_applies(
                     delta_t, k, cal.gap_tilde, ctx.sigma1_T)})
    model = postprocess(ConfigId.CONFIG3, releases, k, alpha0, seed, diag)
    return FitReport(ConfigId.CONFIG3, model, ledger, diag, releases)


def fit_config4(corpus, k, alpha0, budget, seed=0, allow_large_epsilon=False,
                moments=None, max_dim=MAX_TENSOR_DIM):
    """Noise the final topic-word matrix and prior (e9)."""
    moments = _prepare(corpus, k, alpha0, moments, max_dim)
    n = _n_docs(corpus, moments)
    streams = _streams(seed)
    p1, p1p, p9 = (_budget_params(budget, e, allow_large_epsilon)
                   for e in ("sigma_k", "gamma_s", "e9"))
    ledger = BudgetLedger()
    diag = {}
    wh, _, factors = _clean_fit(moments, k, alpha0, streams, diag)
    model = unwhiten(factors, wh, alpha0)
    ctx = _context(n, k, alpha0, wh, factors)
    cal = calibrate_local_sensitivity(
        lambda sk, gap: sens_final_output(ctx.with_lower_bounds(sk, gap)),
        ctx.sigma_k, ctx.gamma_s, n, p1.epsilon, p1.delta, p1p.epsilon, p1p.delta,
        mech=p9, seed=streams["calibration"], ledger=ledger, label="e9")
    rng9 = make_rng(streams["e9"])
    releases = {EdgeId.E9: (perturb(model.mu, cal.noise_sigma, rng9, symmetric=False),
                            perturb(model.alpha, cal.noise_sigma, rng9))}
    diag.update({"sigma_k_hat": cal.sigma_k_hat, "sigma_k_tilde": cal.sigma_k_tilde,
                 "gamma_s_hat": cal.gap_hat, "gamma_s_tilde": cal.gap_tilde,
                 "local_sensitivity": cal.local_sensitivity,
                 "noise_sigma": {"e9": cal.noise_sigma}})
    out = postprocess(ConfigId.CONFIG4, releases, k, alpha0, seed, diag)
    return FitReport(ConfigId.CONFIG4, out, ledger, diag, releases)


def _n_docs(corpus, moments):
    if corpus is None:
        raise ValueError("private fits need the corpus size; pass the corpus")
    return corpus.n_docs


_FITTERS = {
    ConfigId.CONFIG1: fit_config1,
    ConfigId.CONFIG2: fit_config2,
    ConfigId.CONFIG3: fit_config3,
    ConfigId.CONFIG4: fit_config4,
}


def fit(corpus, k, alpha0, config=ConfigId.NONPRIVATE, budget=None, seed=0,
        allow_large_epsilon=False, moments=None, max_dim=MAX_TENSOR_DIM):
    """Dispatch to the non-private fit or one of the private configurations."""
    config = ConfigId.parse(config)
    if config is ConfigId.NONPRIVATE:
        return fit_nonprivate(corpus, k, alpha0, seed=seed, moments=moments, max_dim=max_dim)
    return _FITTERS[config](corpus, k, alpha0, budget, seed=seed,
                            allow_large_epsilon=allow_large_epsilon,
                            moments=moments, max_dim=max_dim)


def split_budget(config, epsilon, delta, fractions=None):
    """Spread a composite (epsilon, delta) over a configuration's slots.

    ``fractions`` defaults to an even split and must sum to 1 within 1e-12.
    Shares are ``Decimal``; the last slot takes the remainder, so the shares
    sum to the composite exactly.
    """
    slots = BUDGET_SLOTS[ConfigId.parse(config)]
    if not slots:
        return {}
    even = fractions is None
    if even:
        fractions = [1.0 / len(slots)] * len(slots)
    fractions = [float(f) for f in fractions]
    if len(fractions) != len(slots):
        raise ValueError(f"{config} has {len(slots)} budget slots, got {len(fractions)} fractions")
    if any(f <= 0 for f in fractions) or abs(sum(fractions) - 1) > 1e-12:
        raise ValueError("split fractions must be positive and sum to 1")
    with localcontext() as ctx:
        ctx.prec = 80
        exact = ([Decimal(1) / len(slots)] * len(slots) if even
                 else [_dec(f) for f in fractions])
        short = Context(prec=17)
        out = {}
        for total, pos in ((_dec(epsilon), 0), (_dec(delta), 1)):
            # round leading shares to 17 digits so the ledger sums stay short
            shares = [short.plus(total * f) for f in exact[:-1]]
            shares.append(total - sum(shares, Decimal(0)))
            for slot, share in zip(slots, shares):
                out.setdefault(slot, [None, None])[pos] = share
    return {slot: tuple(v) for slot, v in out.items()}
