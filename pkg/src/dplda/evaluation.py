"""Topic matching, recovery error, a privatized likelihood score and
epsilon-grid sweeps over the private configurations."""

from __future__ import annotations

import csv
import io
import logging
import math
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import linear_sum_assignment

from .corpus import generate_synthetic, load_bow, load_model, random_model
from .exceptions import DPLDAError
from .privacy import Charge, PrivacyParams, _dec, perturb
from .pipeline import BUDGET_SLOTS, ConfigId, fit, split_budget

logger = logging.getLogger(__name__)

LOG_FLOOR = 1e-12
# worst-case distance between two simplex vectors; stands in for failed fits
FAILED_FIT_ERROR = math.sqrt(2)
CSV_HEADER = ("config", "composite_eps", "split", "repeat", "mean_error",
              "dp_loglik", "wall_ms", "status")


def _check_shapes(estimated, truth):
    if estimated.mu.shape != truth.mu.shape:
        raise ValueError(f"model shapes differ: {estimated.mu.shape} vs {truth.mu.shape}")


def topic_distances(estimated, truth):
    """``D[i, j] = ||truth_i - estimated_j||_2`` over topic columns."""
    _check_shapes(estimated, truth)
    diff = truth.mu[:, :, None] - estimated.mu[:, None, :]
    return np.linalg.norm(diff, axis=0)


def match_topics(estimated, truth):
    """Permutation ``perm`` with estimated column ``perm[i]`` assigned to truth
    topic ``i``, minimizing the summed l2 distance."""
    rows, cols = linear_sum_assignment(topic_distances(estimated, truth))
    perm = np.empty_like(cols)
    perm[rows] = cols
    return perm


def recovery_error(estimated, truth):
    """Per-topic errors under the optimal matching, and their mean."""
    perm = match_topics(estimated, truth)
    per_topic = np.linalg.norm(truth.mu - estimated.mu[:, perm], axis=0)
    return per_topic, float(per_topic.mean())


def mixture_word_probs(model):
    return model.mu @ model.weights


def sufficient_statistic(corpus, model):
    """Expected topic-by-word token counts under the prior-mean mixture (k x d)."""
    if corpus.vocab_size != model.d:
        raise ValueError("corpus and model vocabularies differ")
    word_counts = np.asarray(corpus.counts, dtype=float).sum(axis=0)
    joint = (model.mu * model.weights).T          # (k, d)
    p = joint.sum(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        resp = np.where(p > 0, joint / p, 0.0)
    return resp * word_counts


def loglik_from_stat(stat, model, warn=True):
    p = mixture_word_probs(model)
    tokens = np.asarray(stat, dtype=float).sum(axis=0)
    if warn and np.any((p < LOG_FLOOR) & (tokens > 0)):
        warnings.warn("word with zero probability under every topic; log floored",
                      RuntimeWarning, stacklevel=3)
    return float(tokens @ np.log(np.maximum(p, LOG_FLOOR)))


def dp_loglik(corpus, model, p, seed=None, label="dp_loglik", warn=True):
    """Token log-likelihood computed from a Gaussian-noised sufficient statistic.

    Noise per entry is ``(d / N) * tau``; negatives are clipped before scoring.
    Returns ``(value, charge)`` where ``charge`` is the single budget entry spent.
    """
    stat = sufficient_statistic(corpus, model)
    sigma = corpus.vocab_size / corpus.n_docs * p.tau
    noisy = np.clip(perturb(stat, sigma, seed, symmetric=False), 0.0, None)
    value = loglik_from_stat(noisy, model, warn)
    return value, Charge(label, _dec(p.epsilon), _dec(p.delta))


@dataclass(frozen=True)
class SweepSpec:
    """Grid of composite budgets, configurations and budget splits.

    A split vector applies to every configuration with that many budget
    slots; configurations with no matching vector use an even split.
    """

    eps_grid: tuple
    delta: float
    configs: tuple
    splits: tuple = ()
    repeats: int = 1
    seed: int = 0
    dp_epsilon: float = 1.0
    dp_delta: float = 1e-5
    allow_large_epsilon: bool = True
    timing: bool = False
    workers: int = 1
    paired_noise: bool = False
    # data source: a corpus file, or a synthetic model
    corpus: str = None
    truth: str = None
    k: int = 3
    alpha0: float = 1.0
    d: int = 20
    docs: int = 1000
    doc_len: int = 30
    concentration: float = 0.1

    def __post_init__(self):
        if self.repeats < 1:
            raise ValueError("repeats must be at least 1")
        if not self.eps_grid or any(not e > 0 for e in self.eps_grid):
            raise ValueError("epsilon grid must be nonempty and positive")
        if not 0 < self.delta < 1:
            raise ValueError("composite delta must lie in (0, 1)")
        for split in self.splits:
            if any(f <= 0 for f in split) or abs(sum(split) - 1) > 1e-12:
                raise ValueError(f"split {split} must be positive and sum to 1")

    def splits_for(self, config):
        n = len(BUDGET_SLOTS[config])
        if n == 0:
            return [None]
        matching = [s for s in self.splits if len(s) == n]
        return matching or [tuple([1.0 / n] * n)]


@dataclass(frozen=True)
class SweepRow:
    config: ConfigId
    composite_eps: float
    split: tuple
    repeat: int
    mean_error: float
    dp_loglik: float
    wall_ms: int
    status: str

    @property
    def ok(self):
        return self.status == "ok"

    def csv_fields(self):
        return [str(self.config), repr(float(self.composite_eps)), format_split(self.split),
                str(self.repeat), _num(self.mean_error), _num(self.dp_loglik),
                str(self.wall_ms), self.status]


def format_split(split):
    return "none" if split is None else ":".join(repr(float(f)) for f in split)


def _num(x):
    return "" if x is None or (isinstance(x, float) and math.isnan(x)) else repr(float(x))


_KEYS = {
    "eps_grid": lambda v: tuple(float(x) for x in v.split(",")),
    "delta": float,
    "configs": lambda v: tuple(ConfigId.parse(x) for x in v.split(",")),
    "splits": lambda v: tuple(tuple(float(f) for f in s.split(":")) for s in v.split(";") if s.strip()),
    "repeats": int, "seed": int, "dp_epsilon": float, "dp_delta": float,
    "allow_large_epsilon": lambda v: v.strip().lower() in ("1", "true", "yes"),
    "timing": lambda v: v.strip().lower() in ("1", "true", "yes"),
    "paired_noise": lambda v: v.strip().lower() in ("1", "true", "yes"),
    "workers": int, "corpus": str, "truth": str, "k": int, "alpha0": float, "d": int,
    "docs": int, "doc_len": int, "concentration": float,
}


def parse_sweep_spec(text):
    """Parse ``key=value`` lines; ``#`` starts a comment.

    Lists use commas, split vectors use ``:`` between fractions and ``;``
    between vectors, e.g. ``splits=0.5:0.25:0.25;0.2:0.4:0.4``.
    """
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if not sep or key not in _KEYS:
            raise ValueError(f"sweep spec line {lineno}: unknown entry '{line}'")
        try:
            values[key] = _KEYS[key](value.strip())
        except (ValueError, KeyError) as exc:
            raise ValueError(f"sweep spec line {lineno}: bad value for {key}: {exc}") from None
    for required in ("eps_grid", "delta", "configs"):
        if required not in values:
            raise ValueError(f"sweep spec missing '{required}'")
    return SweepSpec(**values)


def load_sweep_spec(path):
    return parse_sweep_spec(Path(path).read_text())


def sweep_data(spec):
    """(corpus, truth or None) named by a spec; synthetic data uses ``spec.seed``."""
    if spec.corpus:
        corpus = load_bow(spec.corpus)
        truth = load_model(spec.truth) if spec.truth else None
        return corpus, truth
    seeds = np.random.SeedSequence(spec.seed).spawn(2)
    truth = random_model(spec.k, spec.d, spec.alpha0, seed=seeds[0],
                         concentration=spec.concentration)
    return generate_synthetic(truth, spec.docs, spec.doc_len, seed=seeds[1]), truth


def _cells(spec):
    """Grid cells in row order, each paired with its seed index.

    The seed index is the row position. With ``paired_noise`` it is the
    position the row would have at the first epsilon, so one repeat reuses
    the same standard-normal draws across the grid and only their scale moves.
    """
    cells = []
    for config in spec.configs:
        block_start = len(cells)
        splits = spec.splits_for(config)
        for e, eps in enumerate(spec.eps_grid):
            for s_i, split in enumerate(splits):
                for rep in range(spec.repeats):
                    index = len(cells)
                    if spec.paired_noise:
                        index = block_start + s_i * spec.repeats + rep
                    cells.append((index, (config, eps, split, rep)))
    return cells


def cell_seeds(spec, index):
    """(fit seed, likelihood seed) for the cell with seed index ``index``."""
    state = np.random.SeedSequence(spec.seed ^ index).generate_state(2)
    return int(state[0]), int(state[1])


def _run_cell(index, cell, corpus, truth, spec):
    config, eps, split, rep = cell
    fit_seed, ll_seed = cell_seeds(spec, index)
    start = time.perf_counter()
    mean_error = ll = float("nan")
    try:
        budget = split_budget(config, eps, spec.delta, split) if split else None
        report = fit(corpus, spec.k, spec.alpha0, config, budget, seed=fit_seed,
                     allow_large_epsilon=spec.allow_large_epsilon)
        if truth is not None:
            mean_error = recovery_error(report.model, truth)[1]
        ll, _ = dp_loglik(corpus, report.model,
                          PrivacyParams(spec.dp_epsilon, spec.dp_delta,
                                        spec.allow_large_epsilon), seed=ll_seed, warn=False)
        status = "ok"
    except DPLDAError as exc:
        status = f"failed:{type(exc).__name__}"
        logger.info("cell %d (%s, eps=%g) failed: %s", index, config, eps, exc)
    wall = int(round((time.perf_counter() - start) * 1000)) if spec.timing else 0
    return SweepRow(config, eps, split, rep, mean_error, ll, wall, status)


def sweep(spec, data=None, out=None):
    """Run every (config, epsilon, split, repeat) cell; optionally write CSV.

    ``data`` is a ``(corpus, truth)`` pair replacing the data named in ``spec``.
    Each cell is seeded with ``spec.seed ^ index`` (see ``_cells``), so rows do
    not depend on how many workers run.
    """
    corpus, truth = data if data is not None else sweep_data(spec)
    cells = _cells(spec)
    if spec.workers > 1:
        with ThreadPoolExecutor(spec.workers) as pool:
            rows = list(pool.map(lambda ic: _run_cell(ic[0], ic[1], corpus, truth, spec),
                                 cells))
    else:
        rows = [_run_cell(i, c, corpus, truth, spec) for i, c in cells]
    if out is not None:
        Path(out).write_text(rows_to_csv(rows))
    return rows


def rows_to_csv(rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for row in rows:
        writer.writerow(row.csv_fields())
    return buf.getvalue()


@dataclass
class CellSummary:
    config: ConfigId
    composite_eps: float
    split: tuple
    mean_error: float
    mean_loglik: float
    failures: int
    runs: int = field(default=0)


def summarize(rows):
    """Average repeats per (config, epsilon, split).

    Failed fits count as ``FAILED_FIT_ERROR`` in the error mean and are left
    out of the likelihood mean.
    """
    groups = {}
    for row in rows:
        groups.setdefault((row.config, row.composite_eps, row.split), []).append(row)
    out = []
    for (config, eps, split), members in groups.items():
        errors = [r.mean_error if r.ok else FAILED_FIT_ERROR for r in members]
        lls = [r.dp_loglik for r in members if r.ok]
        out.append(CellSummary(config, eps, split,
                               float(np.nanmean(errors)) if errors else float("nan"),
                               float(np.mean(lls)) if lls else float("-inf"),
                               sum(not r.ok for r in members), len(members)))
    return out


def best_splits(rows, truth_known):
    """Best split per (config, epsilon): least error with truth, else highest
    DP likelihood."""
    best = {}
    for s in summarize(rows):
        key = (s.config, s.composite_eps)
        if truth_known:
            better = key not in best or s.mean_error < best[key].mean_error
        else:
            better = key not in best or s.mean_loglik > best[key].mean_loglik
        if better:
            best[key] = s
    return best


def count_inversions(values):
    """Adjacent increases in a sequence expected to be nonincreasing."""
    return sum(b > a for a, b in zip(values, values[1:]))
