"""Bag-of-words corpora and LDA models: I/O, validation and sampling.

Corpus files use a sparse triple format with 1-based indices::

    N d
    docId wordId count
    ...

Model files hold the topic-word matrix and Dirichlet prior::

    d k alpha0
    alpha_1
    ...
    alpha_k
    mu_11 ... mu_1k        (one line per word)
    ...
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .exceptions import CorpusFormatError, ValidationError

logger = logging.getLogger(__name__)

MIN_DOC_LENGTH = 3
MIN_DOCS = 3


def make_rng(seed):
    """Return a PCG64-backed ``numpy.random.Generator``.

    All stochastic code in the package goes through this helper so the bit
    generator is fixed (PCG64, 64-bit state) regardless of numpy defaults.
    Passing an existing Generator returns it unchanged.
    """
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.PCG64(seed))


@dataclass(frozen=True, eq=False)
class Corpus:
    """Immutable document-word count matrix.

    Parameters
    ----------
    vocab_size : int
        Vocabulary size ``d``.
    counts : ndarray of shape (N, d)
        Nonnegative integer counts; row ``n`` is the count vector of
        document ``n``.
    """

    vocab_size: int
    counts: np.ndarray = field(repr=False)

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if counts.ndim != 2:
            raise ValueError("counts must be a 2-d array")
        if counts.shape[1] != self.vocab_size:
            raise ValueError(
                f"counts has {counts.shape[1]} columns, vocab_size is {self.vocab_size}")
        if self.vocab_size < 1:
            raise ValueError("vocab_size must be positive")
        if counts.size and counts.min() < 0:
            raise ValueError("counts must be nonnegative")
        counts = counts.astype(np.int64, copy=True)
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @classmethod
    def from_docs(cls, vocab_size, docs):
        """Build a corpus from per-document ``{word: count}`` maps or dense rows."""
        counts = np.zeros((len(docs), vocab_size), dtype=np.int64)
        for n, doc in enumerate(docs):
            if isinstance(doc, dict):
                for w, c in doc.items():
                    if not 0 <= w < vocab_size:
                        raise IndexError(f"word index {w} out of range for d={vocab_size}")
                    counts[n, w] += c
            else:
                counts[n] = np.asarray(doc, dtype=np.int64)
        return cls(vocab_size, counts)

    @property
    def n_docs(self):
        return self.counts.shape[0]

    @property
    def lengths(self):
        return self.counts.sum(axis=1)

    @property
    def docs(self):
        """Sparse view: one ``{word: count}`` dict per document, zeros omitted."""
        return [{int(w): int(row[w]) for w in np.flatnonzero(row)} for row in self.counts]

    def __eq__(self, other):
        if not isinstance(other, Corpus):
            return NotImplemented
        return (self.vocab_size == other.vocab_size
                and np.array_equal(self.counts, other.counts))

    def __len__(self):
        return self.n_docs


@dataclass(frozen=True, eq=False)
class LdaModel:
    """Topic-word matrix ``mu`` (d x k, columns on the simplex) and prior ``alpha``."""

    mu: np.ndarray = field(repr=False)
    alpha: np.ndarray

    def __post_init__(self):
        mu = np.array(self.mu, dtype=float)
        alpha = np.array(self.alpha, dtype=float).reshape(-1)
        if mu.ndim != 2:
            raise ValueError("mu must be a d x k matrix")
        if mu.shape[1] != alpha.shape[0]:
            raise ValueError(f"mu has {mu.shape[1]} topics but alpha has {alpha.shape[0]}")
        if np.any(alpha <= 0) or not np.all(np.isfinite(alpha)):
            raise ValueError("all alpha_i must be positive and finite")
        if np.any(mu < 0) or not np.allclose(mu.sum(axis=0), 1.0, rtol=0, atol=1e-8):
            raise ValueError("each column of mu must lie on the probability simplex")
        mu.setflags(write=False)
        alpha.setflags(write=False)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "alpha", alpha)

    @property
    def alpha0(self):
        return float(self.alpha.sum())

    @property
    def d(self):
        return self.mu.shape[0]

    @property
    def k(self):
        return self.mu.shape[1]

    @property
    def weights(self):
        """Prior mean topic proportions ``alpha / alpha0``."""
        return self.alpha / self.alpha0

    def permuted(self, perm):
        perm = np.asarray(perm)
        return LdaModel(self.mu[:, perm], self.alpha[perm])


def random_model(k, d, alpha0, seed=None, concentration=0.1):
    """Draw a random LDA model.

    Topic columns are Dirichlet(concentration) draws, so small concentrations
    give bursty topics dominated by a handful of words. The prior ``alpha`` is
    ``alpha0`` times a Dirichlet(1) draw, which keeps the ``alpha_i`` distinct.
    """
    if k < 1 or d < 1:
        raise ValueError("k and d must be positive")
    if alpha0 <= 0:
        raise ValueError("alpha0 must be positive")
    rng = make_rng(seed)
    mu = rng.dirichlet(np.full(d, concentration), size=k).T
    # guard against all-zero underflow for tiny concentrations
    mu = np.maximum(mu, 0.0)
    mu /= mu.sum(axis=0, keepdims=True)
    weights = rng.dirichlet(np.ones(k))
    weights = np.maximum(weights, 1e-3)
    weights /= weights.sum()
    return LdaModel(mu, alpha0 * weights)


def generate_synthetic(model, n_docs, doc_len, seed=None):
    """Sample a corpus from the LDA generative process.

    Each document draws ``theta ~ Dirichlet(alpha)``; each token draws a topic
    ``z ~ Categorical(theta)`` and then a word from column ``z`` of ``mu``.
    Given ``theta`` the tokens are i.i.d. with word probabilities
    ``mu @ theta``, so the counts are drawn in one multinomial step, which has
    the same distribution as the token-by-token process.
    """
    if doc_len < MIN_DOC_LENGTH:
        raise ValueError(f"doc_len must be at least {MIN_DOC_LENGTH}, got {doc_len}")
    if n_docs < 1:
        raise ValueError("n_docs must be positive")
    rng = make_rng(seed)
    theta = rng.dirichlet(model.alpha, size=n_docs)
    probs = theta @ model.mu.T
    probs = np.maximum(probs, 0.0)
    probs /= probs.sum(axis=1, keepdims=True)
    counts = rng.multinomial(doc_len, probs)
    return Corpus(model.d, counts)


def validate(corpus):
    """Check that every document has at least 3 tokens and N >= 3."""
    lengths = corpus.lengths
    short = np.flatnonzero(lengths < MIN_DOC_LENGTH)
    if short.size:
        shown = ", ".join(str(i) for i in short[:20])
        more = "" if short.size <= 20 else f" (+{short.size - 20} more)"
        raise ValidationError(
            f"document too short for third moment: documents {shown}{more} "
            f"have fewer than {MIN_DOC_LENGTH} tokens", offending=short.tolist())
    if corpus.n_docs < MIN_DOCS:
        raise ValidationError(
            f"corpus too small for distinct-triple terms: N={corpus.n_docs} < {MIN_DOCS}")
    return corpus


def drop_short(corpus):
    """Return ``(corpus without documents shorter than 3 tokens, n_dropped)``."""
    keep = corpus.lengths >= MIN_DOC_LENGTH
    n_dropped = int((~keep).sum())
    if n_dropped:
        logger.info("dropped %d documents with fewer than %d tokens",
                    n_dropped, MIN_DOC_LENGTH)
    return Corpus(corpus.vocab_size, corpus.counts[keep]), n_dropped


def _data_lines(path):
    with open(path, encoding="ascii") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if line and not line.startswith("#"):
                yield lineno, line


def load_bow(path):
    """Read a corpus in sparse triple format.

    The header declares ``N d``; document ids must not exceed ``N``. Only
    documents that have at least one entry are kept, in order of first
    appearance, and repeated ``(doc, word)`` entries are summed.
    """
    lines = _data_lines(path)
    try:
        lineno, header = next(lines)
    except StopIteration:
        raise CorpusFormatError("empty file, expected header 'N d'", 1) from None
    parts = header.split()
    if len(parts) != 2:
        raise CorpusFormatError(f"expected header 'N d', got {header!r}", lineno)
    try:
        n_declared, d = int(parts[0]), int(parts[1])
    except ValueError:
        raise CorpusFormatError(f"non-integer header {header!r}", lineno) from None
    if n_declared < 0 or d < 1:
        raise CorpusFormatError(f"invalid header values N={n_declared}, d={d}", lineno)

    order = {}
    rows = []
    for lineno, line in lines:
        parts = line.split()
        if len(parts) != 3:
            raise CorpusFormatError(f"expected 'docId wordId count', got {line!r}", lineno)
        try:
            doc_id, word_id, count = (int(p) for p in parts)
        except ValueError:
            raise CorpusFormatError(f"non-integer field in {line!r}", lineno) from None
        if not 1 <= doc_id <= n_declared:
            raise CorpusFormatError(
                f"document id {doc_id} outside 1..{n_declared}", lineno)
        if not 1 <= word_id <= d:
            raise CorpusFormatError(f"word index {word_id} outside 1..{d}", lineno)
        if count < 0:
            raise CorpusFormatError(f"negative count {count}", lineno)
        if count == 0:
            continue
        if doc_id not in order:
            order[doc_id] = len(order)
            rows.append(np.zeros(d, dtype=np.int64))
        rows[order[doc_id]][word_id - 1] += count

    if not rows:
        raise CorpusFormatError("N=0: file contains no documents")
    return Corpus(d, np.vstack(rows))


def save_bow(corpus, path):
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"{corpus.n_docs} {corpus.vocab_size}\n")
        for n, row in enumerate(corpus.counts, start=1):
            for w in np.flatnonzero(row):
                fh.write(f"{n} {w + 1} {row[w]}\n")


def save_model(model, path):
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"{model.d} {model.k} {model.alpha0!r}\n")
        for a in model.alpha:
            fh.write(f"{float(a)!r}\n")
        for row in model.mu:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def load_model(path):
    lines = list(_data_lines(path))
    if not lines:
        raise CorpusFormatError("empty model file", 1)
    lineno, header = lines[0]
    parts = header.split()
    if len(parts) != 3:
        raise CorpusFormatError(f"expected header 'd k alpha0', got {header!r}", lineno)
    try:
        d, k, alpha0 = int(parts[0]), int(parts[1]), float(parts[2])
    except ValueError:
        raise CorpusFormatError(f"malformed header {header!r}", lineno) from None
    if len(lines) != 1 + k + d:
        raise CorpusFormatError(
            f"expected {1 + k + d} data lines for d={d}, k={k}, found {len(lines)}")
    try:
        alpha = np.array([float(line) for _, line in lines[1:1 + k]])
    except ValueError as exc:
        raise CorpusFormatError(f"malformed alpha value: {exc}") from None
    mu = np.empty((d, k))
    for i, (lineno, line) in enumerate(lines[1 + k:]):
        vals = line.split()
        if len(vals) != k:
            raise CorpusFormatError(f"expected {k} values, got {len(vals)}", lineno)
        try:
            mu[i] = [float(v) for v in vals]
        except ValueError:
            raise CorpusFormatError(f"non-numeric value in {line!r}", lineno) from None
    if not np.isclose(alpha.sum(), alpha0, rtol=1e-9, atol=0):
        raise CorpusFormatError(
            f"alpha sums to {alpha.sum()!r}, header declares alpha0={alpha0!r}")
    try:
        return LdaModel(mu, alpha)
    except ValueError as exc:
        raise CorpusFormatError(str(exc)) from None
