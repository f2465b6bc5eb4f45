"""Unbiased LDA moment estimators and their population counterparts.

Per-document summaries (``doc_moments``) are the probabilities that one, two
or three distinct tokens drawn without replacement from the document take
given word values. The LDA estimators average those summaries and subtract
cross-document correction terms weighted by functions of ``alpha0``.

All dense third-order tensors are materialized, so the vocabulary size is
capped by ``MAX_TENSOR_DIM`` unless the caller raises it explicitly.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from itertools import permutations

import numpy as np

MAX_TENSOR_DIM = 256
# documents per block when accumulating sum_n w_n x_n (x) x_n (x) x_n
_CHUNK_ENTRIES = 4_000_000


@dataclass(frozen=True)
class MomentTriple:
    m1: np.ndarray
    m2: np.ndarray
    m3: np.ndarray


def symmetrize(tensor):
    """Average an array over all permutations of its axes."""
    axes = list(permutations(range(tensor.ndim)))
    out = np.zeros_like(tensor, dtype=float)
    for perm in axes:
        out += np.transpose(tensor, perm)
    return out / len(axes)


def _outer3(a, b, c):
    return np.einsum("i,j,k->ijk", a, b, c)


def doc_moments(c, order):
    """Distinct-token moment of one count vector.

    ``order=1`` gives ``c / l``; ``order=2`` the probability matrix of an
    ordered pair of distinct tokens; ``order=3`` the probability tensor of an
    ordered triple of distinct tokens.
    """
    c = np.asarray(c, dtype=float)
    l = c.sum()
    if order not in (1, 2, 3):
        raise ValueError(f"order must be 1, 2 or 3, got {order}")
    if l < order:
        raise ValueError(f"insufficient tokens: document length {l:g} < order {order}")
    if order == 1:
        return c / l
    if order == 2:
        return (np.outer(c, c) - np.diag(c)) / (l * (l - 1))
    return _triple_numerator(c) / (l * (l - 1) * (l - 2))


def _triple_numerator(c):
    d = c.shape[0]
    t = _outer3(c, c, c)
    cc = np.outer(c, c)
    idx = np.arange(d)
    # -sum_{i,j} c_i c_j (e_i e_i e_j + e_i e_j e_j + e_j e_i e_j)
    t[idx, idx, :] -= cc
    t[:, idx, idx] -= cc
    t[idx, :, idx] -= cc.T
    t[idx, idx, idx] += 2 * c
    return t


class DocMoments:
    """Lazily computed single-document moments of a count vector."""

    def __init__(self, c):
        self.c = np.asarray(c, dtype=float)

    @cached_property
    def m1(self):
        return doc_moments(self.c, 1)

    @cached_property
    def m2(self):
        return doc_moments(self.c, 2)

    @cached_property
    def m3(self):
        return doc_moments(self.c, 3)


def _counts(corpus):
    x = np.asarray(corpus.counts, dtype=float)
    return x, x.sum(axis=1)


def _weighted_cube(x, w):
    """sum_n w_n x_n (x) x_n (x) x_n, accumulated in fixed document order."""
    n, d = x.shape
    out = np.zeros((d, d * d))
    step = max(1, _CHUNK_ENTRIES // (d * d))
    for start in range(0, n, step):
        xb = x[start:start + step]
        pairs = (xb[:, :, None] * xb[:, None, :]).reshape(xb.shape[0], d * d)
        out += (xb * w[start:start + step, None]).T @ pairs
    return out.reshape(d, d, d)


def _check_dim(d, max_dim):
    if d > max_dim:
        raise ValueError(
            f"vocabulary size {d} exceeds the dense third-moment guard max_dim={max_dim}")


def m1_hat(corpus):
    x, l = _counts(corpus)
    return (x / l[:, None]).mean(axis=0)


def _sum_doc_m2(x, l):
    w = 1.0 / (l * (l - 1))
    return (x * w[:, None]).T @ x - np.diag(w @ x)


def _sum_doc_m3(x, l, max_dim):
    """sum_n of the per-document third moments."""
    n, d = x.shape
    _check_dim(d, max_dim)
    w = 1.0 / (l * (l - 1) * (l - 2))
    t = _weighted_cube(x, w)
    r = (x * w[:, None]).T @ x
    idx = np.arange(d)
    t[idx, idx, :] -= r
    t[:, idx, idx] -= r
    t[idx, :, idx] -= r.T
    t[idx, idx, idx] += 2 * (w @ x)
    return t


def m2_hat(corpus, alpha0):
    """Unbiased estimator of the LDA second moment.

    ``alpha0 = 0`` drops the cross-document correction.
    """
    if alpha0 < 0:
        raise ValueError("alpha0 must be nonnegative")
    x, l = _counts(corpus)
    n = x.shape[0]
    if n < 2:
        raise ValueError("cross term undefined: need at least 2 documents")
    p = x / l[:, None]
    s1 = p.sum(axis=0)
    cross = np.outer(s1, s1) - p.T @ p
    a = alpha0 / (alpha0 + 1)
    m2 = _sum_doc_m2(x, l) / n - a * cross / (n * (n - 1))
    return (m2 + m2.T) / 2


def m3_hat(corpus, alpha0, max_dim=MAX_TENSOR_DIM):
    """Unbiased estimator of the LDA third moment.

    The distinct-triple sum over documents uses the inclusion-exclusion
    expansion ``S^3 - (three mixed pair terms) + 2 Q`` so the cost stays
    linear in the number of documents.
    """
    if alpha0 < 0:
        raise ValueError("alpha0 must be nonnegative")
    x, l = _counts(corpus)
    n, d = x.shape
    if n < 3:
        raise ValueError("distinct-triple term undefined: need at least 3 documents")
    _check_dim(d, max_dim)
    p = x / l[:, None]
    s1 = p.sum(axis=0)

    first = _sum_doc_m3(x, l, max_dim) / n

    # B1 = b/(N(N-1)) [ (sum M2^n) (x) (sum M1^n) - sum_n M2^n (x) M1^n ]
    sum_m2 = _sum_doc_m2(x, l)
    # M2^n (x) M1^n = (c c^T - diag c) (x) c / (l^2 (l-1))
    w = 1.0 / (l * l * (l - 1))
    paired = _weighted_cube(x, w)
    r = (x * w[:, None]).T @ x
    idx = np.arange(d)
    paired[idx, idx, :] -= r
    b_coef = -alpha0 / (alpha0 + 2)
    b1 = b_coef * (np.einsum("ij,k->ijk", sum_m2, s1) - paired) / (n * (n - 1))
    b2 = np.transpose(b1, (0, 2, 1))
    b3 = np.transpose(b1, (1, 2, 0))

    # sum over distinct (n, m, p) of M1^n (x) M1^m (x) M1^p
    pp = p.T @ p
    distinct = (_outer3(s1, s1, s1)
                - np.einsum("ij,k->ijk", pp, s1)
                - np.einsum("i,jk->ijk", s1, pp)
                - np.einsum("ik,j->ijk", pp, s1)
                + 2 * _weighted_cube(p, np.ones(n)))
    c_coef = 2 * alpha0 ** 2 / ((alpha0 + 1) * (alpha0 + 2))
    b = c_coef * distinct / (n * (n - 1) * (n - 2))

    return symmetrize(first + b1 + b2 + b3 + b)


def empirical_moments(corpus, alpha0, max_dim=MAX_TENSOR_DIM):
    return MomentTriple(m1_hat(corpus), m2_hat(corpus, alpha0),
                        m3_hat(corpus, alpha0, max_dim=max_dim))


def population_moments(model):
    """Exact LDA moments of a model: weighted sums of rank-one terms."""
    a = model.alpha
    a0 = model.alpha0
    mu = model.mu
    m1 = mu @ (a / a0)
    m2 = (mu * (a / (a0 * (a0 + 1)))) @ mu.T
    w3 = 2 * a / (a0 * (a0 + 1) * (a0 + 2))
    m3 = np.einsum("r,ir,jr,kr->ijk", w3, mu, mu, mu)
    return MomentTriple(m1, m2, m3)


def dirichlet_moments(alpha):
    """First three raw moments of ``theta ~ Dirichlet(alpha)``."""
    alpha = np.asarray(alpha, dtype=float)
    if np.any(alpha <= 0):
        raise ValueError("Dirichlet parameters must be positive")
    a0 = alpha.sum()
    k = alpha.shape[0]
    first = alpha / a0
    second = (np.outer(alpha, alpha) + np.diag(alpha)) / (a0 * (a0 + 1))
    eye = np.eye(k)
    third = (_outer3(alpha, alpha, alpha)
             + np.einsum("t,ti,tj,k->ijk", alpha, eye, eye, alpha)
             + np.einsum("t,i,tj,tk->ijk", alpha, alpha, eye, eye)
             + np.einsum("t,ti,j,tk->ijk", alpha, eye, alpha, eye))
    idx = np.arange(k)
    third[idx, idx, idx] += 2 * alpha
    third /= a0 * (a0 + 1) * (a0 + 2)
    return first, second, third
