"""Whitening, multilinear tensor whitening, simultaneous power iteration and
un-whitening back to LDA parameters."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np

from .corpus import LdaModel, make_rng
from .exceptions import EigenvalueError, RankDeficientError
from .moments import symmetrize

logger = logging.getLogger(__name__)

RANK_TOL = 1e-12


@dataclass(frozen=True)
class Whitening:
    """Rank-k whitening of a second moment.

    Attributes
    ----------
    W : ndarray (d, k)
        ``U_k diag(s_k)^{-1/2}``.
    Wpinv : ndarray (k, d)
        ``diag(s_k)^{1/2} U_k^T``, the un-whitening matrix.
    singular_values : ndarray (k + 1,)
        Leading eigenvalues of the source matrix, descending; the last entry
        is 0 when ``k == d``.
    """

    W: np.ndarray
    Wpinv: np.ndarray
    singular_values: np.ndarray

    @property
    def k(self):
        return self.W.shape[1]


@dataclass(frozen=True)
class SpectralFactors:
    vectors: np.ndarray
    eigenvalues: np.ndarray
    iterations: int
    residual: float
    converged: bool = True

    @property
    def k(self):
        return self.eigenvalues.shape[0]

    def reconstruct(self):
        return np.einsum("r,ir,jr,kr->ijk", self.eigenvalues,
                         self.vectors, self.vectors, self.vectors)


def whiten(m2, k):
    """Whitening matrix from the top-k eigenpairs of a symmetric matrix.

    Eigenvalues are ordered algebraically, so a noisy input with negative
    eigenvalues never has them promoted into the whitened subspace.
    """
    m2 = np.asarray(m2, dtype=float)
    d = m2.shape[0]
    if m2.shape != (d, d):
        raise ValueError("m2 must be square")
    if not 1 <= k <= d:
        raise ValueError(f"k must be in 1..{d}, got {k}")
    vals, vecs = np.linalg.eigh((m2 + m2.T) / 2)
    order = np.argsort(vals)[::-1]
    vals, vecs = vals[order], vecs[:, order]
    top = vals[:k]
    if top[-1] <= RANK_TOL:
        raise RankDeficientError(
            f"rank deficient at k={k}: sigma_k={top[-1]:.3e}")
    u = vecs[:, :k]
    # fix eigenvector signs for reproducibility: largest-magnitude entry positive
    flip = np.sign(u[np.argmax(np.abs(u), axis=0), np.arange(k)])
    u = u * flip
    sv = np.append(top, vals[k] if k < d else 0.0)
    return Whitening(W=u / np.sqrt(top), Wpinv=(u * np.sqrt(top)).T,
                     singular_values=sv)


def whiten_tensor(m3, W):
    """Multilinear map ``m3(W, W, W)`` as three mode contractions."""
    m3 = np.asarray(m3, dtype=float)
    W = np.asarray(W, dtype=float)
    d = W.shape[0]
    if m3.shape != (d, d, d):
        raise ValueError(f"tensor shape {m3.shape} does not match W with {d} rows")
    t = np.tensordot(m3, W, axes=([2], [0]))   # (d, d, k)
    t = np.tensordot(t, W, axes=([1], [0]))    # (d, k, k)
    t = np.tensordot(t, W, axes=([0], [0]))    # (k, k, k)
    # contractions above produce axes in order (l, j, i)
    return np.transpose(t, (2, 1, 0))


def is_symmetric(tensor, rtol=1e-8):
    scale = max(np.abs(tensor).max(), 1.0)
    for perm in ((1, 0, 2), (0, 2, 1), (2, 1, 0)):
        if np.abs(tensor - np.transpose(tensor, perm)).max() > rtol * scale:
            return False
    return True


def _orthonormalize(u):
    q, r = np.linalg.qr(u)
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs


def simultaneous_power(T, max_iters=500, tol=1e-10, seed=0, warn=True):
    """Recover all components of an orthogonally decomposable symmetric tensor.

    Each column ``v_j`` of an orthonormal frame is mapped to ``T(I, v_j, v_j)``
    and the frame is re-orthonormalized by QR (nonnegative diagonal of R).
    Iteration stops when the frame, up to column signs, moves by at most ``tol``
    in Frobenius norm.
    A run that hits ``max_iters`` is returned with ``converged=False`` and,
    unless ``warn`` is false, a ``RuntimeWarning``.
    """
    T = np.asarray(T, dtype=float)
    k = T.shape[0]
    if T.shape != (k, k, k):
        raise ValueError("T must be a cubical 3-tensor")
    if not is_symmetric(T):
        raise ValueError("T must be symmetric under index permutations")
    rng = make_rng(seed)
    v = _orthonormalize(rng.standard_normal((k, k)))
    residual = np.inf
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        u = np.einsum("ijl,jr,lr->ir", T, v, v)
        v_new = _orthonormalize(u)
        # a column with negative T(v, v, v) flips sign every step; ignore that
        flip = np.sign(np.einsum("ir,ir->r", v_new, v))
        flip[flip == 0] = 1.0
        residual = float(np.linalg.norm(v_new * flip - v))
        v = v_new
        if residual <= tol:
            converged = True
            break
    if not converged and warn:
        warnings.warn(f"simultaneous power method did not converge in {max_iters} "
                      f"iterations (residual {residual:.3e})", RuntimeWarning, stacklevel=2)

    lam = np.einsum("ijl,ir,jr,lr->r", T, v, v, v)
    neg = lam < 0
    v[:, neg] *= -1
    lam[neg] *= -1
    order = np.argsort(-lam, kind="stable")
    return SpectralFactors(vectors=v[:, order], eigenvalues=lam[order],
                           iterations=it, residual=residual, converged=converged)


def eigen_scale(alpha0):
    """``(alpha0 + 2) / (2 sqrt((alpha0 + 1) alpha0))``: maps an eigenvalue to
    the inverse square root of the matching alpha_i."""
    if alpha0 <= 0:
        raise ValueError("alpha0 must be positive")
    return (alpha0 + 2) / (2 * np.sqrt((alpha0 + 1) * alpha0))


def project_columns_to_simplex(mu):
    """Clip negative entries to zero and renormalize each column to sum 1.

    A column with no positive mass becomes uniform.
    """
    mu = np.clip(np.asarray(mu, dtype=float), 0.0, None)
    sums = mu.sum(axis=0)
    empty = sums <= 0
    if np.any(empty):
        mu[:, empty] = 1.0
        sums = mu.sum(axis=0)
    return mu / sums


def unwhiten(factors, wh, alpha0):
    """Map whitened factors back to a topic-word matrix and Dirichlet prior."""
    lam = np.asarray(factors.eigenvalues, dtype=float)
    if np.any(lam <= 0) or not np.all(np.isfinite(lam)):
        raise EigenvalueError("non-positive eigenvalue; increase data or check k")
    raw = (wh.Wpinv.T @ factors.vectors) * (eigen_scale(alpha0) * lam)
    alpha = alpha_from_eigenvalues(lam, alpha0)
    alpha *= alpha0 / alpha.sum()
    return LdaModel(project_columns_to_simplex(raw), alpha)


def alpha_from_eigenvalues(eigenvalues, alpha0):
    """``4 (alpha0 + 1) alpha0 / ((alpha0 + 2)^2 lambda_i^2)``, before any
    rescaling to a fixed total."""
    lam = np.asarray(eigenvalues, dtype=float)
    return 1.0 / (eigen_scale(alpha0) * lam) ** 2


@dataclass(frozen=True)
class SpectralFit:
    model: LdaModel
    whitening: Whitening
    factors: SpectralFactors
    whitened_tensor: np.ndarray


def spectral_fit(m2, m3, k, alpha0, seed=0, max_iters=500, tol=1e-10):
    """Non-private spectral estimate from a pair of second/third moments."""
    wh = whiten(m2, k)
    t = whiten_tensor(m3, wh.W)
    t = symmetrize(t)
    factors = simultaneous_power(t, max_iters=max_iters, tol=tol, seed=seed)
    model = unwhiten(factors, wh, alpha0)
    return SpectralFit(model, wh, factors, t)

