"""Closed-form sensitivities for each noised quantity of the spectral pipeline.

Global sensitivities (``sens_m2``, ``sens_m3``, ``sens_sigma_k``,
``sens_gap``, ``sens_suffstats``) depend only on public quantities. Local
sensitivities take a ``SpectralContext`` holding the data-dependent spectra;
callers that need a DP guarantee must fill it with privately released lower
bounds (see ``privacy.calibrate_local_sensitivity``).

Adjacency is replacement of one document.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np


class EdgeId(enum.Enum):
    """Edges of the spectral computation graph."""

    E0 = "e0"  # counts -> M2
    E1 = "e1"  # counts -> M3
    E2 = "e2"  # M2 -> SVD
    E3 = "e3"  # M3 -> whitened tensor
    E4 = "e4"  # W -> whitened tensor
    E5 = "e5"  # SVD -> W pseudo-inverse
    E6 = "e6"  # whitened tensor -> decomposition
    E7 = "e7"  # decomposition -> un-whitening
    E8 = "e8"  # W pseudo-inverse -> un-whitening
    E9 = "e9"  # un-whitening -> released model

    def __str__(self):
        return self.value


NOISABLE_EDGES = frozenset({EdgeId.E3, EdgeId.E4, EdgeId.E6, EdgeId.E7, EdgeId.E8, EdgeId.E9})


@dataclass(frozen=True)
class SpectralContext:
    """Data-dependent quantities that local sensitivities depend on.

    ``sigma_*`` are eigenvalues of the second moment; ``gamma_s`` is a quarter
    of the smallest consecutive gap of the whitened tensor's eigenvalues
    (with a trailing 0 appended) and ``sigma1_T`` the largest of them.
    """

    N: int
    k: int
    d: int
    alpha0: float
    sigma_k: float
    sigma_k1: float = 0.0
    sigma_1: float = 0.0
    gamma_s: float = 0.0
    sigma1_T: float = 0.0

    def __post_init__(self):
        vals = (self.alpha0, self.sigma_k, self.sigma_k1, self.sigma_1,
                self.gamma_s, self.sigma1_T)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("all context entries must be finite")
        if self.N < 3:
            raise ValueError("N must be at least 3")
        if self.sigma_k1 < 0 or self.sigma_k < self.sigma_k1:
            raise ValueError("need sigma_k >= sigma_k1 >= 0")
        if self.gamma_s < 0:
            raise ValueError("gamma_s must be nonnegative")

    def with_lower_bounds(self, sigma_k, gamma_s=None):
        """Substitute released lower bounds; ``sigma_k1`` drops to 0 since it
        is never released."""
        return replace(self, sigma_k=sigma_k, sigma_k1=0.0,
                       gamma_s=self.gamma_s if gamma_s is None else gamma_s)


def eigengap(eigenvalues):
    """``min_i (s_i - s_{i+1}) / 4`` over descending values with ``s_{k+1} = 0``."""
    s = np.sort(np.asarray(eigenvalues, dtype=float))[::-1]
    s = np.append(s, 0.0)
    return float(np.min(s[:-1] - s[1:]) / 4)


def sens_m2(alpha0, N):
    if N < 2:
        raise ValueError("sens_m2 needs N >= 2")
    return 2 / N + 4 * alpha0 / ((alpha0 + 1) * N)


def sens_m3(alpha0, N):
    if N < 3:
        raise ValueError("sens_m3 needs N >= 3")
    return (2 / N + 4 * alpha0 / ((alpha0 + 2) * N)
            + 12 * alpha0 ** 2 / ((alpha0 + 1) * (alpha0 + 2)) * (N - 1) / (N * (N - 2)))


def m3_l1_bound(alpha0, N):
    """Upper bound on the entrywise l1 norm of the third-moment estimator."""
    return (1 + 6 * alpha0 / (alpha0 + 2) * N / (N - 1)
            + 6 * alpha0 ** 2 / ((alpha0 + 1) * (alpha0 + 2))
            * N ** 3 / (N * (N - 1) * (N - 2)))


def sens_whitened_tensor(ctx):
    """l1 local sensitivity of the whitened tensor."""
    half = 0.5 * (ctx.sigma_k + ctx.sigma_k1)
    if ctx.sigma_k <= 0 or half <= 0:
        raise ValueError("whitening sensitivity undefined: degenerate spectrum")
    s2 = sens_m2(ctx.alpha0, ctx.N)
    s3 = sens_m3(ctx.alpha0, ctx.N)
    w_shift = (2 * ctx.k) ** 1.5 * s2 ** 3 / (ctx.sigma_k * math.sqrt(half)) ** 3
    return m3_l1_bound(ctx.alpha0, ctx.N) * w_shift + s3 * ctx.k ** 1.5 / half ** 1.5


def sens_decomposition_output(delta_T, k, gamma_s):
    """l2 sensitivity of each decomposition output (vector or eigenvalue).

    Valid while ``delta_T <= gamma_s * sigma_1(T) / (2 sqrt(k))``; see
    ``decomposition_bound_applies``.
    """
    if gamma_s <= 0:
        raise ValueError("eigen-gap collapsed: gamma_s must be positive")
    return 2 * math.sqrt(k) * delta_T / gamma_s


def decomposition_bound_applies(delta_T, k, gamma_s, sigma_T):
    return delta_T <= gamma_s * sigma_T / (2 * math.sqrt(k))


def sens_final_output(ctx):
    """l2 local sensitivity of each recovered topic vector (and alpha_i)."""
    if ctx.alpha0 <= 0:
        raise ValueError("alpha0 must be positive")
    c = (ctx.alpha0 + 2) / (2 * math.sqrt((ctx.alpha0 + 1) * ctx.alpha0))
    s2 = sens_m2(ctx.alpha0, ctx.N)
    bar = sens_decomposition_output(sens_whitened_tensor(ctx), ctx.k, ctx.gamma_s)
    return (c * ctx.sigma1_T * math.sqrt(ctx.sigma_1) * bar
            + c * ctx.sigma1_T * math.sqrt(ctx.sigma_1) / ctx.sigma_k * s2
            + c * math.sqrt(ctx.sigma_1 + s2) * bar)


def sens_sigma_k(N):
    if N < 1:
        raise ValueError("N must be positive")
    return 2 / N


def sens_gap(N):
    if N < 1:
        raise ValueError("N must be positive")
    return 2 / N


def sens_suffstats(d, N):
    if N < 1:
        raise ValueError("N must be positive")
    return d / N
