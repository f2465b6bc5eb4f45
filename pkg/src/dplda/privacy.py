"""Noise mechanisms, simple-composition budget accounting, and the
data-dependent calibration that releases private lower bounds on sigma_k and
the eigen-gap before noising a local-sensitivity quantity."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from decimal import Decimal, localcontext
from typing import Callable, NamedTuple, Optional

import numpy as np

from .corpus import make_rng
from .exceptions import CalibrationError


def _dec(x):
    """Exact decimal of the shortest repr, so 0.1 is Decimal('0.1')."""
    return x if isinstance(x, Decimal) else Decimal(repr(float(x)))


@dataclass(frozen=True)
class PrivacyParams:
    """(epsilon, delta) for one mechanism invocation.

    The classical Gaussian calibration is only proven for epsilon <= 1;
    ``allow_large_epsilon`` lifts that check. Values may be ``Decimal`` so
    that ledger charges keep the exact amounts supplied; arithmetic uses
    their float value.
    """

    epsilon: float
    delta: float
    allow_large_epsilon: bool = False

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if not 0 <= self.delta < 1:
            raise ValueError(f"delta must lie in [0, 1), got {self.delta}")

    @property
    def tau(self):
        """Noise multiplier ``sqrt(2 ln(1.25/delta)) / epsilon``."""
        if self.delta <= 0:
            raise ValueError("the Gaussian mechanism needs delta > 0")
        if self.epsilon > 1 and not self.allow_large_epsilon:
            raise ValueError("classical Gaussian mechanism requires epsilon <= 1 "
                             "(set allow_large_epsilon to override)")
        return math.sqrt(2 * math.log(1.25 / float(self.delta))) / float(self.epsilon)


def gaussian_sigma(delta_f, p):
    """Standard deviation of the Gaussian mechanism for l2 sensitivity ``delta_f``."""
    if delta_f < 0:
        raise ValueError("sensitivity must be nonnegative")
    return delta_f * p.tau


def laplace_scale(delta_f, epsilon):
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if delta_f < 0:
        raise ValueError("sensitivity must be nonnegative")
    return delta_f / float(epsilon)


def laplace_quantile(u, scale):
    """Inverse CDF of Laplace(0, scale) at ``u`` in (0, 1)."""
    u = np.asarray(u, dtype=float)
    centered = u - 0.5
    return -scale * np.sign(centered) * np.log1p(-2 * np.abs(centered))


def sample_laplace(scale, rng, size=None):
    """Laplace draws by inverse CDF of ``rng.random``; tests can force quantiles
    through ``laplace_quantile``."""
    return laplace_quantile(rng.random(size), scale)


def perturb(value, sigma, seed=None, symmetric=True):
    """Add i.i.d. Gaussian noise, preserving symmetry classes.

    Vectors get independent noise per entry. With ``symmetric=True`` a matrix
    gets noise on its upper triangle (diagonal included) mirrored below, and a
    3-tensor gets one draw per index multiset ``i <= j <= l`` copied to all
    permutations. With ``symmetric=False`` every entry is independent.
    """
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    value = np.asarray(value, dtype=float)
    rng = make_rng(seed)
    if value.ndim <= 1 or not symmetric:
        return value + sigma * rng.standard_normal(value.shape)
    n = value.shape[0]
    if value.ndim == 2:
        if value.shape != (n, n):
            raise ValueError("symmetric matrix noise needs a square matrix")
        iu = np.triu_indices(n)
        noise = np.zeros((n, n))
        noise[iu] = rng.standard_normal(iu[0].size)
        noise = noise + np.triu(noise, 1).T
        return value + sigma * noise
    if value.ndim == 3:
        if value.shape != (n, n, n):
            raise ValueError("symmetric tensor noise needs a cubical tensor")
        i, j, l = np.meshgrid(np.arange(n), np.arange(n), np.arange(n), indexing="ij")
        canon = (i <= j) & (j <= l)
        ci, cj, cl = i[canon], j[canon], l[canon]
        draws = rng.standard_normal(ci.size)
        noise = np.zeros((n, n, n))
        for a, b, c in ((ci, cj, cl), (ci, cl, cj), (cj, ci, cl),
                        (cj, cl, ci), (cl, ci, cj), (cl, cj, ci)):
            noise[a, b, c] = draws
        return value + sigma * noise
    raise ValueError(f"unsupported array rank {value.ndim}")


class Charge(NamedTuple):
    label: str
    epsilon: Decimal
    delta: Decimal


@dataclass
class BudgetLedger:
    """Ordered (label, epsilon, delta) charges under simple composition.

    Amounts are held as ``Decimal`` so totals are exact sums of the values
    the caller supplied.
    """

    charges: list = field(default_factory=list)

    def charge(self, label, epsilon, delta):
        c = Charge(str(label), _dec(epsilon), _dec(delta))
        self.charges.append(c)
        return c

    def extend(self, charges):
        for c in charges:
            self.charge(*c)

    @property
    def totals(self):
        return compose(self)

    def labels(self):
        return [c.label for c in self.charges]

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["label", "epsilon", "delta"])
        for c in self.charges:
            writer.writerow([c.label, str(c.epsilon), str(c.delta)])
        eps, delta = self.totals
        writer.writerow(["total", str(eps), str(delta)])
        return buf.getvalue()

    def __len__(self):
        return len(self.charges)


def compose(ledger):
    """Simple composition: sum of epsilons and sum of deltas."""
    charges = ledger.charges if isinstance(ledger, BudgetLedger) else ledger
    with localcontext() as ctx:
        ctx.prec = 100
        eps = sum((_dec(c[1]) for c in charges), Decimal(0))
        delta = sum((_dec(c[2]) for c in charges), Decimal(0))
    return eps, delta


def lower_bound_shift(N, epsilon, delta):
    """Margin ``(2 / (N eps)) ln(1 / (2 delta))`` subtracted from a Laplace release."""
    if not 0 < delta < 0.5:
        raise ValueError("calibration delta must lie in (0, 1/2)")
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    epsilon, delta = float(epsilon), float(delta)
    return 2 / (N * epsilon) * math.log(1 / (2 * delta))


def private_lower_bound(value, N, epsilon, delta, rng=None, draw=None):
    """Release ``value + Lap(1/(N eps))`` and a high-probability lower bound.

    ``draw`` fixes the Laplace sample (for tests); otherwise it comes from
    ``rng``. Returns ``(released, lower_bound)``.
    """
    shift = lower_bound_shift(N, epsilon, delta)
    if draw is None:
        draw = float(sample_laplace(laplace_scale(1 / N, epsilon), make_rng(rng)))
    released = value + draw
    return released, max(0.0, released - shift)


@dataclass(frozen=True)
class CalibrationResult:
    sigma_k_tilde: float
    gap_tilde: Optional[float]
    local_sensitivity: float
    noise_sigma: float
    charges: tuple
    sigma_k_hat: float = None
    gap_hat: Optional[float] = None


def calibrate_local_sensitivity(ls_template: Callable, sigma_k, gamma_s, N, eps1, del1,
                         eps1p=None, del1p=None, mech: PrivacyParams = None,
                         seed=None, ledger=None, label="mechanism",
                         draws=None):
    """Noise scale from privately released lower bounds of sigma_k (and gamma_s).

    ``ls_template(sigma_k, gamma_s)`` must be nonincreasing in both arguments
    so that lower bounds give an upper bound on the local sensitivity. When
    ``gamma_s`` is None only sigma_k is released. If ``ledger`` is given it is
    charged with the calibration releases and then the mechanism.

    Raises
    ------
    CalibrationError
        When a released lower bound is zero, i.e. the local sensitivity bound
        is infinite.
    """
    if mech is None:
        raise ValueError("mech privacy parameters are required")
    rng = make_rng(seed)
    draws = draws or (None, None)
    charges = [Charge("sigma_k", _dec(eps1), _dec(del1))]
    sk_hat, sk_tilde = private_lower_bound(sigma_k, N, eps1, del1, rng, draw=draws[0])
    gap_hat = gap_tilde = None
    if gamma_s is not None:
        if eps1p is None or del1p is None:
            raise ValueError("eps1p and del1p are required to release gamma_s")
        charges.append(Charge("gamma_s", _dec(eps1p), _dec(del1p)))
        gap_hat, gap_tilde = private_lower_bound(gamma_s, N, eps1p, del1p, rng, draw=draws[1])
    if ledger is not None:
        ledger.extend(charges)
        ledger.charge(label, mech.epsilon, mech.delta)
    if sk_tilde <= 0:
        raise CalibrationError("calibration collapsed: lower bound hit zero (sigma_k)")
    if gap_tilde is not None and gap_tilde <= 0:
        raise CalibrationError("gap lower bound hit zero")
    ls = ls_template(sk_tilde, gap_tilde)
    return CalibrationResult(sigma_k_tilde=sk_tilde, gap_tilde=gap_tilde,
                             local_sensitivity=ls,
                             noise_sigma=gaussian_sigma(ls, mech),
                             charges=tuple(charges), sigma_k_hat=sk_hat, gap_hat=gap_hat)
