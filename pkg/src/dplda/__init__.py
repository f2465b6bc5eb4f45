"""Differentially private spectral estimation of LDA topic models."""

from .corpus import (Corpus, LdaModel, drop_short, generate_synthetic, load_bow, load_model,
                     make_rng, random_model, save_bow, save_model, validate)
from .evaluation import (SweepRow, SweepSpec, dp_loglik, match_topics, recovery_error,
                         sweep)
from .exceptions import (CalibrationError, CorpusFormatError, DPLDAError, EigenvalueError,
                         PipelineError, RankDeficientError, ValidationError)
from .moments import empirical_moments, m1_hat, m2_hat, m3_hat, population_moments
from .pipeline import (ConfigId, FitReport, fit, fit_config1, fit_config2, fit_config3,
                       fit_config4, fit_nonprivate, split_budget)
from .privacy import BudgetLedger, PrivacyParams, compose, gaussian_sigma, perturb
from .sensitivity import EdgeId, SpectralContext
from .spectral import simultaneous_power, unwhiten, whiten, whiten_tensor

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
