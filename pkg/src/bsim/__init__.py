"""Bayesian single-index models for heterogeneous treatment effects.

Fits ``eta = m'x + g(beta'x, a)`` with ``||beta|| = 1`` by
Metropolis-within-Gibbs sampling and reports per-subject treatment benefit
indices and recommended arms.
"""

from .errors import BsimError, DataError, DomainError, NumericalError
from .expfam import Family

__version__ = "0.1.0"

__all__ = ["BsimError", "DataError", "DomainError", "NumericalError", "Family", "__version__"]
