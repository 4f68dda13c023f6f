"""Exponential-family response models with canonical links.

Supports the gaussian (identity link), bernoulli (logit link) and poisson
(log link) families.  All functions accept scalars or numpy arrays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, gammaln, log1p

from .errors import DomainError

FAMILIES = ("gaussian", "bernoulli", "poisson")

# Mean-domain clamp used inside iterative fitting.
MU_EPS = 1e-10


@dataclass(frozen=True)
class Family:
    """A canonical-link exponential family.

    Parameters
    ----------
    kind : str
        One of ``"gaussian"``, ``"bernoulli"``, ``"poisson"``.
    dispersion : float
        Dispersion phi. Forced to 1 for bernoulli and poisson.
    """

    kind: str
    dispersion: float = 1.0

    def __post_init__(self):
        if self.kind not in FAMILIES:
            raise ValueError(f"unknown family {self.kind!r}; expected one of {FAMILIES}")
        if not np.isfinite(self.dispersion) or self.dispersion <= 0:
            raise ValueError("dispersion must be a positive finite number")
        if self.kind != "gaussian" and self.dispersion != 1.0:
            raise ValueError(f"{self.kind} family has dispersion fixed at 1")

    def with_dispersion(self, dispersion: float) -> "Family":
        return Family(self.kind, float(dispersion))

    # -- domain checks -------------------------------------------------
    def _check_mean(self, mu):
        mu = np.asarray(mu, dtype=float)
        if self.kind == "bernoulli":
            ok = (mu > 0) & (mu < 1)
        elif self.kind == "poisson":
            ok = mu > 0
        else:
            ok = np.isfinite(mu)
        if not np.all(ok):
            raise DomainError(f"mean outside the {self.kind} mean domain")
        return mu

    def clamp_mean(self, mu):
        """Clamp means away from the domain boundary (fitting safeguard)."""
        if self.kind == "bernoulli":
            return np.minimum(np.maximum(mu, MU_EPS), 1.0 - MU_EPS)
        if self.kind == "poisson":
            return np.maximum(mu, MU_EPS)
        return mu

    # -- link machinery ------------------------------------------------
    def link(self, mu):
        mu = self._check_mean(mu)
        if self.kind == "bernoulli":
            return np.log(mu) - log1p(-mu)
        if self.kind == "poisson":
            return np.log(mu)
        return mu

    def inverse_link(self, eta):
        eta = np.asarray(eta, dtype=float)
        if self.kind == "bernoulli":
            return expit(eta)
        if self.kind == "poisson":
            return np.exp(eta)
        return eta

    def link_derivative(self, mu):
        """h'(mu)."""
        mu = self._check_mean(mu)
        if self.kind == "bernoulli":
            return 1.0 / (mu * (1.0 - mu))
        if self.kind == "poisson":
            return 1.0 / mu
        return np.ones_like(mu)

    def variance(self, mu):
        """Variance function V(mu)."""
        mu = self._check_mean(mu)
        if self.kind == "bernoulli":
            return mu * (1.0 - mu)
        if self.kind == "poisson":
            return mu
        return np.ones_like(mu)

    # -- likelihood ----------------------------------------------------
    def cumulant(self, eta):
        """b(eta)."""
        eta = np.asarray(eta, dtype=float)
        if self.kind == "bernoulli":
            return np.logaddexp(0.0, eta)
        if self.kind == "poisson":
            return np.exp(eta)
        return 0.5 * eta**2

    def log_normalizer(self, y):
        """c(y, phi)."""
        y = np.asarray(y, dtype=float)
        if self.kind == "bernoulli":
            return np.zeros_like(y)
        if self.kind == "poisson":
            return -gammaln(y + 1.0)
        phi = self.dispersion
        return -0.5 * y**2 / phi - 0.5 * np.log(2.0 * np.pi * phi)

    def check_support(self, y):
        y = np.asarray(y, dtype=float)
        if not np.all(np.isfinite(y)):
            raise DomainError("response contains non-finite values")
        if self.kind == "bernoulli" and not np.all((y == 0) | (y == 1)):
            raise DomainError("bernoulli response must be coded 0/1")
        if self.kind == "poisson" and not np.all((y >= 0) & (y == np.floor(y))):
            raise DomainError("poisson response must be non-negative integers")
        return y

    def log_likelihood(self, y, eta) -> float:
        y = self.check_support(y)
        eta = np.asarray(eta, dtype=float)
        if y.shape != eta.shape:
            raise ValueError(f"y has shape {y.shape} but eta has shape {eta.shape}")
        phi = self.dispersion
        return float(np.sum((y * eta - self.cumulant(eta)) / phi + self.log_normalizer(y)))

    def working_quantities(self, y, eta):
        """Adjusted response and IWLS weights at ``eta``.

        Returns ``(z, w, mu)`` with ``z = h'(mu)(y - mu) + eta`` and
        ``w = 1 / (h'(mu)^2 V(mu))``.  Means are clamped first.
        """
        mu = self.clamp_mean(self.inverse_link(eta))
        if self.kind == "gaussian":
            return np.asarray(y, dtype=float).copy(), np.ones_like(mu), mu
        # canonical links: h'(mu) = 1 / V(mu), so w = V(mu)
        v = mu * (1.0 - mu) if self.kind == "bernoulli" else mu
        z = (y - mu) / v + eta
        return z, v, mu


def make_family(kind: str, dispersion: float = 1.0) -> Family:
    return Family(kind, dispersion)
