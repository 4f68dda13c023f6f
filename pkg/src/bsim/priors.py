"""Priors: von Mises-Fisher on the index direction, Gaussian on main effects."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

LAMBDA_PRIOR = 300.0
LAMBDA_PROP = 300.0
M_PRIOR_SD = 10.0

_UNIT_TOL = 1e-6


def _check_unit(v, name):
    v = np.asarray(v, dtype=float)
    if abs(np.linalg.norm(v) - 1.0) > _UNIT_TOL:
        raise ValueError(f"{name} must have unit norm")
    return v


def vmf_log_kernel(beta, direction, lam: float) -> float:
    """Unnormalised vMF log density ``lam * beta' direction``."""
    beta = _check_unit(beta, "beta")
    direction = _check_unit(direction, "direction")
    return float(lam * (beta @ direction))


def _wood_cosine(lam, p, rng):
    """Cosine ``w = x' direction`` of a vMF(lam) draw on S^{p-1}, by rejection."""
    d = p - 1.0
    b = d / (np.sqrt(4.0 * lam**2 + d**2) + 2.0 * lam)
    x0 = (1.0 - b) / (1.0 + b)
    c = lam * x0 + d * np.log(1.0 - x0**2)
    while True:
        zb = rng.beta(d / 2.0, d / 2.0)
        w = (1.0 - (1.0 + b) * zb) / (1.0 - (1.0 - b) * zb)
        u = rng.uniform()
        if lam * w + d * np.log(1.0 - x0 * w) - c >= np.log(u):
            return w


def vmf_sample(direction, lam: float, rng):
    """One draw from vMF(direction, lam) (Wood, 1994).

    The cosine with ``direction`` comes from a rejection sampler; the
    tangent component is a uniform direction orthogonal to ``direction``.
    """
    mu = _check_unit(direction, "direction")
    mu = mu / np.linalg.norm(mu)
    p = len(mu)
    if lam <= 0:
        raise ValueError("concentration must be positive")
    if p == 1:
        return mu.copy()
    w = _wood_cosine(lam, p, rng)
    v = rng.standard_normal(p)
    v -= (v @ mu) * mu
    v /= np.linalg.norm(v)
    x = w * mu + np.sqrt(max(0.0, 1.0 - w * w)) * v
    return x / np.linalg.norm(x)


@dataclass
class HyperParameters:
    lambda_prior: float
    beta0: np.ndarray
    lambda_prop: float = LAMBDA_PROP
    m0: np.ndarray | None = None
    Q: np.ndarray | None = None
    rho: float = 1.0
    _Q_inv: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.beta0 = _check_unit(self.beta0, "beta0") / np.linalg.norm(self.beta0)
        if self.lambda_prior < 0:
            raise ValueError("lambda_prior must be >= 0")
        if self.lambda_prop <= 0:
            raise ValueError("lambda_prop must be > 0")
        if self.Q is not None:
            Q = np.asarray(self.Q, dtype=float)
            if not np.allclose(Q, Q.T):
                raise ValueError("Q must be symmetric")
            try:
                np.linalg.cholesky(Q)
            except np.linalg.LinAlgError:
                raise ValueError("Q must be positive definite") from None
            self.Q = Q
            self._Q_inv = np.linalg.inv(Q)
        if self.m0 is not None:
            self.m0 = np.asarray(self.m0, dtype=float)

    @classmethod
    def default(cls, beta0, p_main: int, lambda_prior: float = LAMBDA_PRIOR,
                lambda_prop: float = LAMBDA_PROP, m_prior_sd: float = M_PRIOR_SD, rho: float = 1.0):
        return cls(lambda_prior, np.asarray(beta0, dtype=float), lambda_prop,
                   np.zeros(p_main), m_prior_sd**2 * np.eye(p_main), rho)

    @property
    def Q_inv(self):
        return self._Q_inv


def m_prior_log_density(m, hyper: HyperParameters) -> float:
    """-(m - m0)' Q^-1 (m - m0) / 2, dropping the normalising constant."""
    d = np.asarray(m, dtype=float) - hyper.m0
    return -0.5 * float(d @ hyper.Q_inv @ d)
