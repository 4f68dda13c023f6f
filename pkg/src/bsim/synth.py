"""Synthetic randomized trials with a known single-index treatment contrast.

The interaction term is ``g*(u, a) = c_a s(u)`` with ``c_1 = amplitude * pi0``
and ``c_0 = -amplitude * pi1``, so ``pi0 g*(u, 0) + pi1 g*(u, 1) = 0`` and the
true contrast is ``g*(u, 1) - g*(u, 0) = amplitude * s(u)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset, make_dataset
from .expfam import Family

SHAPES = ("zero", "linear", "quadratic", "sine")


def shape_function(name: str, u):
    u = np.asarray(u, dtype=float)
    if name == "zero":
        return np.zeros_like(u)
    if name == "linear":
        return u
    if name == "quadratic":
        return u**2 - 1.0
    if name == "sine":
        return np.sin(0.5 * np.pi * u)
    raise ValueError(f"unknown shape {name!r}; expected one of {SHAPES}")


@dataclass
class Scenario:
    n: int
    p: int
    beta_star: np.ndarray
    m_star: np.ndarray | None = None
    family: str = "bernoulli"
    pi1: float = 0.5
    g_star: str = "sine"
    amplitude: float = 2.0
    intercept: float = 0.0
    noise_sd: float = 1.0
    standardize: bool = True
    seed: int = 0

    def __post_init__(self):
        self.beta_star = np.asarray(self.beta_star, dtype=float)
        if self.beta_star.shape != (self.p,):
            raise ValueError("beta_star must have length p")
        if abs(np.linalg.norm(self.beta_star) - 1.0) > 1e-10:
            raise ValueError("beta_star must have unit norm")
        self.m_star = np.zeros(self.p) if self.m_star is None else np.asarray(self.m_star, dtype=float)
        if self.m_star.shape != (self.p,):
            raise ValueError("m_star must have length p")
        if not np.isfinite(self.amplitude):
            raise ValueError("amplitude must be finite")
        if not 0 < self.pi1 < 1:
            raise ValueError("pi1 must lie in (0, 1)")
        shape_function(self.g_star, 0.0)

    @property
    def pi0(self) -> float:
        return 1.0 - self.pi1

    @property
    def arm_scales(self):
        """(c_0, c_1)."""
        return -self.amplitude * self.pi1, self.amplitude * self.pi0

    def g(self, u, a):
        c0, c1 = self.arm_scales
        return np.where(np.asarray(a) == 1, c1, c0) * shape_function(self.g_star, u)


def true_delta(scenario: Scenario, x):
    """Ground-truth contrast g*(u, 1) - g*(u, 0) at covariates ``x``."""
    c0, c1 = scenario.arm_scales
    return (c1 - c0) * shape_function(scenario.g_star, np.asarray(x, dtype=float) @ scenario.beta_star)


def generate(scenario: Scenario) -> Dataset:
    """Draw a trial: X ~ N(0, I) (column-standardised), A ~ Bernoulli(pi1)."""
    rng = np.random.default_rng(scenario.seed)
    n, p = scenario.n, scenario.p
    X = rng.standard_normal((n, p))
    if scenario.standardize and n > 1:
        X = (X - X.mean(axis=0)) / X.std(axis=0)
    a = (rng.uniform(size=n) < scenario.pi1).astype(int)
    eta = scenario.intercept + X @ scenario.m_star + scenario.g(X @ scenario.beta_star, a)
    family = Family(scenario.family)
    mu = family.inverse_link(eta)
    if scenario.family == "bernoulli":
        y = (rng.uniform(size=n) < mu).astype(float)
    elif scenario.family == "poisson":
        y = rng.poisson(mu).astype(float)
    else:
        y = mu + scenario.noise_sd * rng.standard_normal(n)
    return make_dataset(y, a, X, pi=(scenario.pi0, scenario.pi1))


def random_unit(p: int, rng):
    v = rng.standard_normal(p)
    return v / np.linalg.norm(v)


def perturbed_direction(beta, cosine: float, rng):
    """Unit vector whose cosine with ``beta`` is exactly ``cosine``."""
    beta = np.asarray(beta, dtype=float)
    v = rng.standard_normal(len(beta))
    v -= (v @ beta) * beta
    v /= np.linalg.norm(v)
    return cosine * beta + np.sqrt(1.0 - cosine**2) * v


def to_csv_rows(dataset: Dataset):
    """Header and rows (id, y, a, covariates) for CSV output."""
    header = ["id", "y", "a"] + dataset.index_names
    rows = [[dataset.ids[i], dataset.y[i], int(dataset.a[i]), *dataset.X_index[i]]
            for i in range(dataset.n)]
    return header, rows
