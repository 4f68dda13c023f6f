import numpy as np
import pytest
from hypothesis import settings

from bsim.data import make_dataset
from bsim.synth import Scenario, generate

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


def unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def small_trial(n=200, p=3, family="bernoulli", amplitude=2.0, seed=0, g_star="sine"):
    beta = unit(np.arange(1, p + 1, dtype=float))
    sc = Scenario(n=n, p=p, beta_star=beta, m_star=np.linspace(0.3, -0.3, p), family=family,
                  g_star=g_star, amplitude=amplitude, seed=seed)
    return sc, generate(sc)


@pytest.fixture
def bernoulli_trial():
    return small_trial()


@pytest.fixture
def gaussian_trial():
    return small_trial(family="gaussian")


def toy_dataset(n, p, rng, family="bernoulli"):
    X = rng.standard_normal((n, p))
    a = np.tile([0, 1], n // 2 + 1)[:n]
    eta = 0.3 * X[:, 0] + (a - 0.5) * np.sin(X @ unit(np.ones(p)))
    if family == "bernoulli":
        y = (rng.uniform(size=n) < 1 / (1 + np.exp(-eta))).astype(float)
    elif family == "poisson":
        y = rng.poisson(np.exp(eta)).astype(float)
    else:
        y = eta + rng.standard_normal(n)
    return make_dataset(y, a, X, pi=(0.5, 0.5))


def gh_gamma_integral(D, w, z, rho, center, scale_chol, nodes=40):
    """Tensor Gauss-Hermite integral of the joint gamma integrand at l = 2."""
    t, wt = np.polynomial.hermite.hermgauss(nodes)
    G = D.T @ (D * w[:, None])
    S0 = np.linalg.inv(G)
    Sr = np.linalg.inv(G + rho * np.eye(2))
    prior_mean = Sr @ D.T @ (w * z)
    total = 0.0
    for i in range(nodes):
        for j in range(nodes):
            x = np.array([t[i], t[j]])
            g = center + np.sqrt(2) * scale_chol @ x
            r = z - D @ g
            d = g - prior_mean
            quad = r @ (w * r) + d @ G @ d
            # undo the Gauss-Hermite weight exp(-x'x)
            total += wt[i] * wt[j] * np.exp(-0.5 * quad + x @ x)
    jac = np.sqrt(2) ** 2 * abs(np.linalg.det(scale_chol))
    return total * jac / np.sqrt(np.linalg.det(S0))
