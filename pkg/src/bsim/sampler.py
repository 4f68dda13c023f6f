"""Metropolis-within-Gibbs sampling for the Bayesian single-index model.

One sweep:

1. draw the main effects ``m`` from their Gaussian conditional, built from
   the converged Fisher-scoring quantities for ``m`` given ``(beta, gamma)``;
2. propose ``beta_new ~ vMF(beta_cur, lambda_prop)`` and accept it with the
   ratio of the gamma-marginalized posteriors ``P(beta | m, Y)``;
3. draw ``gamma`` from its Gaussian conditional at the retained ``beta``.

The likelihood enters through IWLS weights divided by the dispersion, so the
gaussian family uses ``W / phi``; bernoulli and poisson have ``phi = 1``.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from .data import Dataset
from .diagnostics import effective_sample_size, split_rhat
from .errors import DataError, NumericalError
from .expfam import Family
from .iwls import (SCORING_MAX_ITER, SCORING_TOL, IwlsState, PosteriorGaussianCache,
                   chol_with_jitter, fisher_scoring, gcv_select_rho, marginal_cache,
                   rho_grid, solve_pd)
from .priors import HyperParameters, vmf_sample
from .spline import DEFAULT_N_BASIS, DEFAULT_PADDING, SplineSystem, make_spline_system

log = logging.getLogger(__name__)

ANCHORS = ("current", "mode")


@dataclass
class ParameterState:
    m: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray
    gamma_tilde: np.ndarray

    @classmethod
    def build(cls, m, beta, gamma, system: SplineSystem) -> "ParameterState":
        gamma = np.asarray(gamma, dtype=float)
        return cls(np.asarray(m, dtype=float), np.asarray(beta, dtype=float), gamma,
                   system.gamma_tilde(gamma))


@dataclass
class ChainConfig:
    n_iter: int = 5000
    burn_in: int = 2000
    thin: int = 2
    seed: int = 0
    n_chains: int = 4
    workers: int = 1

    def __post_init__(self):
        if not 0 <= self.burn_in < self.n_iter:
            raise ValueError("need 0 <= burn_in < n_iter")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        if self.n_chains < 1:
            raise ValueError("n_chains must be >= 1")

    @property
    def draws_per_chain(self) -> int:
        return len(range(self.burn_in, self.n_iter, self.thin))


@dataclass(eq=False)
class PosteriorDraws:
    """Stored post-burn-in, thinned draws of all chains (chain-major order)."""

    m: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray
    gamma_tilde: np.ndarray
    chain: np.ndarray
    acceptance_rate: float
    chain_acceptance: np.ndarray
    diagnostics: dict = field(default_factory=dict)
    beta_reference: np.ndarray | None = None
    align_sign: bool = False

    def __len__(self):
        return len(self.beta)

    @property
    def n_chains(self) -> int:
        return int(self.chain.max()) + 1 if len(self.chain) else 0

    def states(self):
        for i in range(len(self)):
            yield ParameterState(self.m[i], self.beta[i], self.gamma[i], self.gamma_tilde[i])

    def per_chain(self, name: str):
        """Array of shape (n_chains, draws_per_chain, dim)."""
        arr = getattr(self, name)
        return np.stack([arr[self.chain == c] for c in range(self.n_chains)])

    def summary_beta(self):
        """Beta draws, sign-aligned to the reference when ``align_sign`` is set."""
        if not self.align_sign or self.beta_reference is None:
            return self.beta
        flip = np.where(self.beta @ self.beta_reference < 0, -1.0, 1.0)
        return self.beta * flip[:, None]


@dataclass
class BetaTarget:
    """The gamma-marginalized posterior evaluated at one index direction."""

    beta: np.ndarray
    u: np.ndarray
    D: np.ndarray
    fit: IwlsState
    cache: PosteriorGaussianCache
    log_post: float


# --------------------------------------------------------------------------
# initialization


@dataclass
class Initialization:
    state: ParameterState
    rho: float
    system: SplineSystem
    family: Family
    beta_linear: np.ndarray
    iterations: int
    converged: bool


def _pearson_dispersion(family, y, mu, edf):
    v = family.variance(family.clamp_mean(mu))
    return float(np.sum((y - mu) ** 2 / v) / max(len(y) - edf, 1.0))


def _joint_fit(dataset, family, D, rho, phi, start, tol, max_iter):
    design = np.hstack([dataset.X_main, D])
    # the penalized objective with weights W/phi is the same as W with rho*phi
    penalty = np.r_[np.zeros(dataset.p_main), np.full(D.shape[1], rho * phi)]
    if start is not None and len(start) != design.shape[1]:
        start = None
    return fisher_scoring(family, dataset.y, None, design, start, penalty, tol, max_iter)


def _profile_fit(dataset, family, system, beta, rho, grid, phi, start, tol, max_iter, rounds=5):
    """Penalized (m, gamma) fit at fixed beta with GCV-updated rho."""
    D = system.design(dataset.X_index @ beta, dataset.a)
    pm = dataset.p_main
    for _ in range(rounds):
        fit = _joint_fit(dataset, family, D, rho, phi, start, tol, max_iter)
        start = fit.coef
        z_gamma = fit.z - dataset.X_main @ fit.coef[:pm]
        w = fit.w / phi
        new_rho = gcv_select_rho(D, w, z_gamma, grid)
        if family.kind == "gaussian":
            evals = np.clip(np.linalg.eigvalsh(D.T @ (D * fit.w[:, None])), 0, None)
            edf = pm + float(np.sum(evals / (evals + rho * phi)))
            phi = _pearson_dispersion(family, dataset.y, fit.mu, edf)
        if new_rho == rho:
            break
        rho = new_rho
    else:
        fit = _joint_fit(dataset, family, D, rho, phi, start, tol, max_iter)
    return fit, rho, phi, D


def _index_step(dataset, family, system, beta, coef, fit):
    """One Gauss-Newton step for beta with (m, gamma) fixed, with step halving."""
    pm = dataset.p_main
    m, gamma = coef[:pm], coef[pm:]
    gt = system.gamma_tilde(gamma)
    l = system.l
    arm1 = dataset.a == 1

    def eta_at(b):
        B = system.basis(dataset.X_index @ b)
        return dataset.X_main @ m + np.where(arm1, B @ gt[l:], B @ gt[:l])

    dB = system.basis_derivative(dataset.X_index @ beta)
    slope = np.where(arm1, dB @ gt[l:], dB @ gt[:l])
    J = slope[:, None] * dataset.X_index
    resid = fit.z - fit.eta  # h'(mu)(y - mu)
    try:
        step = solve_pd(J.T @ (J * fit.w[:, None]), J.T @ (fit.w * resid))
    except NumericalError:
        return None
    base = family.log_likelihood(dataset.y, eta_at(beta))
    for s in 0.5 ** np.arange(12):
        cand = beta + s * step
        cand = cand / np.linalg.norm(cand)
        if family.log_likelihood(dataset.y, eta_at(cand)) > base + 1e-12 * abs(base):
            return cand
    return None


def linear_interaction_direction(dataset: Dataset, family: Family, tol=SCORING_TOL, max_iter=SCORING_MAX_ITER):
    """Normalised X-by-A interaction coefficients of a linear-interaction GLM.

    Design: ``[X_main, (A - pi1), (A - pi1) * X_index]``.
    """
    t = (dataset.a - dataset.pi1)[:, None]
    design = np.hstack([dataset.X_main, t, t * dataset.X_index])
    fit = fisher_scoring(family, dataset.y, None, design, None, None, tol, max_iter)
    delta = fit.coef[dataset.p_main + 1:]
    norm = np.linalg.norm(delta)
    if not np.isfinite(norm) or norm == 0:
        out = np.zeros(dataset.p)
        out[0] = 1.0
        return out, fit
    return delta / norm, fit


def initialize(dataset: Dataset, family: Family, n_basis: int = DEFAULT_N_BASIS,
               padding: float = DEFAULT_PADDING, grid=None, beta0=None,
               tol: float = SCORING_TOL, max_iter: int = SCORING_MAX_ITER,
               max_outer: int = 50, beta_tol: float = 1e-6) -> Initialization:
    """Penalized maximum-likelihood start for the chain.

    Alternates a penalized IWLS fit of (m, gamma) at fixed beta (rho by GCV)
    with a Gauss-Newton update of beta at fixed (m, gamma); knots follow the
    current beta.  The returned beta is sign-aligned with ``beta0`` (or the
    linear-interaction direction when ``beta0`` is None), and the final knots,
    fit and rho are computed at that beta.  For the gaussian family the
    dispersion is the Pearson estimate from the final fit.
    """
    dataset.check_trial()
    family.check_support(dataset.y)
    grid = rho_grid() if grid is None else np.sort(np.asarray(grid, dtype=float))
    beta_lin, lin_fit = linear_interaction_direction(dataset, family, tol, max_iter)
    phi = 1.0
    if family.kind == "gaussian":
        phi = _pearson_dispersion(family, dataset.y, lin_fit.mu, dataset.p_main + 1 + dataset.p)
    anchor = beta_lin if beta0 is None else np.asarray(beta0, dtype=float)
    beta = beta_lin if beta_lin @ anchor >= 0 else -beta_lin
    rho = float(grid[len(grid) // 2])

    coef = None
    converged = False
    it = 0
    for it in range(1, max_outer + 1):
        system = make_spline_system(dataset.X_index @ beta, dataset.pi0, dataset.pi1, n_basis, padding)
        fit, rho, phi, _ = _profile_fit(dataset, family, system, beta, rho, grid, phi, coef, tol, max_iter)
        coef = fit.coef
        new = _index_step(dataset, family, system, beta, coef, fit)
        if new is None:
            converged = True
            break
        done = np.max(np.abs(new - beta)) < beta_tol
        beta = new
        if done:
            converged = True
            break
    if not converged:
        log.warning("initialization did not converge in %d outer iterations", max_outer)

    if beta @ anchor < 0:
        beta = -beta
        coef = None
    system = make_spline_system(dataset.X_index @ beta, dataset.pi0, dataset.pi1, n_basis, padding)
    fit, rho, phi, D = _profile_fit(dataset, family, system, beta, rho, grid, phi, coef, tol, max_iter)
    if family.kind == "gaussian":
        family = family.with_dispersion(phi)
    pm = dataset.p_main
    state = ParameterState.build(fit.coef[:pm], beta, fit.coef[pm:], system)
    return Initialization(state, rho, system, family, beta_lin, it, converged)


# --------------------------------------------------------------------------
# conditionals


class GibbsSampler:
    """Conditional draws and the Metropolis step over fixed data and priors."""

    def __init__(self, dataset: Dataset, family: Family, hyper: HyperParameters,
                 system: SplineSystem, tol: float = SCORING_TOL, max_iter: int = SCORING_MAX_ITER,
                 anchor: str = "current"):
        dataset.check_trial()
        if anchor not in ANCHORS:
            raise ValueError(f"anchor must be one of {ANCHORS}")
        if hyper.Q is None or hyper.m0 is None:
            raise ValueError("hyperparameters need m0 and Q")
        if len(hyper.m0) != dataset.p_main or len(hyper.beta0) != dataset.p:
            raise DataError("hyperparameter dimensions do not match the data")
        self.dataset = dataset
        self.family = family
        self.hyper = hyper
        self.system = system
        self.tol = tol
        self.max_iter = max_iter
        self.phi = family.dispersion
        self.anchor = anchor

    def design(self, beta):
        u = self.dataset.X_index @ beta
        return u, self.system.design(u, self.dataset.a)

    # -- step 1 --------------------------------------------------------
    def m_conditional(self, state: ParameterState, D=None):
        """Mean and precision Cholesky factor of the m conditional."""
        if D is None:
            D = self.design(state.beta)[1]
        ds = self.dataset
        fit = fisher_scoring(self.family, ds.y, D @ state.gamma, ds.X_main, state.m,
                             None, self.tol, self.max_iter)
        Xw = ds.X_main * (fit.w / self.phi)[:, None]
        L, _ = chol_with_jitter(self.hyper.Q_inv + ds.X_main.T @ Xw)
        rhs = self.hyper.Q_inv @ self.hyper.m0 + Xw.T @ fit.z
        return cho_solve((L, True), rhs, check_finite=False), L

    def sample_m(self, state: ParameterState, rng, D=None):
        mean, L = self.m_conditional(state, D)
        eps = rng.standard_normal(len(mean))
        return mean + solve_triangular(L.T, eps, lower=False, check_finite=False)

    # -- step 2 --------------------------------------------------------
    def beta_target(self, beta, m, start=None, design=None, working: IwlsState | None = None) -> BetaTarget:
        """Evaluate the gamma-marginalized beta posterior.

        By default ``(z, W)`` come from penalized Fisher scoring for gamma
        at this ``beta`` (the mode of ``(D'WD/phi + rho I) gamma = D'Wz/phi``).
        ``working`` supplies fixed working quantities instead.  ``design``
        may pass a precomputed ``(u, D)``.
        """
        u, D = self.design(beta) if design is None else design
        ds = self.dataset
        if working is None:
            fit = fisher_scoring(self.family, ds.y, ds.X_main @ m, D, start, self.hyper.rho * self.phi,
                                 self.tol, self.max_iter)
        else:
            fit = working
        cache = marginal_cache(D, fit.w / self.phi, fit.z, self.hyper.rho)
        log_post = cache.log_kernel + self.hyper.lambda_prior * float(beta @ self.hyper.beta0)
        if not np.isfinite(log_post):
            raise NumericalError("non-finite beta log posterior")
        return BetaTarget(np.asarray(beta, dtype=float), u, D, fit, cache, log_post)

    def beta_log_marginal(self, beta, m, start=None) -> float:
        """log P(beta | m, Y) up to a beta-independent constant."""
        return self.beta_target(beta, m, start).log_post

    def metropolis_beta(self, state: ParameterState, rng, current: BetaTarget | None = None,
                        proposal=None):
        """Metropolis update of beta with a vMF(beta_cur, lambda_prop) proposal.

        With ``anchor="current"`` both sides of the ratio use the working
        quantities of the current beta's gamma mode, i.e. the proposal is
        scored by the first IWLS step started from the current fit.  With
        ``anchor="mode"`` each beta is scored at its own gamma mode.

        Returns ``(target, accepted)`` where ``target`` is the mode
        evaluation at the retained beta.  Numerical failure at the proposal
        is a rejection.
        """
        if current is None:
            current = self.beta_target(state.beta, state.m)
        if proposal is None:
            proposal = vmf_sample(state.beta, self.hyper.lambda_prop, rng)
        log_u = np.log(rng.uniform())
        try:
            if self.anchor == "current":
                cand = self.beta_target(proposal, state.m, working=current.fit)
            else:
                cand = self.beta_target(proposal, state.m, start=current.fit.coef)
            log_r = cand.log_post - current.log_post
            if log_r >= 0 or log_u < log_r:
                if self.anchor == "current":
                    cand = self.beta_target(proposal, state.m, start=current.fit.coef,
                                            design=(cand.u, cand.D))
                return cand, True
        except NumericalError as exc:
            log.warning("proposal rejected after numerical failure: %s", exc)
        return current, False

    # -- step 3 --------------------------------------------------------
    def sample_gamma(self, target: BetaTarget, rng):
        return target.cache.draw_gamma(rng)

    # -- chain ---------------------------------------------------------
    def run(self, start: ParameterState, n_iter: int, burn_in: int, thin: int, rng):
        """One chain. Returns stored arrays and the post-burn-in acceptance count."""
        keep = range(burn_in, n_iter, thin)
        S = len(keep)
        out = {
            "m": np.empty((S, self.dataset.p_main)),
            "beta": np.empty((S, self.dataset.p)),
            "gamma": np.empty((S, self.system.l)),
        }
        state = start
        u, D = self.design(state.beta)
        mode = None
        accepted_post = 0
        k = 0
        for it in range(n_iter):
            m = self.sample_m(state, rng, D)
            current = self.beta_target(state.beta, m, start=mode, design=(u, D))
            target, accepted = self.metropolis_beta(
                ParameterState(m, state.beta, state.gamma, state.gamma_tilde), rng, current)
            gamma = self.sample_gamma(target, rng)
            state = ParameterState.build(m, target.beta, gamma, self.system)
            u, D = target.u, target.D
            mode = target.fit.coef
            if it >= burn_in:
                accepted_post += accepted
                if (it - burn_in) % thin == 0:
                    out["m"][k] = m
                    out["beta"][k] = target.beta
                    out["gamma"][k] = gamma
                    k += 1
        out["accepted"] = accepted_post
        out["n_post"] = n_iter - burn_in
        return out


def _run_one(args):
    sampler, start, config, seq = args
    rng = np.random.default_rng(seq)
    return sampler.run(start, config.n_iter, config.burn_in, config.thin, rng)


def run_chain(dataset: Dataset, family: Family, hyper: HyperParameters, system: SplineSystem,
              config: ChainConfig, start: ParameterState, tol: float = SCORING_TOL,
              max_iter: int = SCORING_MAX_ITER, anchor: str = "current") -> PosteriorDraws:
    """Run ``config.n_chains`` chains from ``start`` and merge their draws.

    Chain ``c`` uses the ``c``-th child of ``SeedSequence(config.seed)``, so
    results do not depend on ``config.workers``.
    """
    sampler = GibbsSampler(dataset, family, hyper, system, tol, max_iter, anchor)
    seqs = np.random.SeedSequence(config.seed).spawn(config.n_chains)
    jobs = [(sampler, start, config, s) for s in seqs]
    if config.workers > 1 and config.n_chains > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(_run_one, jobs))
    else:
        results = [_run_one(j) for j in jobs]

    m = np.vstack([r["m"] for r in results])
    beta = np.vstack([r["beta"] for r in results])
    gamma = np.vstack([r["gamma"] for r in results])
    chain = np.repeat(np.arange(config.n_chains), [len(r["beta"]) for r in results])
    chain_acc = np.array([r["accepted"] / r["n_post"] for r in results])
    rate = float(sum(r["accepted"] for r in results) / sum(r["n_post"] for r in results))
    if rate == 0:
        log.warning("no beta proposal was accepted after burn-in")
    draws = PosteriorDraws(m, beta, gamma, system.gamma_tilde(gamma), chain, rate, chain_acc,
                           beta_reference=start.beta.copy(), align_sign=hyper.lambda_prior == 0)
    draws.diagnostics = chain_diagnostics(draws, dataset)
    return draws


def chain_diagnostics(draws: PosteriorDraws, dataset: Dataset) -> dict:
    out = {}
    for block, names in (("beta", dataset.index_names), ("m", dataset.main_names)):
        arr = draws.per_chain(block)
        for j, name in enumerate(names):
            series = arr[:, :, j]
            out[f"{block}[{name}]"] = {"ess": effective_sample_size(series), "rhat": split_rhat(series)}
    return out
