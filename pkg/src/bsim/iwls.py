"""Fisher scoring / IWLS machinery and the penalized spline estimates.

Adjusted responses are always returned with the offset removed, i.e. the
response regressed on ``design`` is ``h'(mu)(y - mu) + eta - offset``.  With a
zero offset this is the usual working response.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import lapack, solve_triangular

from .errors import NumericalError

log = logging.getLogger(__name__)

SCORING_TOL = 1e-8
SCORING_MAX_ITER = 50
JITTER_REL = 1e-8
JITTER_RETRIES = 3
MAX_HALVINGS = 30

RHO_GRID_MIN = 1e-4
RHO_GRID_MAX = 1e4
RHO_GRID_POINTS = 25
# n - tr(H) below this fraction of n counts as a saturated fit
SATURATION_REL = 1e-8


def _cholesky(A):
    if not np.isfinite(A).all():
        return None
    L, info = lapack.dpotrf(A, lower=1, clean=1)
    return L if info == 0 else None


def chol_with_jitter(A):
    """Lower Cholesky factor of a symmetric PD matrix.

    On failure ``JITTER_REL * mean(diag) * 10**k`` is added to the diagonal
    for ``k = 0, 1, 2``.  Returns ``(L, A_used)``.
    """
    A = np.asarray(A, dtype=float)
    L = _cholesky(A)
    if L is not None:
        return L, A
    scale = float(np.mean(np.diag(A)))
    if not np.isfinite(scale) or scale <= 0:
        scale = 1.0
    for k in range(JITTER_RETRIES):
        Aj = A + JITTER_REL * scale * 10**k * np.eye(len(A))
        L = _cholesky(Aj)
        if L is not None:
            log.debug("cholesky needed jitter %.3g", JITTER_REL * scale * 10**k)
            return L, Aj
    raise NumericalError("matrix is not positive definite even after jitter")


def chol_solve(L, b):
    """Solve ``(L L') x = b`` for a lower Cholesky factor ``L``."""
    x, info = lapack.dpotrs(L, b, lower=1)
    if info != 0:
        raise NumericalError("triangular solve failed")
    return x


def solve_pd(A, b):
    L, _ = chol_with_jitter(A)
    return chol_solve(L, b)


def inv_pd(A):
    L, _ = chol_with_jitter(A)
    return chol_solve(L, np.eye(len(L)))


@dataclass
class IwlsState:
    """Working quantities of one scoring step (or of the converged fit)."""

    coef: np.ndarray
    z: np.ndarray
    w: np.ndarray
    eta: np.ndarray
    mu: np.ndarray
    converged: bool = False
    iterations: int = 0


def _penalty_matrix(penalty, k):
    if penalty is None:
        return None
    pen = np.asarray(penalty, dtype=float)
    if pen.ndim == 0:
        return np.full(k, float(pen))
    if pen.shape != (k,):
        raise ValueError("penalty must be a scalar or one value per coefficient")
    return pen


def _gram_solve(design, w, z, pen):
    Xw = design * w[:, None]
    gram = design.T @ Xw
    if pen is not None:
        gram.flat[:: len(gram) + 1] += pen
    return solve_pd(gram, Xw.T @ z)


def weighted_solve(design, w, z, penalty=None):
    """argmin (z - X b)' W (z - X b) + b' diag(penalty) b."""
    return _gram_solve(design, np.asarray(w, dtype=float), np.asarray(z, dtype=float),
                       _penalty_matrix(penalty, design.shape[1]))


def working_response(family, y, offset, design, coef):
    eta = offset + design @ coef
    z, w, mu = family.working_quantities(y, eta)
    return z - offset, w, eta, mu


def iwls_step(family, y, offset, design, coef, penalty=None) -> IwlsState:
    """One Fisher-scoring update starting from ``coef``.

    ``z`` and ``w`` in the returned state are evaluated at the input ``coef``;
    ``coef`` holds the updated coefficients.
    """
    y = np.asarray(y, dtype=float)
    offset = np.zeros(len(y)) if offset is None else np.asarray(offset, dtype=float)
    z, w, eta, mu = working_response(family, y, offset, design, np.asarray(coef, dtype=float))
    new = weighted_solve(design, w, z, penalty)
    return IwlsState(new, z, w, eta, mu, iterations=1)


def fisher_scoring(family, y, offset, design, coef=None, penalty=None,
                   tol: float = SCORING_TOL, max_iter: int = SCORING_MAX_ITER) -> IwlsState:
    """Iterate scoring steps to convergence.

    The returned ``z``/``w``/``eta``/``mu`` are evaluated at the returned
    coefficients.  Non-convergence keeps the last iterate and logs a warning.
    """
    y = np.asarray(y, dtype=float)
    k = design.shape[1]
    coef = np.zeros(k) if coef is None else np.array(coef, dtype=float)
    offset = np.zeros(len(y)) if offset is None else np.asarray(offset, dtype=float)
    pen = _penalty_matrix(penalty, k)

    if family.kind == "gaussian":
        # identity link: working quantities do not depend on coef
        z = y - offset
        w = np.ones(len(y))
        coef = _gram_solve(design, w, z, pen)
        eta = offset + design @ coef
        return IwlsState(coef, z, w, eta, eta.copy(), True, 1)

    def objective(eta, c):
        value = float(np.sum(y * eta - family.cumulant(eta)))
        return value if pen is None else value - 0.5 * float(np.sum(pen * c * c))

    eta = offset + design @ coef
    obj = objective(eta, coef)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        z, w, _ = family.working_quantities(y, eta)
        new = _gram_solve(design, w, z - offset, pen)
        if not np.isfinite(new).all():
            raise NumericalError("Fisher scoring produced non-finite coefficients")
        # step halving keeps the penalized log-likelihood from decreasing
        for _ in range(MAX_HALVINGS):
            eta_new = offset + design @ new
            obj_new = objective(eta_new, new)
            if not np.isfinite(obj) or obj_new >= obj - 1e-12 * (1.0 + abs(obj)):
                break
            new = 0.5 * (coef + new)
        change = np.max(np.abs(new - coef)) if k else 0.0
        coef, eta, obj = new, eta_new, obj_new
        if change < tol:
            converged = True
            break
    if not converged:
        log.warning("Fisher scoring did not converge in %d iterations", max_iter)
    z, w, eta, mu = working_response(family, y, offset, design, coef)
    return IwlsState(coef, z, w, eta, mu, converged, it)


def penalized_gamma_hat(D, w, z, rho: float):
    """Ridge-penalized WLS estimate ``(D'WD + rho I)^-1 D'W z``."""
    if rho <= 0:
        raise ValueError("rho must be positive")
    return weighted_solve(D, np.asarray(w, dtype=float), z, rho)


def rho_grid(lo: float = RHO_GRID_MIN, hi: float = RHO_GRID_MAX, points: int = RHO_GRID_POINTS):
    if points < 1 or lo <= 0 or hi < lo:
        raise ValueError("invalid rho grid")
    return np.logspace(np.log10(lo), np.log10(hi), points)


def _gcv_parts(D, w, z):
    w = np.asarray(w, dtype=float)
    G = D.T @ (D * w[:, None])
    evals, U = np.linalg.eigh(G)
    evals = np.clip(evals, 0.0, None)
    cU = U.T @ (D.T @ (w * z))
    return w, evals, U, cU


def gcv_score(D, w, z, rho: float) -> float:
    """n * ||W^1/2 (z - D gamma_rho)||^2 / (n - tr H_rho)^2."""
    w, evals, U, cU = _gcv_parts(D, w, z)
    return _gcv_from_parts(D, w, z, evals, U, cU, rho)


def _gcv_from_parts(D, w, z, evals, U, cU, rho):
    n = len(z)
    gamma = U @ (cU / (evals + rho))
    resid = z - D @ gamma
    rss = float(np.sum(w * resid**2))
    trace = float(np.sum(evals / (evals + rho)))
    denom = n - trace
    if denom <= SATURATION_REL * n:
        return np.inf
    return n * rss / denom**2


def gcv_select_rho(D, w, z, grid) -> float:
    """Grid minimiser of GCV; near-ties (1e-12 relative) go to the larger rho."""
    grid = np.sort(np.asarray(grid, dtype=float))
    if grid.size == 0:
        raise ValueError("empty rho grid")
    if grid.size == 1:
        return float(grid[0])
    w, evals, U, cU = _gcv_parts(D, w, z)
    scores = np.array([_gcv_from_parts(D, w, z, evals, U, cU, r) for r in grid])
    if not np.any(np.isfinite(scores)):
        raise NumericalError("GCV undefined on the whole grid: model saturated")
    best = 0
    for i in range(1, len(grid)):
        if scores[i] <= scores[best] * (1 + 1e-12):
            best = i
    return float(grid[best])


@dataclass
class PosteriorGaussianCache:
    """Matrices for the gamma-marginalized beta posterior at one beta."""

    Sigma_rho: np.ndarray
    Sigma_0: np.ndarray
    Lambda: np.ndarray
    S1: float
    G: np.ndarray  # D'WD (after jitter); equals Sigma_0^-1
    c: np.ndarray  # D'Wz
    chol_G: np.ndarray

    @property
    def log_kernel(self) -> float:
        """(1/4) c' Lambda c - S1 / 2."""
        return 0.25 * float(self.c @ self.Lambda @ self.c) - 0.5 * self.S1

    @property
    def gamma_mean(self):
        """Mean of the gamma conditional: (Sigma_0 / 2)(I + Sigma_0^-1 Sigma_rho) c."""
        l = len(self.c)
        return 0.5 * self.Sigma_0 @ (np.eye(l) + self.G @ self.Sigma_rho) @ self.c

    @property
    def gamma_cov(self):
        return 0.5 * self.Sigma_0

    def draw_gamma(self, rng):
        eps = rng.standard_normal(len(self.c))
        # Sigma_0 = L^-T L^-1 with G = L L'
        return self.gamma_mean + solve_triangular(self.chol_G.T, eps, lower=False,
                                                  check_finite=False) / np.sqrt(2.0)


def marginal_cache(D, w, z, rho: float) -> PosteriorGaussianCache:
    """Sigma_rho, Sigma_0, Lambda and S1 from design, weights and adjusted response."""
    if rho < 0:
        raise ValueError("rho must be non-negative")
    w = np.asarray(w, dtype=float)
    z = np.asarray(z, dtype=float)
    Dw = D * w[:, None]
    L, G = chol_with_jitter(D.T @ Dw)
    l = len(G)
    eye = np.eye(l)
    Sigma_0 = chol_solve(L, eye)
    Sigma_rho = Sigma_0 if rho == 0 else inv_pd(G + rho * eye)
    c = Dw.T @ z
    M = eye + Sigma_rho @ G
    Lambda = M @ Sigma_0 @ M
    S1 = float(z @ (w * z)) + float(c @ Sigma_rho @ G @ Sigma_rho @ c)
    return PosteriorGaussianCache(Sigma_rho, Sigma_0, Lambda, S1, G, c, L)
