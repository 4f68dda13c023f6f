"""Treatment contrasts, benefit indices, decisions and posterior summaries.

For a draw ``(m, beta, gamma)`` and covariates ``x`` the contrast is
``delta = g(beta'x, 1) - g(beta'x, 0)``.  Negative values favour treatment,
so the benefit index is the posterior probability that ``delta < 0`` and the
recommended arm is 1 when that probability exceeds one half.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .errors import DataError
from .expfam import Family
from .spline import SplineSystem

CRI_LEVEL = 0.95
GRID_POINTS = 201
CHUNK = 256


def _check_draws(draws):
    if draws is None or len(draws) == 0:
        raise DataError("no posterior draws")


def contrast_coefficients(draws, system: SplineSystem):
    """Per-draw ``gamma_tilde_1 - gamma_tilde_0``, shape (S, l)."""
    gt = np.atleast_2d(draws.gamma_tilde)
    return gt[:, system.l:] - gt[:, : system.l]


def delta_contrast(x, state, system: SplineSystem) -> float:
    """Contrast for one covariate vector and one parameter state."""
    u = float(np.dot(x, state.beta))
    gt = np.asarray(state.gamma_tilde)
    return float(system.basis(u) @ (gt[system.l:] - gt[: system.l]))


def delta_matrix(X_index, draws, system: SplineSystem, chunk: int = CHUNK):
    """Contrasts for every draw and subject, shape (S, n)."""
    _check_draws(draws)
    X = np.atleast_2d(np.asarray(X_index, dtype=float))
    coef = contrast_coefficients(draws, system)
    S, n = len(coef), len(X)
    out = np.empty((S, n))
    for lo in range(0, n, chunk):
        hi = min(n, lo + chunk)
        U = draws.beta @ X[lo:hi].T  # (S, k)
        B = system.basis(U.reshape(-1)).reshape(S, hi - lo, system.l)
        out[:, lo:hi] = np.einsum("skj,sj->sk", B, coef)
    return out


def linear_predictor_matrix(X_main, X_index, arm: int, draws, system: SplineSystem,
                            chunk: int = CHUNK):
    """``m'x_main + psi(beta'x_index)' gamma_tilde_arm`` per draw and subject."""
    _check_draws(draws)
    Xm = np.atleast_2d(np.asarray(X_main, dtype=float))
    Xi = np.atleast_2d(np.asarray(X_index, dtype=float))
    gt = np.atleast_2d(draws.gamma_tilde)
    block = gt[:, system.l:] if arm == 1 else gt[:, : system.l]
    S, n = len(block), len(Xi)
    out = np.empty((S, n))
    for lo in range(0, n, chunk):
        hi = min(n, lo + chunk)
        U = draws.beta @ Xi[lo:hi].T
        B = system.basis(U.reshape(-1)).reshape(S, hi - lo, system.l)
        out[:, lo:hi] = draws.m @ Xm[lo:hi].T + np.einsum("skj,sj->sk", B, block)
    return out


def tbi_from_deltas(deltas):
    """Fraction of draws with a strictly negative contrast (per column)."""
    d = np.asarray(deltas, dtype=float)
    if d.shape[0] == 0:
        raise DataError("no posterior draws")
    return np.count_nonzero(d < 0, axis=0) / d.shape[0]


def tbi(x, draws, system: SplineSystem):
    """Treatment benefit index for one subject (1-D ``x``) or many (2-D)."""
    x = np.asarray(x, dtype=float)
    out = tbi_from_deltas(delta_matrix(x, draws, system))
    return float(out[0]) if x.ndim == 1 else out


def decision_from_tbi(value):
    return (np.asarray(value) > 0.5).astype(int)


def decide(x, draws, system: SplineSystem):
    """Recommended arm: 1 iff TBI > 0.5 (ties go to control)."""
    d = decision_from_tbi(tbi(x, draws, system))
    return int(d) if d.ndim == 0 else d


def predict_outcome(x_main, x_index, arm: int, draws, system: SplineSystem, family: Family):
    """Posterior mean of the expected response under ``arm``.

    The inverse link is applied draw by draw and then averaged.
    """
    x_main = np.asarray(x_main, dtype=float)
    eta = linear_predictor_matrix(x_main, x_index, arm, draws, system)
    out = family.inverse_link(eta).mean(axis=0)
    return float(out[0]) if x_main.ndim == 1 else out


def equal_tailed(samples, level: float = CRI_LEVEL, axis: int = 0):
    tail = (1.0 - level) / 2.0
    lo, hi = np.quantile(samples, [tail, 1.0 - tail], axis=axis)
    return lo, hi


# --------------------------------------------------------------------------
# summaries


@dataclass
class SubjectScore:
    subject_id: str
    index_value: float
    tbi: float
    decision: int
    decision_mean_rule: int
    pred_mean_arm0: float
    pred_mean_arm1: float
    delta_mean: float
    cri_delta: tuple
    n_delta_negative: int
    n_exp_delta_below_one: int
    n_draws: int
    extrapolated: bool
    delta_draws: np.ndarray | None = field(default=None, repr=False)


@dataclass
class Summary:
    coefficients: list
    figure_left: list
    figure_right: list
    subjects: list


def coefficient_table(draws, dataset_names):
    """Rows ``(block, name, mean, lower, upper)`` for beta then m."""
    index_names, main_names = dataset_names
    rows = []
    for block, arr, names in (("beta", draws.summary_beta(), index_names), ("m", draws.m, main_names)):
        lo, hi = equal_tailed(arr)
        mean = arr.mean(axis=0)
        for j, name in enumerate(names):
            rows.append((block, name, float(mean[j]), float(lo[j]), float(hi[j])))
    return rows


def posterior_matrices(X_main, X_index, draws, system: SplineSystem, family: Family,
                       chunk: int = CHUNK):
    """One pass over subjects: contrast matrix (S, n) and mean predictions per arm."""
    _check_draws(draws)
    Xm = np.atleast_2d(np.asarray(X_main, dtype=float))
    Xi = np.atleast_2d(np.asarray(X_index, dtype=float))
    gt = np.atleast_2d(draws.gamma_tilde)
    g0, g1 = gt[:, : system.l], gt[:, system.l:]
    coef = g1 - g0
    S, n = len(gt), len(Xi)
    deltas = np.empty((S, n))
    pred0 = np.empty(n)
    pred1 = np.empty(n)
    for lo in range(0, n, chunk):
        hi = min(n, lo + chunk)
        U = draws.beta @ Xi[lo:hi].T
        B = system.basis(U.reshape(-1)).reshape(S, hi - lo, system.l)
        main = draws.m @ Xm[lo:hi].T
        eta0 = main + np.einsum("skj,sj->sk", B, g0)
        eta1 = main + np.einsum("skj,sj->sk", B, g1)
        deltas[:, lo:hi] = np.einsum("skj,sj->sk", B, coef)
        pred0[lo:hi] = family.inverse_link(eta0).mean(axis=0)
        pred1[lo:hi] = family.inverse_link(eta1).mean(axis=0)
    return deltas, pred0, pred1


def score_subjects(X_main, X_index, ids, draws, system: SplineSystem, family: Family,
                   keep_draws: bool = False, deltas_out: list | None = None):
    """Per-subject scores for the given covariate rows.

    When ``deltas_out`` is a list the contrast matrix is appended to it.
    """
    _check_draws(draws)
    X_main = np.atleast_2d(np.asarray(X_main, dtype=float))
    X_index = np.atleast_2d(np.asarray(X_index, dtype=float))
    n = len(X_index)
    if n == 0:
        return []
    deltas, pred0, pred1 = posterior_matrices(X_main, X_index, draws, system, family)
    if deltas_out is not None:
        deltas_out.append(deltas)
    S = deltas.shape[0]
    neg = np.count_nonzero(deltas < 0, axis=0)
    below = np.count_nonzero(np.exp(deltas) < 1.0, axis=0)
    tbis = neg / S
    mean = deltas.mean(axis=0)
    lo, hi = equal_tailed(deltas)
    index = X_index @ draws.summary_beta().mean(axis=0)
    outside = system.outside(index)
    out = []
    for i in range(n):
        out.append(SubjectScore(
            str(ids[i]), float(index[i]), float(tbis[i]), int(tbis[i] > 0.5), int(mean[i] < 0),
            float(pred0[i]), float(pred1[i]), float(mean[i]), (float(lo[i]), float(hi[i])),
            int(neg[i]), int(below[i]), S, bool(outside[i]),
            deltas[:, i] if keep_draws else None))
    return out


def figure_left(draws, system: SplineSystem, lower: float, upper: float, points: int = GRID_POINTS):
    """exp(delta) along an index grid: rows ``(u, mean, lower, upper)``."""
    _check_draws(draws)
    u = np.linspace(lower, upper, points)
    ratio = np.exp(system.basis(u) @ contrast_coefficients(draws, system).T)  # (points, S)
    lo, hi = equal_tailed(ratio, axis=1)
    mean = ratio.mean(axis=1)
    return [(float(u[k]), float(mean[k]), float(lo[k]), float(hi[k])) for k in range(points)]


def figure_right(subjects, draws, system: SplineSystem, X_index, deltas=None):
    """Per-subject rows ``(id, index, tbi, mean exp(delta), lower, upper)``."""
    if not subjects:
        return []
    if deltas is None:
        deltas = delta_matrix(X_index, draws, system)
    ratio = np.exp(deltas)
    lo, hi = equal_tailed(ratio)
    mean = ratio.mean(axis=0)
    return [(s.subject_id, s.index_value, s.tbi, float(mean[i]), float(lo[i]), float(hi[i]))
            for i, s in enumerate(subjects)]


def summarize(draws, dataset: Dataset, system: SplineSystem, family: Family,
              points: int = GRID_POINTS) -> Summary:
    """Coefficient table, figure data and subject scores for the fitted data."""
    _check_draws(draws)
    coefficients = coefficient_table(draws, (dataset.index_names, dataset.main_names))
    held = []
    subjects = score_subjects(dataset.X_main, dataset.X_index, dataset.ids, draws, system, family,
                              deltas_out=held)
    index = np.array([s.index_value for s in subjects])
    left = figure_left(draws, system, float(index.min()), float(index.max()), points)
    right = figure_right(subjects, draws, system, dataset.X_index, held[0])
    return Summary(coefficients, left, right, subjects)
