"""B-spline representation of the treatment-specific index function.

``g(u, a) = psi(u)^T gamma_tilde_a`` where ``psi`` is a clamped B-spline basis
of dimension ``l`` and ``gamma_tilde = Z gamma`` lives in the null space of
``[pi0 I_l, pi1 I_l]`` so that ``pi0 g(u, 0) + pi1 g(u, 1) = 0`` for every u.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_N_BASIS = 8
DEFAULT_PADDING = 0.05


def _validate_knots(knots, degree):
    t = np.asarray(knots, dtype=float)
    if t.ndim != 1 or len(t) < 2 * (degree + 1):
        raise ValueError(f"need at least {2 * (degree + 1)} knots for degree {degree}")
    if np.any(np.diff(t) < 0):
        raise ValueError("knot sequence must be non-decreasing")
    if t[degree] >= t[len(t) - degree - 1]:
        raise ValueError("knot sequence has an empty base interval")
    return t


def clamped_knots(lower: float, upper: float, n_basis: int, degree: int | None = None):
    """Open (clamped) knot vector with evenly spaced interior knots.

    The end knots are repeated ``degree + 1`` times, giving ``n_basis``
    basis functions.  ``degree`` defaults to ``min(3, n_basis - 1)``.
    """
    if n_basis < 1:
        raise ValueError("n_basis must be >= 1")
    if degree is None:
        degree = min(3, n_basis - 1)
    if not upper > lower:
        raise ValueError("upper bound must exceed lower bound")
    n_interior = n_basis - degree - 1
    if n_interior < 0:
        raise ValueError(f"n_basis={n_basis} too small for degree {degree}")
    breaks = np.linspace(lower, upper, n_interior + 2)
    return np.concatenate([np.full(degree, lower), breaks, np.full(degree, upper)]), degree


def bspline_basis(u, knots, degree: int = 3):
    """Evaluate all B-spline basis functions at ``u``.

    Values outside the base interval ``[knots[degree], knots[-degree-1]]``
    are clamped to the boundary first.  Returns an array of shape
    ``(len(u), l)``, or ``(l,)`` for scalar ``u``.
    """
    t = _validate_knots(knots, degree)
    scalar = np.ndim(u) == 0
    u = np.atleast_1d(np.asarray(u, dtype=float))
    n_basis = len(t) - degree - 1

    u = np.minimum(np.maximum(u, t[degree]), t[n_basis])
    nondegenerate = np.flatnonzero(np.diff(t) > 0)
    span = np.searchsorted(t, u, side="right") - 1
    np.clip(span, max(degree, nondegenerate[0]), min(n_basis - 1, nondegenerate[-1]), out=span)

    # triangular Cox-de Boor table, one row per non-zero function
    n = len(u)
    N = [np.ones(n)]
    left = [None]
    right = [None]
    for j in range(1, degree + 1):
        left.append(u - t[span + 1 - j])
        right.append(t[span + j] - u)
        saved = np.zeros(n)
        nxt = []
        for r in range(j):
            temp = N[r] / (right[r + 1] + left[j - r])
            nxt.append(saved + right[r + 1] * temp)
            saved = left[j - r] * temp
        nxt.append(saved)
        N = nxt

    B = np.zeros((n, n_basis))
    flat = B.reshape(-1)
    first = np.arange(n) * n_basis + span - degree
    for r in range(degree + 1):
        flat[first + r] = N[r]
    return B[0] if scalar else B


def bspline_basis_derivative(u, knots, degree: int = 3):
    """First derivative of each basis function with respect to ``u``."""
    t = _validate_knots(knots, degree)
    scalar = np.ndim(u) == 0
    u = np.atleast_1d(np.asarray(u, dtype=float))
    n_basis = len(t) - degree - 1
    if degree == 0:
        out = np.zeros((len(u), n_basis))
        return out[0] if scalar else out

    # one degree lower on the same knots; all-equal end knots give zero functions
    lower = bspline_basis(u, t, degree - 1)  # shape (n, n_basis + 1)
    d = np.zeros((len(u), n_basis))
    for i in range(n_basis):
        a = t[i + degree] - t[i]
        b = t[i + degree + 1] - t[i + 1]
        if a > 0:
            d[:, i] += degree * lower[:, i] / a
        if b > 0:
            d[:, i] -= degree * lower[:, i + 1] / b
    return d[0] if scalar else d


def constraint_basis(pi0: float, pi1: float, l: int):
    """Orthonormal basis ``Z`` (2l x l) of the null space of ``[pi0 I, pi1 I]``.

    Built from the complete QR decomposition of ``[pi0 I; pi1 I]`` (the
    transpose of the constraint matrix).  Each column is sign-normalised so
    its first non-negligible entry is positive.
    """
    if l < 1:
        raise ValueError("l must be >= 1")
    if not (0 < pi0 < 1 and 0 < pi1 < 1) or abs(pi0 + pi1 - 1) > 1e-9:
        raise ValueError(f"randomization probabilities must lie in (0, 1) and sum to 1, got ({pi0}, {pi1})")
    eye = np.eye(l)
    Q, _ = np.linalg.qr(np.vstack([pi0 * eye, pi1 * eye]), mode="complete")
    Z = Q[:, l:].copy()
    for j in range(l):
        col = Z[:, j]
        first = np.flatnonzero(np.abs(col) > 1e-12)[0]
        if col[first] < 0:
            Z[:, j] = -col
    return Z


@dataclass(frozen=True, eq=False)
class SplineSystem:
    """Fixed knots, randomization probabilities and constraint basis."""

    knots: np.ndarray
    degree: int
    pi0: float
    pi1: float
    Z: np.ndarray

    @property
    def l(self) -> int:
        return len(self.knots) - self.degree - 1

    @property
    def lower(self) -> float:
        return float(self.knots[self.degree])

    @property
    def upper(self) -> float:
        return float(self.knots[self.l])

    @property
    def Z0(self):
        return self.Z[: self.l]

    @property
    def Z1(self):
        return self.Z[self.l :]

    def basis(self, u):
        return bspline_basis(u, self.knots, self.degree)

    def basis_derivative(self, u):
        return bspline_basis_derivative(u, self.knots, self.degree)

    def gamma_tilde(self, gamma):
        """Constrained coefficients ``Z gamma`` (supports a leading batch axis)."""
        return np.asarray(gamma) @ self.Z.T

    def design_tilde(self, u, arm):
        """The n x 2l matrix [D_0, D_1]: each row's basis sits in its arm's block."""
        B = self.basis(u)
        arm = np.asarray(arm)
        return np.hstack([B * (arm == 0)[:, None], B * (arm == 1)[:, None]])

    def design(self, u, arm):
        """Reparametrised n x l design ``D = D_tilde Z``."""
        B = self.basis(u)
        arm1 = np.asarray(arm) == 1
        return np.where(arm1[:, None], B @ self.Z1, B @ self.Z0)

    def outside(self, u):
        u = np.asarray(u, dtype=float)
        return (u < self.lower) | (u > self.upper)


def make_spline_system(index_values, pi0: float, pi1: float,
                       n_basis: int = DEFAULT_N_BASIS, padding: float = DEFAULT_PADDING) -> SplineSystem:
    """Spline system with knots spanning the padded range of ``index_values``."""
    u = np.asarray(index_values, dtype=float)
    lo, hi = float(u.min()), float(u.max())
    span = hi - lo
    if span <= 0:
        span = max(abs(lo), 1.0)
    delta = padding * span
    knots, degree = clamped_knots(lo - delta, hi + delta, n_basis)
    return SplineSystem(knots, degree, float(pi0), float(pi1), constraint_basis(pi0, pi1, n_basis))


@dataclass(frozen=True, eq=False)
class DesignMatrices:
    D_tilde: np.ndarray
    D: np.ndarray
    index_values: np.ndarray


def build_design(dataset, beta, system: SplineSystem) -> DesignMatrices:
    """Design matrices at index direction ``beta`` (must be unit norm)."""
    beta = np.asarray(beta, dtype=float)
    if abs(np.linalg.norm(beta) - 1.0) > 1e-8:
        raise ValueError("beta must have unit norm")
    u = dataset.X_index @ beta
    D_tilde = system.design_tilde(u, dataset.a)
    return DesignMatrices(D_tilde, D_tilde @ system.Z, u)


def evaluate_g(x, a: int, state, system: SplineSystem) -> float:
    """g(beta^T x, a) for one subject."""
    u = float(np.dot(x, state.beta))
    gt = system.gamma_tilde(state.gamma)
    block = gt[: system.l] if a == 0 else gt[system.l :]
    return float(system.basis(u) @ block)
