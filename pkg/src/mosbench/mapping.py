"""Monotone third-order polynomial mapping of predictions onto MOS.

Before RMSE is compared across listening experiments, each model's raw
predictions ``y`` are mapped per dataset with a cubic

    y'' = a + b*y + c*y**2 + d*y**3

fitted by least squares against the subjective scores ``x``, under the
constraint that the cubic is non-decreasing over the observed prediction
range. The constraint ``b + 2c*y + 3d*y**2 >= 0`` is imposed at equally
spaced grid points, which turns the fit into a small convex QP solved here
as a least-distance problem via non-negative least squares.

Internally the prediction axis is rescaled to ``t in [-1, 1]`` so the
normal equations stay well conditioned; coefficients are converted back to
the original axis on export.
"""
from __future__ import annotations

import logging
from typing import Optional

import numpy as np
from numpy.polynomial import Polynomial
from scipy.linalg import solve_triangular
from scipy.optimize import nnls
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils import check_array, column_or_1d
from sklearn.utils.validation import check_consistent_length, check_is_fitted

from .core import MappingCoefficients, MosbenchError, ValidationError
from .metrics import rmse as _rmse

log = logging.getLogger(__name__)

_MAX_ROUNDS = 200

__all__ = [
    "MappingConvergenceError",
    "MonotonicPolynomialMapping",
    "apply_mapping",
    "fit_monotone_cubic",
    "rmse_map",
]


class MappingConvergenceError(MosbenchError):
    """The constrained solve failed. ``best`` holds a feasible fallback (the identity map)."""

    def __init__(self, message: str, best: MappingCoefficients) -> None:
        super().__init__(message)
        self.best = best


def _derivative_rows(t: np.ndarray, order: int) -> np.ndarray:
    """Rows ``r`` with ``r @ theta == p'(t)`` for ``p = sum theta_k t**k``."""
    rows = np.zeros((len(t), order + 1))
    for k in range(1, order + 1):
        rows[:, k] = k * t ** (k - 1)
    return rows


def _least_distance_qp(H, g, A):
    """Minimise ``0.5 x'Hx + g'x`` subject to ``A x >= 0`` for positive definite ``H``.

    With ``H = L L'`` and ``u = L'x + L^-1 g`` this is the least-distance
    problem ``min |u|  s.t.  G u >= h``, which reduces to one NNLS solve
    (Lawson & Hanson, ch. 23).
    """
    L = np.linalg.cholesky(H)
    w = solve_triangular(L, g, lower=True)
    G = solve_triangular(L, A.T, lower=True).T
    h = G @ w
    E = np.vstack([G.T, h[None, :]])
    f = np.zeros(E.shape[0])
    f[-1] = 1.0
    z, _ = nnls(E, f, maxiter=50 * E.shape[1])
    r = E @ z - f
    if r[-1] == 0.0:
        raise np.linalg.LinAlgError("constraint set is infeasible")
    u = -r[:-1] / r[-1]
    return solve_triangular(L.T, u - w, lower=False)


class MonotonicPolynomialMapping(RegressorMixin, BaseEstimator):
    """Least-squares polynomial map from predictions to MOS, non-decreasing on the data range.

    Parameters
    ----------
    degree : int, default=3
        Highest polynomial order. Lowered automatically when the data has
        too few distinct prediction values to determine it.
    grid_points : int, default=1001
        Number of equally spaced points over ``[min(X), max(X)]`` at which
        the derivative is constrained to be non-negative.
    refine : bool, default=True
        Also constrain the derivative's interior minimum, so the map is
        non-decreasing between grid points as well.

    Attributes
    ----------
    coef_ : ndarray of shape (4,)
        ``(a, b, c, d)`` on the original prediction axis.
    order_ : int
        Polynomial order actually fitted.
    range_ : tuple of float
        ``(min(X), max(X))`` seen during fit.
    n_iter_ : int
        Number of QP solves, one per constraint-generation round.
    """

    def __init__(self, degree=3, grid_points=1001, refine=True):
        self.degree = degree
        self.grid_points = grid_points
        self.refine = refine

    def _validate_X(self, X, reset):
        X = check_array(X, ensure_2d=False, dtype=np.float64)
        if X.ndim == 2:
            if X.shape[1] != 1:
                raise ValidationError(f"expected a single prediction column, got {X.shape[1]}")
            X = X[:, 0]
        if reset:
            self.n_features_in_ = 1
        return X

    def fit(self, X, y):
        """Fit the map from predictions ``X`` to subjective scores ``y``."""
        if not 1 <= int(self.degree) <= 3:
            raise ValidationError(f"degree must be 1, 2 or 3, got {self.degree}")
        if int(self.grid_points) < 2:
            raise ValidationError("grid_points must be >= 2")
        X = self._validate_X(X, reset=True)
        y = column_or_1d(check_array(y, ensure_2d=False, dtype=np.float64))
        check_consistent_length(X, y)
        if len(X) < 2:
            raise ValidationError(f"need at least 2 points to fit a mapping, got {len(X)}")

        lo, hi = float(X.min()), float(X.max())
        self.range_ = (lo, hi)
        self.center_ = 0.5 * (lo + hi)
        self.half_width_ = 0.5 * (hi - lo)
        n_distinct = len(np.unique(X))
        self.order_ = min(int(self.degree), n_distinct - 1)
        self.n_iter_ = 0

        if self.order_ == 0 or self.half_width_ == 0.0:
            self.order_ = 0
            self.theta_ = np.array([y.mean()])
        else:
            self.theta_ = self._solve(self._to_t(X), y)
        if self.order_ < int(self.degree):
            log.info("mapping fitted with reduced order %d (%d distinct predictions)",
                     self.order_, n_distinct)
        self.coef_ = self._coef_on_original_axis(self.theta_)
        return self

    def _to_t(self, X):
        return (X - self.center_) / self.half_width_

    def _solve(self, t, y):
        order = self.order_
        V = np.vander(t, order + 1, increasing=True)
        H = V.T @ V
        g = -V.T @ y
        grid = np.linspace(-1.0, 1.0, int(self.grid_points))
        A_grid = _derivative_rows(grid, order)
        # Constraint generation: solve on a coarse subset of the grid, then add
        # violated grid rows (and, with refinement, the derivative's interior
        # minimum) until nothing new is violated. The optimum matches a solve
        # with every row at once, at a fraction of the cost.
        active = set(np.linspace(0, len(grid) - 1, min(len(grid), 17)).round().astype(int).tolist())
        cuts: list[float] = []
        for _ in range(_MAX_ROUNDS):
            A = np.vstack([A_grid[sorted(active)], _derivative_rows(np.array(cuts), order)])
            try:
                theta = _least_distance_qp(H, g, A)
            except (RuntimeError, np.linalg.LinAlgError) as exc:
                identity = np.zeros(4)
                identity[1] = 1.0
                raise MappingConvergenceError(
                    f"monotone fit failed: {exc}", self._coefficients(identity)
                ) from exc
            self.n_iter_ += 1
            # Violations at the solver's own accuracy are left to the final shift.
            tol = 1e-10 * max(1.0, float(np.abs(theta).max()))
            new_rows = set(_violated_minima(A_grid @ theta, tol).tolist()) - active
            if new_rows:
                active |= new_rows
                continue
            if self.refine and order == 3:
                t_star, slope = _min_derivative(theta)
                if slope < -tol and all(abs(t_star - c) > 1e-12 for c in cuts):
                    cuts.append(t_star)
                    continue
            break
        else:
            log.warning("monotone fit stopped after %d rounds", self.n_iter_)
        # Column 1 of every derivative row is 1, so raising the linear term by
        # the worst remaining violation gives exact feasibility.
        worst = float((A_grid @ theta).min())
        if self.refine and order == 3:
            worst = min(worst, _min_derivative(theta)[1])
        if worst < 0.0:
            theta[1] -= worst
        return theta

    def _coef_on_original_axis(self, theta):
        if len(theta) == 1:
            return np.array([theta[0], 0.0, 0.0, 0.0])
        inner = Polynomial([-self.center_ / self.half_width_, 1.0 / self.half_width_])
        coef = Polynomial(theta)(inner).coef
        out = np.zeros(4)
        out[: len(coef)] = coef[:4]
        return out

    def _coefficients(self, coef):
        lo, hi = self.range_
        return MappingCoefficients(*(float(c) for c in coef), range_lo=lo, range_hi=hi)

    @property
    def coefficients_(self) -> MappingCoefficients:
        check_is_fitted(self, "coef_")
        return self._coefficients(self.coef_)

    def predict(self, X):
        """Map raw predictions. No clamping to the rating scale is applied."""
        check_is_fitted(self, "theta_")
        X = self._validate_X(X, reset=False)
        if self.order_ == 0:
            return np.full(len(X), self.theta_[0])
        return Polynomial(self.theta_)(self._to_t(X))


def _violated_minima(slopes, tol):
    """Indices of local minima of ``slopes`` that fall below ``-tol``."""
    padded = np.concatenate([[np.inf], slopes, [np.inf]])
    is_min = (padded[1:-1] <= padded[:-2]) & (padded[1:-1] <= padded[2:])
    return np.flatnonzero(is_min & (slopes < -tol))


def _min_derivative(theta):
    """Location and value of the smallest derivative of a cubic on [-1, 1]."""
    b, c, d = theta[1], theta[2], theta[3]
    cands = [-1.0, 1.0]
    if d != 0.0:
        v = -c / (3.0 * d)
        if -1.0 < v < 1.0:
            cands.append(v)
    vals = [b + 2 * c * t + 3 * d * t * t for t in cands]
    i = int(np.argmin(vals))
    return cands[i], vals[i]


def fit_monotone_cubic(x, y, grid_points: int = 1001) -> MappingCoefficients:
    """Fit the monotone cubic mapping predictions ``y`` onto subjective MOS ``x``."""
    model = MonotonicPolynomialMapping(grid_points=grid_points).fit(y, x)
    return model.coefficients_


def apply_mapping(coeffs: MappingCoefficients, y) -> np.ndarray:
    return coeffs(np.asarray(y, dtype=np.float64))


def rmse_map(x, y, grid_points: int = 1001, ddof: int = 1,
             model: Optional[MonotonicPolynomialMapping] = None):
    """RMSE after fitting and applying a per-dataset monotone cubic.

    Returns ``(rmse_of_mapped, coefficients)``.
    """
    model = model or MonotonicPolynomialMapping(grid_points=grid_points)
    model.fit(y, x)
    mapped = model.predict(y)
    return _rmse(x, mapped, ddof=ddof), model.coefficients_
