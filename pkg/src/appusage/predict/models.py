"""Regression estimators with a common ``fit(X, y)`` / ``predict(X)`` surface.

All models take already-scaled feature matrices.  The linear models fit by
cyclic coordinate descent on

    (1 / 2n) * ||y - b0 - X b||^2 + lam * (l1_ratio * |b|_1 + (1 - l1_ratio) / 2 * |b|_2^2)

with an unpenalised intercept.
"""
from __future__ import annotations

import warnings

import numba
import numpy as np

from ..errors import KTooLarge

MAX_SWEEPS = 10_000
TOL = 1e-7


class NotConverged(UserWarning):
    pass


@numba.njit(cache=True)
def _cd_gram(gram, xty, diag_pen, l1, beta, max_sweeps, tol):
    # Covariance-update coordinate descent.  gram = X'X/n and xty = X'y/n on
    # centred data; diag_pen is the ridge part added to each diagonal.
    p = gram.shape[0]
    grad = xty - gram @ beta
    for sweep in range(max_sweeps):
        max_change = 0.0
        for j in range(p):
            g = gram[j, j]
            if g == 0.0:
                continue
            rho = grad[j] + g * beta[j]
            if rho > l1:
                new = (rho - l1) / (g + diag_pen)
            elif rho < -l1:
                new = (rho + l1) / (g + diag_pen)
            else:
                new = 0.0
            delta = new - beta[j]
            if delta != 0.0:
                beta[j] = new
                for k in range(p):
                    grad[k] -= delta * gram[k, j]
                if abs(delta) > max_change:
                    max_change = abs(delta)
        if max_change < tol:
            return sweep + 1, True
    return max_sweeps, False


def coordinate_descent(X, y, lam: float, l1_ratio: float = 1.0, max_sweeps: int = MAX_SWEEPS, tol: float = TOL,
                       beta0=None):
    """Elastic-net coefficients by coordinate descent.

    Returns ``(intercept, coef, n_sweeps, converged)``.
    """
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    if not 0.0 <= l1_ratio <= 1.0:
        raise ValueError("l1_ratio must lie in [0, 1]")
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, p = X.shape
    x_mean = X.mean(axis=0)
    y_mean = y.mean()
    Xc = X - x_mean
    yc = y - y_mean
    gram = np.ascontiguousarray(Xc.T @ Xc / n)
    xty = Xc.T @ yc / n
    beta = np.zeros(p) if beta0 is None else np.array(beta0, dtype=np.float64)
    sweeps, converged = _cd_gram(gram, xty, lam * (1.0 - l1_ratio), lam * l1_ratio, beta, max_sweeps, tol)
    return float(y_mean - x_mean @ beta), beta, sweeps, converged


class LinearModel:
    family = "linear"

    def __init__(self, lam: float = 1.0, l1_ratio: float = 1.0):
        self.lam = float(lam)
        self.l1_ratio = float(l1_ratio)
        self.intercept_ = 0.0
        self.coef_ = None
        self.converged_ = True

    def fit(self, X, y):
        self.intercept_, self.coef_, self.n_sweeps_, self.converged_ = coordinate_descent(
            X, y, self.lam, self.l1_ratio)
        if not self.converged_:
            warnings.warn(f"{self.family}: coordinate descent stopped after {MAX_SWEEPS} sweeps",
                          NotConverged, stacklevel=2)
        return self

    def predict(self, X):
        return np.asarray(X, dtype=np.float64) @ self.coef_ + self.intercept_

    @property
    def params(self) -> dict:
        return {"lambda": self.lam, "l1_ratio": self.l1_ratio}


class Lasso(LinearModel):
    family = "lasso"

    def __init__(self, lam: float = 1.0):
        super().__init__(lam, 1.0)

    @property
    def params(self):
        return {"lambda": self.lam}


class ElasticNet(LinearModel):
    family = "enet"


class Knn:
    """k-nearest-neighbour regression on Euclidean distance.

    ``weighting`` is ``"uniform"`` or ``"distance"`` (inverse distance; a
    query that coincides with training rows takes their mean outcome).
    Distance ties go to the lower training-row index.
    """

    family = "knn"

    def __init__(self, k: int = 5, weighting: str = "uniform"):
        if weighting not in ("uniform", "distance"):
            raise ValueError(f"unknown weighting {weighting!r}")
        self.k = int(k)
        self.weighting = weighting

    def fit(self, X, y):
        X = np.asarray(X, dtype=np.float64)
        if self.k > len(X):
            raise KTooLarge(f"k={self.k} exceeds {len(X)} training rows")
        if self.k < 1:
            raise ValueError("k must be at least 1")
        self.X_ = X
        self.y_ = np.asarray(y, dtype=np.float64)
        return self

    def predict(self, X):
        Q = np.atleast_2d(np.asarray(X, dtype=np.float64))
        # squared distances via the expansion lose exactness; compute directly
        d = np.sqrt(((Q[:, None, :] - self.X_[None, :, :]) ** 2).sum(axis=2))
        nearest = np.argsort(d, axis=1, kind="stable")[:, :self.k]
        out = np.empty(len(Q))
        for i, idx in enumerate(nearest):
            yk = self.y_[idx]
            if self.weighting == "uniform":
                out[i] = yk.mean()
                continue
            dk = d[i, idx]
            exact = dk == 0
            if exact.any():
                out[i] = yk[exact].mean()
            else:
                w = 1.0 / dk
                out[i] = (w @ yk) / w.sum()
        return out

    @property
    def params(self):
        return {"k": self.k, "weighting": self.weighting}


class MeanBaseline:
    family = "baseline"

    def fit(self, X, y):
        self.mean_ = float(np.mean(y))
        return self

    def predict(self, X):
        return np.full(len(np.atleast_2d(X)), self.mean_)

    @property
    def params(self):
        return {}


class Voting:
    """Unweighted mean of already-fitted member models."""

    family = "voting"

    def __init__(self, members):
        self.members = list(members)

    def fit(self, X, y):
        for m in self.members:
            m.fit(X, y)
        return self

    def predict(self, X):
        return np.mean([m.predict(X) for m in self.members], axis=0)

    @property
    def params(self):
        return {"members": [m.family for m in self.members]}
