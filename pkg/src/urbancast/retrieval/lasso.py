"""Lasso by cyclic coordinate descent with soft-thresholding."""

from __future__ import annotations

import numpy as np

from ..exceptions import DimensionError, InputError


def soft_threshold(x, t):
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def column_scales(design: np.ndarray) -> np.ndarray:
    """Root-mean-square of each column; dividing by it gives (1/D)||x_j||^2 = 1."""
    return np.sqrt(np.mean(design * design, axis=0))


def lasso_objective(design, response, coef, lam) -> float:
    r = response - design @ coef
    return float(r @ r / (2 * len(response)) + lam * np.abs(coef).sum())


def lasso_fit(design, response, lam, *, tol=1e-8, max_sweeps=10_000, return_history=False):
    """Minimize ``(1/2D)||response - X w||^2 + lam*||w||_1`` over ``w``.

    ``design`` is ``(D, m)`` with one candidate per column. Columns are scaled
    to unit RMS before fitting (no centering, no intercept) so ``lam`` means
    the same thing for every column; coefficients are returned on the
    original column scale. All-zero columns get a zero coefficient.

    With ``return_history=True`` also returns the standardized objective
    after every sweep.
    """
    X = np.asarray(design, dtype=np.float64)
    y = np.asarray(response, dtype=np.float64)
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
        raise DimensionError(f"design {X.shape} and response {y.shape} do not align")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise InputError("lasso inputs must be finite")
    lam = float(lam)
    if not np.isfinite(lam) or lam < 0:
        raise InputError("lambda must be a finite non-negative number")

    n_rows, m = X.shape
    scale = column_scales(X)
    live = scale > 0
    Xs = np.zeros_like(X)
    Xs[:, live] = X[:, live] / scale[live]

    # covariance updates: with unit-RMS columns, rho_j = c_j - (G beta)_j + beta_j
    gram = (Xs.T @ Xs / n_rows).tolist()
    corr = (Xs.T @ y / n_rows).tolist()
    active = np.flatnonzero(live).tolist()
    beta = [0.0] * m
    g_beta = [0.0] * m
    history = []
    for _ in range(max_sweeps):
        max_delta = 0.0
        for j in active:
            old = beta[j]
            rho = corr[j] - g_beta[j] + old
            new = rho - lam if rho > lam else (rho + lam if rho < -lam else 0.0)
            if new != old:
                delta = new - old
                beta[j] = new
                row = gram[j]
                for i in active:
                    g_beta[i] += delta * row[i]
                if abs(delta) > max_delta:
                    max_delta = abs(delta)
        history.append(lasso_objective(Xs, y, np.array(beta), lam))
        if max_delta < tol:
            break

    beta = np.array(beta)
    coef = np.zeros(m)
    coef[live] = beta[live] / scale[live]
    if return_history:
        return coef, history
    return coef
