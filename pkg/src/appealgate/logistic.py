"""Penalized logistic regression fitted by damped Newton iterations.

The objective is the summed negative log-likelihood plus ``l2 / 2 * |w|^2``
(the intercept is never penalized)::

    J(b, w) = sum_i [log(1 + exp(eta_i)) - y_i * eta_i] + l2 / 2 * |w|^2
    eta_i   = b + x_i . w

Both the PPS classifier and the inference tables use this solver; the
classifier passes sparse count matrices, the inference code small dense ones.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

DENSE_HESSIAN_LIMIT = 1500


class ConvergenceError(RuntimeError):
    """Newton iterations failed to reach the gradient tolerance."""

    def __init__(self, message: str, *, iterations: int, grad_norm: float, max_abs_coef: float):
        super().__init__(
            f"{message} (iterations={iterations}, grad_norm={grad_norm:.3e}, "
            f"max|coef|={max_abs_coef:.3e})"
        )
        self.iterations = iterations
        self.grad_norm = grad_norm
        self.max_abs_coef = max_abs_coef


def sigmoid(z):
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _log1pexp(z):
    return np.logaddexp(0.0, z)


@dataclass
class LogisticFit:
    intercept: float
    coef: np.ndarray
    iterations: int
    grad_norm: float
    log_likelihood: float


def _design(X):
    if sp.issparse(X):
        return sp.csr_matrix(X, dtype=float)
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    return X


def linear_predictor(X, intercept: float, coef: np.ndarray) -> np.ndarray:
    return np.asarray(X @ coef).ravel() + intercept


def objective(theta: np.ndarray, X, y: np.ndarray, l2: float) -> float:
    """J at ``theta = [intercept, *coef]``."""
    eta = linear_predictor(X, theta[0], theta[1:])
    return float(np.sum(_log1pexp(eta) - y * eta) + 0.5 * l2 * theta[1:] @ theta[1:])


def gradient(theta: np.ndarray, X, y: np.ndarray, l2: float) -> np.ndarray:
    """Analytic gradient of :func:`objective`."""
    eta = linear_predictor(X, theta[0], theta[1:])
    r = sigmoid(eta) - y
    g = np.empty_like(theta)
    g[0] = r.sum()
    g[1:] = np.asarray(X.T @ r).ravel() + l2 * theta[1:]
    return g


def _hessian_dense(X, w: np.ndarray, l2: float) -> np.ndarray:
    p = X.shape[1]
    H = np.empty((p + 1, p + 1))
    H[0, 0] = w.sum()
    if sp.issparse(X):
        Xw = np.asarray(X.T @ w).ravel()
        XtWX = (X.T @ sp.diags(w) @ X).toarray()
    else:
        Xw = X.T @ w
        XtWX = (X.T * w) @ X
    H[0, 1:] = Xw
    H[1:, 0] = Xw
    H[1:, 1:] = XtWX + l2 * np.eye(p)
    return H


def _hessian_product(X, w: np.ndarray, l2: float, v: np.ndarray) -> np.ndarray:
    xv = np.asarray(X @ v[1:]).ravel() + v[0]
    wxv = w * xv
    out = np.empty_like(v)
    out[0] = wxv.sum()
    out[1:] = np.asarray(X.T @ wxv).ravel() + l2 * v[1:]
    return out


def _conjugate_gradient(matvec, b: np.ndarray, rtol: float = 1e-12, max_iter: int | None = None):
    x = np.zeros_like(b)
    r = b.copy()
    p = r.copy()
    rs = r @ r
    target = (rtol * np.linalg.norm(b)) ** 2
    for _ in range(max_iter or 10 * b.size):
        if rs <= target:
            break
        Ap = matvec(p)
        alpha = rs / (p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        rs_new = r @ r
        p = r + (rs_new / rs) * p
        rs = rs_new
    return x


def fit_logistic(
    X,
    y,
    l2: float = 0.0,
    *,
    tol: float = 1e-8,
    max_iter: int = 100,
) -> LogisticFit:
    """Minimize J by Newton's method with backtracking.

    Convergence requires the gradient of J / n to have Euclidean norm <= tol
    and the last Newton step to be small. On separable data without a penalty
    the steps never shrink, so the iteration budget runs out and
    :class:`ConvergenceError` is raised instead of returning huge weights.
    """
    X = _design(X)
    y = np.asarray(y, dtype=float).ravel()
    n, p = X.shape
    if y.shape[0] != n:
        raise ValueError("X and y have different numbers of rows")
    if l2 < 0:
        raise ValueError("l2 must be non-negative")
    theta = np.zeros(p + 1)
    # Start the intercept at the base-rate logit; saves a few iterations.
    ybar = min(max(y.mean(), 1e-6), 1 - 1e-6)
    theta[0] = np.log(ybar / (1 - ybar))
    f = objective(theta, X, y, l2)
    step_norm = np.inf
    grad_norm = np.inf
    for it in range(1, max_iter + 1):
        g = gradient(theta, X, y, l2)
        grad_norm = float(np.linalg.norm(g) / n)
        if grad_norm <= tol and step_norm <= 1e-4:
            return _finish(theta, X, y, it - 1, grad_norm)
        eta = linear_predictor(X, theta[0], theta[1:])
        mu = sigmoid(eta)
        w = mu * (1.0 - mu)
        if p + 1 <= DENSE_HESSIAN_LIMIT:
            H = _hessian_dense(X, w, l2)
            try:
                direction = -np.linalg.solve(H, g)
            except np.linalg.LinAlgError:
                raise ConvergenceError(
                    "nonconvergence: singular Hessian", iterations=it,
                    grad_norm=grad_norm, max_abs_coef=float(np.max(np.abs(theta))),
                ) from None
        else:
            direction = -_conjugate_gradient(lambda v: _hessian_product(X, w, l2, v), g)
        if not np.all(np.isfinite(direction)):
            raise ConvergenceError(
                "nonconvergence: non-finite Newton step", iterations=it,
                grad_norm=grad_norm, max_abs_coef=float(np.max(np.abs(theta))),
            )
        slope = g @ direction
        t = 1.0
        while True:
            candidate = theta + t * direction
            f_new = objective(candidate, X, y, l2)
            if f_new <= f + 1e-4 * t * slope or t < 1e-10:
                break
            t *= 0.5
        step_norm = float(np.max(np.abs(candidate - theta)))
        theta = candidate
        f = f_new
    g = gradient(theta, X, y, l2)
    grad_norm = float(np.linalg.norm(g) / n)
    if grad_norm <= tol and step_norm <= 1e-4:
        return _finish(theta, X, y, max_iter, grad_norm)
    raise ConvergenceError(
        "nonconvergence: iteration budget exhausted", iterations=max_iter,
        grad_norm=grad_norm, max_abs_coef=float(np.max(np.abs(theta))),
    )


def _finish(theta, X, y, iterations, grad_norm) -> LogisticFit:
    eta = linear_predictor(X, theta[0], theta[1:])
    ll = float(np.sum(y * eta - _log1pexp(eta)))
    return LogisticFit(
        intercept=float(theta[0]),
        coef=theta[1:].copy(),
        iterations=iterations,
        grad_norm=grad_norm,
        log_likelihood=ll,
    )


def information_matrix(X, intercept: float, coef: np.ndarray) -> np.ndarray:
    """Observed information of the unpenalized log-likelihood."""
    X = _design(X)
    mu = sigmoid(linear_predictor(X, intercept, coef))
    return _hessian_dense(X, mu * (1.0 - mu), 0.0)
