# app/services/regression_service.py
"""
Least squares and binary GLM fitting (probit / logit) for small designs.

OLS goes through a reduced QR factorization. The binary GLM is fitted by
iteratively reweighted least squares with Newton weights (for the logit link
these are the Fisher-scoring weights) and step halving on deviance increase.
"""
from __future__ import annotations

from typing import Tuple

import numpy as np
from scipy import linalg

from app.core.errors import OneClassOnlyError, RankDeficientError, SeparationError
from app.core import numerics
from app.models.common import Link
from app.models.fits import DesignMatrix, FitResult

PIVOT_TOL = 1e-10
MU_CLAMP = 1e-10
MAX_ITER = 100
BETA_TOL = 1e-8
DEVIANCE_TOL = 1e-10
DIVERGENCE_BOUND = 30.0
MAX_HALVINGS = 25
SCORE_TOL = 1e-6
# deviance may rise by this fraction of itself (summation roundoff at large n)
DEV_SLACK = 1e-12


# ---------- helpers ----------

def _check_rank(X: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    n, p = X.shape
    if n <= p:
        raise RankDeficientError(f"need more rows than columns (n={n}, p={p})")
    Q, R = np.linalg.qr(X, mode="reduced")
    col_norms = np.linalg.norm(X, axis=0)
    pivots = np.abs(np.diag(R))
    if np.any(pivots < PIVOT_TOL * np.maximum(col_norms, 1.0)):
        raise RankDeficientError("design matrix is not of full column rank (degenerate dose grid?)")
    return Q, R


def _link_transform(p: float, link: Link) -> float:
    return numerics.std_normal_quantile(p) if link == Link.probit else numerics.logit(p)


# ---------- OLS ----------

def fit_ols(X: DesignMatrix, y: np.ndarray) -> FitResult:
    y = np.asarray(y, dtype=float)
    if len(y) != X.n_rows:
        raise ValueError("y length must match the design rows")
    Q, R = _check_rank(X.values)
    beta = linalg.solve_triangular(R, Q.T @ y)
    resid = y - X.values @ beta
    df = X.n_rows - X.n_cols
    return FitResult(
        coefficients=beta,
        converged=True,
        iterations=1,
        names=X.names,
        residuals=resid,
        residual_variance=float(resid @ resid / df),
    )


# ---------- binary GLM ----------

def log_likelihood_binary(X: DesignMatrix, y: np.ndarray, beta: np.ndarray, link: Link) -> float:
    eta = X.values @ beta
    y = np.asarray(y, dtype=float)
    if link == Link.probit:
        ll = y * numerics.log_std_normal_cdf(eta) + (1.0 - y) * numerics.log_std_normal_cdf(-eta)
    else:
        ll = -(y * np.logaddexp(0.0, -eta) + (1.0 - y) * np.logaddexp(0.0, eta))
    return float(np.sum(ll))


def score_binary(X: DesignMatrix, y: np.ndarray, beta: np.ndarray, link: Link) -> np.ndarray:
    """Gradient of the log-likelihood at beta."""
    u, _ = _working_parts(X.values @ beta, np.asarray(y, dtype=float), link)
    return X.values.T @ u


def _initial_beta(X: DesignMatrix, y: np.ndarray, link: Link) -> np.ndarray:
    beta = np.zeros(X.n_cols)
    if X.has_intercept:
        # intercept column may be any nonzero constant
        beta[0] = _link_transform(float(np.mean(y)), link) / X.values[0, 0]
    return beta


def _working_parts(eta: np.ndarray, y: np.ndarray, link: Link) -> Tuple[np.ndarray, np.ndarray]:
    """Per-subject score d(loglik)/d(eta) and weight -d2(loglik)/d(eta)2.

    Probit uses the observed information (the log-likelihood is concave, so it
    stays positive); for logit it equals the expected information.
    """
    if link == Link.probit:
        log_pdf = -0.5 * eta * eta - 0.5 * np.log(2.0 * np.pi)
        lam1 = np.exp(log_pdf - numerics.log_std_normal_cdf(eta))    # phi / Phi
        lam0 = np.exp(log_pdf - numerics.log_std_normal_cdf(-eta))   # phi / (1 - Phi)
        u = y * lam1 - (1.0 - y) * lam0
        w = y * lam1 * (eta + lam1) + (1.0 - y) * lam0 * (lam0 - eta)
    else:
        mu = np.clip(numerics.expit(eta), MU_CLAMP, 1.0 - MU_CLAMP)
        u = y - mu
        w = mu * (1.0 - mu)
    return u, np.maximum(w, np.finfo(float).tiny)


def _newton_step(Xv: np.ndarray, y: np.ndarray, beta: np.ndarray, link: Link) -> Tuple[np.ndarray, np.ndarray]:
    """(Newton step, score) at beta."""
    u, w = _working_parts(Xv @ beta, y, link)
    score = Xv.T @ u
    info = Xv.T @ (w[:, None] * Xv)
    try:
        return linalg.solve(info, score, assume_a="pos"), score
    except (linalg.LinAlgError, ValueError) as e:
        raise SeparationError(f"information matrix became singular: {e}") from e


def _no_worse(new_dev: float, dev: float) -> bool:
    return bool(np.isfinite(new_dev)) and new_dev <= dev + DEV_SLACK * (abs(dev) + 1.0)


def _polish(X: DesignMatrix, y: np.ndarray, beta: np.ndarray, dev: float,
            link: Link) -> Tuple[np.ndarray, float]:
    # one extra full step once converged; Newton error squares, so this lands at roundoff
    try:
        step, _ = _newton_step(X.values, y, beta, link)
    except SeparationError:
        return beta, dev
    new_beta = beta + step
    new_dev = -2.0 * log_likelihood_binary(X, y, new_beta, link)
    if _no_worse(new_dev, dev) and np.max(np.abs(new_beta)) <= DIVERGENCE_BOUND:
        return new_beta, new_dev
    return beta, dev


def fit_glm_binary(X: DesignMatrix, y: np.ndarray, link: Link = Link.probit) -> FitResult:
    y = np.asarray(y, dtype=float)
    if len(y) != X.n_rows:
        raise ValueError("y length must match the design rows")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("binary GLM needs a 0/1 response")
    if y.min() == y.max():
        raise OneClassOnlyError("response has a single class")
    _check_rank(X.values)

    Xv = X.values
    beta = _initial_beta(X, y, link)
    dev = -2.0 * log_likelihood_binary(X, y, beta, link)

    def result(it: int) -> FitResult:
        return FitResult(coefficients=beta, converged=True, iterations=it, names=X.names,
                         deviance=float(dev), link=link)

    for it in range(1, MAX_ITER + 1):
        step, score = _newton_step(Xv, y, beta, link)

        new_beta = beta + step
        new_dev = -2.0 * log_likelihood_binary(X, y, new_beta, link)
        halvings = 0
        while not _no_worse(new_dev, dev) and halvings < MAX_HALVINGS:
            step = step / 2.0
            new_beta = beta + step
            new_dev = -2.0 * log_likelihood_binary(X, y, new_beta, link)
            halvings += 1

        if not _no_worse(new_dev, dev):
            # no point along the Newton direction lowers the deviance: keep beta
            if np.linalg.norm(score) < SCORE_TOL:
                return result(it)
            raise SeparationError(
                f"step halving could not reduce the deviance (score norm {np.linalg.norm(score):.3g})"
            )

        if np.max(np.abs(new_beta)) > DIVERGENCE_BOUND:
            raise SeparationError(
                f"coefficients diverged past {DIVERGENCE_BOUND} (likely separation)"
            )

        max_change = float(np.max(np.abs(new_beta - beta)))
        rel_dev_change = abs(dev - new_dev) / (abs(new_dev) + 0.1)
        beta, dev = new_beta, new_dev
        if max_change < BETA_TOL or rel_dev_change < DEVIANCE_TOL:
            beta, dev = _polish(X, y, beta, dev, link)
            return result(it)

    raise SeparationError(f"IRLS hit the iteration cap ({MAX_ITER})")
