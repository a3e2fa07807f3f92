"""Logistic regression engine used by every estimator in the package.

A small iteratively reweighted least squares (IRLS) fitter with support for
offsets, intercept-free designs and fractional responses in [0, 1]
(quasi-binomial likelihood, needed when targeting scaled continuous
outcomes).  Separation is handled by capping coefficient magnitudes and
flagging the fit as non-converged; rank-deficient designs fall back to the
pseudo-inverse of the weighted normal equations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

__all__ = [
    "LogisticFit",
    "fit_logistic",
    "predict_proba",
    "fit_epsilon",
    "bernoulli_nll",
    "logit",
    "GlmError",
]

SCORE_TOL = 1e-8
MAX_ITER = 50
COEF_CAP = 30.0


class GlmError(ValueError):
    """Raised on degenerate model-fitting input."""


def logit(p):
    """log(p / (1 - p)) on arrays; caller is responsible for p in (0, 1)."""
    p = np.asarray(p, dtype=float)
    return np.log(p) - np.log1p(-p)


def bernoulli_nll(y, eta):
    """Sum of negative log-likelihood terms at linear predictor eta.

    Stable for large |eta|: -[y*eta - log(1 + exp(eta))] summed over rows.
    Accepts fractional y.
    """
    eta = np.asarray(eta, dtype=float)
    return float(np.sum(np.logaddexp(0.0, eta) - np.asarray(y) * eta))


@dataclass
class LogisticFit:
    """Result of an IRLS fit.

    coefficients includes the intercept first when one was requested.
    max_abs_score is the largest absolute entry of the final score vector
    X'(y - p); at a converged fit it is below the tolerance.
    """

    coefficients: np.ndarray
    converged: bool
    iterations: int
    max_abs_score: float
    intercept: bool = True
    rank_deficient: bool = False


def _design(X, intercept: bool) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if intercept:
        return np.hstack([np.ones((X.shape[0], 1)), X])
    return X


def fit_logistic(X, y, offset=None, intercept=True,
                 tol=SCORE_TOL, max_iter=MAX_ITER, init=None) -> LogisticFit:
    """Maximize the (quasi-)binomial log-likelihood of y on X by IRLS.

    Parameters
    ----------
    X : array, shape (n, d)
        Predictors, without an intercept column (added when intercept=True).
        d = 0 with intercept=True fits the intercept-only model.
    y : array, shape (n,)
        Responses in [0, 1]; fractional values are accepted.
    offset : array, optional
        Fixed per-row addition to the linear predictor.
    intercept : bool
        Whether to prepend an intercept column.
    init : array, optional
        Warm-start coefficients (same layout as the returned ones).

    Notes
    -----
    Newton steps with step-halving on any likelihood increase.  If a
    coefficient magnitude exceeds the cap the fit stops, the coefficients
    are clamped and converged is False (separation).  Singular weighted
    normal equations are solved with the pseudo-inverse and flagged.
    """
    y = np.asarray(y, dtype=float)
    n = y.shape[0]
    if n < 1:
        raise GlmError("empty response vector")
    if np.any(y < 0) or np.any(y > 1):
        raise GlmError("responses must lie in [0, 1]")
    Xd = _design(X, intercept)
    if Xd.shape[0] != n:
        raise GlmError("design and response lengths differ")
    if not np.all(np.isfinite(Xd)):
        raise GlmError("non-finite values in design matrix")
    off = np.zeros(n) if offset is None else np.asarray(offset, dtype=float)
    if off.shape != (n,):
        raise GlmError("offset length must match response")
    d = Xd.shape[1]
    if d == 0:
        return LogisticFit(np.zeros(0), True, 0, 0.0, intercept=intercept)

    beta = np.zeros(d) if init is None else np.array(init, dtype=float)
    eta = Xd @ beta + off
    nll = bernoulli_nll(y, eta)
    rank_deficient = False
    converged = False
    capped = False
    max_score = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        p = expit(eta)
        resid = y - p
        score = Xd.T @ resid
        max_score = float(np.max(np.abs(score)))
        if max_score <= tol:
            converged = True
            it -= 1
            break
        w = p * (1.0 - p)
        np.clip(w, 1e-10, None, out=w)
        XtWX = Xd.T @ (Xd * w[:, None])
        try:
            step = np.linalg.solve(XtWX, score)
            if not np.all(np.isfinite(step)):
                raise np.linalg.LinAlgError
        except np.linalg.LinAlgError:
            rank_deficient = True
            step = np.linalg.pinv(XtWX) @ score
        # step-halving keeps the likelihood monotone
        new_beta = beta + step
        new_eta = Xd @ new_beta + off
        new_nll = bernoulli_nll(y, new_eta)
        halvings = 0
        while new_nll > nll + 1e-12 and halvings < 30:
            step *= 0.5
            new_beta = beta + step
            new_eta = Xd @ new_beta + off
            new_nll = bernoulli_nll(y, new_eta)
            halvings += 1
        beta, eta, nll = new_beta, new_eta, new_nll
        if np.max(np.abs(beta)) >= COEF_CAP:
            capped = True
            break

    if capped:
        beta = np.clip(beta, -COEF_CAP, COEF_CAP)
        eta = Xd @ beta + off
        max_score = float(np.max(np.abs(Xd.T @ (y - expit(eta)))))
        converged = False
    elif not converged:
        p = expit(eta)
        max_score = float(np.max(np.abs(Xd.T @ (y - p))))
        converged = max_score <= tol
    return LogisticFit(beta, converged, it, max_score,
                       intercept=intercept, rank_deficient=rank_deficient)


def predict_proba(fit: LogisticFit, X, offset=None) -> np.ndarray:
    """expit(X beta + offset) under the stored intercept convention."""
    Xd = _design(X, fit.intercept)
    if Xd.shape[1] != len(fit.coefficients):
        raise GlmError(
            f"design has {Xd.shape[1]} columns, fit expects {len(fit.coefficients)}"
        )
    eta = Xd @ fit.coefficients
    if offset is not None:
        eta = eta + np.asarray(offset, dtype=float)
    return expit(eta)


def fit_epsilon(y, offset, h, tol=SCORE_TOL, max_iter=MAX_ITER) -> float:
    """One-dimensional no-intercept offset logistic fit.

    Returns the scalar epsilon solving sum h_i (y_i - expit(offset_i +
    eps * h_i)) = 0, the minimum-loss fluctuation coefficient.  Newton
    iterations with step-halving; starting point eps = 0 guarantees the
    loss never rises above the un-fluctuated loss.
    """
    y = np.asarray(y, dtype=float)
    h = np.asarray(h, dtype=float)
    off = np.asarray(offset, dtype=float)
    if np.all(h == 0):
        raise GlmError("degenerate fluctuation covariate: h is identically zero")
    eps = 0.0
    eta = off.copy()
    nll0 = nll = bernoulli_nll(y, eta)
    for _ in range(max_iter):
        p = expit(eta)
        score = float(h @ (y - p))
        if abs(score) <= tol:
            break
        info = float(h * h @ (p * (1.0 - p)))
        if info <= 0:
            break
        step = score / info
        new_eps = eps + step
        new_eta = off + new_eps * h
        new_nll = bernoulli_nll(y, new_eta)
        halvings = 0
        while new_nll > nll + 1e-12 and halvings < 30:
            step *= 0.5
            new_eps = eps + step
            new_eta = off + new_eps * h
            new_nll = bernoulli_nll(y, new_eta)
            halvings += 1
        eps, eta, nll = new_eps, new_eta, new_nll
        if abs(eps) >= COEF_CAP:
            eps = float(np.clip(eps, -COEF_CAP, COEF_CAP))
            eta = off + eps * h
            nll = bernoulli_nll(y, eta)
            break
    # the fluctuation must never fit worse than no fluctuation at all
    if nll > nll0:
        return 0.0
    return float(eps)
