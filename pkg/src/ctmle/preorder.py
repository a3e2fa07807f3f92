"""Covariate-ordering strategies for the scalable collaborative estimators.

Two data-adaptive orderings are provided: one ranks covariates by the
empirical loss of a univariate-propensity fluctuation of the initial
outcome model, the other by the absolute partial correlation between each
covariate and the initial model's residual given treatment.  Arbitrary
user-supplied permutations are wrapped by :func:`fixed_order`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import glm
from .data import Dataset
from .estimators import DEFAULT_TRUNCATION, fit_propensity
from .tmle import observed_clever

__all__ = [
    "CovariateOrdering",
    "logistic_preorder",
    "partial_correlation",
    "partial_corr_preorder",
    "fixed_order",
]


@dataclass(frozen=True)
class CovariateOrdering:
    """A ranking of the p covariate columns.

    permutation holds 0-based column indices, best-ranked first.  scores
    follows permutation order (ascending fluctuation loss for the logistic
    strategy, descending absolute partial correlation otherwise); entries
    are NaN for covariates that could not be scored and were ranked last.
    """

    permutation: tuple
    scores: tuple
    strategy: str
    flagged: tuple = field(default=())

    def __post_init__(self):
        p = len(self.permutation)
        if sorted(self.permutation) != list(range(p)):
            raise ValueError("permutation must be a bijection on 0..p-1")
        if len(self.scores) != p:
            raise ValueError("scores must align with permutation")

    @property
    def p(self) -> int:
        return len(self.permutation)


def _rank(keys, p) -> tuple:
    """Ascending sort of covariate indices by (key, index); NaN keys last."""
    def key_of(j):
        k = keys[j]
        return (np.inf, j) if not np.isfinite(k) else (k, j)
    return tuple(sorted(range(p), key=key_of))


def logistic_preorder(ds: Dataset, qbar0,
                      truncation=DEFAULT_TRUNCATION) -> CovariateOrdering:
    """Rank covariates by the loss of their univariate-propensity fluctuation.

    For each column a logistic treatment model (intercept + that column) is
    fit, the initial outcome model is fluctuated along the resulting clever
    covariate, and the empirical negative log-likelihood of the update is
    recorded.  Lower loss ranks earlier; a column whose fit fails is ranked
    last and flagged.
    """
    if ds.p < 1:
        raise ValueError("need at least one covariate to order")
    offset = qbar0.logit_predict(ds.A, ds.W)
    losses = np.full(ds.p, np.nan)
    flagged = []
    for j in range(ds.p):
        try:
            gfit = fit_propensity(ds.W, ds.A, (j,), truncation)
            h = observed_clever(gfit, ds.A)
            eps = glm.fit_epsilon(ds.Y, offset, h)
            losses[j] = glm.bernoulli_nll(ds.Y, offset + eps * h)
        except (glm.GlmError, np.linalg.LinAlgError):
            flagged.append(j)
    perm = _rank(losses, ds.p)
    return CovariateOrdering(perm, tuple(losses[list(perm)]), "logistic",
                             tuple(flagged))


def partial_correlation(r, wk, a) -> float:
    """Partial Pearson correlation of r and wk given a.

    Computed from the three pairwise correlations; undefined when any input
    is constant or when r or wk is perfectly correlated with a.
    """
    r = np.asarray(r, dtype=float)
    wk = np.asarray(wk, dtype=float)
    a = np.asarray(a, dtype=float)
    if not (len(r) == len(wk) == len(a)):
        raise ValueError("input vectors must share a length")

    def corr(x, y):
        sx, sy = x.std(), y.std()
        if sx == 0 or sy == 0:
            raise ValueError("correlation undefined for a constant vector")
        return float(np.mean((x - x.mean()) * (y - y.mean())) / (sx * sy))

    r_wk = corr(r, wk)
    r_a = corr(r, a)
    wk_a = corr(wk, a)
    denom_sq = (1.0 - r_a ** 2) * (1.0 - wk_a ** 2)
    if denom_sq <= 0:
        raise ValueError("partial correlation undefined: perfect correlation with a")
    return (r_wk - r_a * wk_a) / np.sqrt(denom_sq)


def partial_corr_preorder(ds: Dataset, qbar0) -> CovariateOrdering:
    """Rank covariates by |partial correlation| with the initial residual.

    The residual is Y - Qbar0(A, W) on the scaled outcome.  Larger absolute
    partial correlation given treatment ranks earlier; undefined values
    (constant or collinear columns) rank last and are flagged.
    """
    if ds.p < 1:
        raise ValueError("need at least one covariate to order")
    resid = ds.Y - qbar0.predict(ds.A, ds.W)
    strength = np.full(ds.p, np.nan)
    flagged = []
    for j in range(ds.p):
        try:
            strength[j] = abs(partial_correlation(resid, ds.W[:, j], ds.A))
        except ValueError:
            flagged.append(j)
    # descending strength with index tie-break
    keys = np.where(np.isfinite(strength), -strength, np.nan)
    perm = _rank(keys, ds.p)
    return CovariateOrdering(perm, tuple(strength[list(perm)]), "partial-corr",
                             tuple(flagged))


def fixed_order(permutation) -> CovariateOrdering:
    """Wrap an explicit permutation of 0..p-1 as an ordering strategy."""
    perm = tuple(int(j) for j in permutation)
    return CovariateOrdering(perm, (np.nan,) * len(perm), "fixed")
