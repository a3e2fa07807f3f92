"""Targeting step: clever covariate, logit-scale fluctuation, substitution ATE.

The initial outcome model is updated along a one-dimensional logistic
fluctuation whose direction is the clever covariate built from the
propensity fit; the update makes the empirical mean of the efficient
influence curve zero, which is what licenses influence-curve inference for
the substitution estimator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from . import glm
from .data import Dataset
from .estimators import (EstimateReport, PropensityFit, eic_values,
                         ic_inference)

__all__ = ["TargetedOutcomeModel", "clever_covariate", "observed_clever",
           "target", "tmle_ate"]


def clever_covariate(gfit: PropensityFit, a: int, i: int | None = None):
    """H_g(a, W) = a / g(1, W) - (1 - a) / g(0, W) on the fitted rows.

    Returns the full vector, or the single value at row ``i``.
    """
    g1 = gfit.g1
    h = 1.0 / g1 if a == 1 else -1.0 / (1.0 - g1)
    return float(h[i]) if i is not None else h


def observed_clever(gfit: PropensityFit, A) -> np.ndarray:
    """H_g(A_i, W_i) at each unit's observed treatment."""
    g1 = gfit.g1
    return np.where(np.asarray(A) == 1, 1.0 / g1, -1.0 / (1.0 - g1))


@dataclass
class TargetedOutcomeModel:
    """An outcome model plus one fitted fluctuation along H_g.

    base may itself be targeted, so repeated updates stack additively on
    the logit scale.
    """

    base: object
    epsilon: float
    gfit: PropensityFit

    def logit_predict(self, a, W) -> np.ndarray:
        W = np.asarray(W, dtype=float)
        g1 = self.gfit.g1_at(W)
        a_col = np.broadcast_to(np.asarray(a, dtype=float), (W.shape[0],))
        h = np.where(a_col == 1, 1.0 / g1, -1.0 / (1.0 - g1))
        return self.base.logit_predict(a, W) + self.epsilon * h

    def predict(self, a, W) -> np.ndarray:
        return expit(self.logit_predict(a, W))


def target(qbar0, gfit: PropensityFit, ds: Dataset) -> TargetedOutcomeModel:
    """Fit the fluctuation coefficient and return the updated outcome model.

    The coefficient is the minimum-loss no-intercept logistic fit of Y on
    the observed clever covariate with offset logit(Qbar0(A, W)), so the
    empirical loss of the update never exceeds that of the initial model.
    """
    offset = qbar0.logit_predict(ds.A, ds.W)
    h = observed_clever(gfit, ds.A)
    eps = glm.fit_epsilon(ds.Y, offset, h)
    return TargetedOutcomeModel(qbar0, eps, gfit)


def tmle_ate(model: TargetedOutcomeModel, ds: Dataset,
             level: float = 0.95) -> EstimateReport:
    """Substitution estimate from a targeted model, with IC inference.

    Operates on the scaled outcome; callers rescale the report when the
    original outcome was continuous.
    """
    psi = float(np.mean(model.predict(1, ds.W) - model.predict(0, ds.W)))
    eic = eic_values(model, model.gfit, psi, ds)
    return ic_inference(eic, psi, level=level, method="tmle",
                        diagnostics={"epsilon": model.epsilon})
