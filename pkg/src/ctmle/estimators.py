"""Reference ATE estimators and influence-curve inference.

Holds the propensity and outcome model wrappers shared across the package,
the unadjusted / G-computation / IPTW / A-IPTW estimators, the efficient
influence curve for the ATE, and the variance estimator built from it.

All outcome models here operate on outcomes already mapped into [0, 1];
reports are transformed back to the raw outcome scale at the boundary via
``EstimateReport.on_raw_scale``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit
from scipy.stats import norm

from . import glm
from .data import Dataset, OutcomeScaler

__all__ = [
    "PropensityFit",
    "OutcomeModel",
    "EstimateReport",
    "fit_propensity",
    "intercept_only_propensity",
    "fit_outcome_model",
    "truncate_ps",
    "unadjusted",
    "gcomp",
    "iptw",
    "aiptw",
    "eic_values",
    "ic_inference",
]

DEFAULT_TRUNCATION = (0.025, 0.975)

# Initial outcome-model predictions are clamped away from 0/1 before any
# logit so fluctuation offsets stay finite.
QBAR_CLAMP = 1e-6
_LOGIT_CLAMP = float(glm.logit(1.0 - QBAR_CLAMP))


def truncate_ps(g1, lo: float, hi: float) -> np.ndarray:
    """Clamp propensity scores elementwise into [lo, hi]."""
    if not (0.0 < lo <= hi < 1.0):
        raise ValueError(f"invalid truncation bounds ({lo}, {hi})")
    return np.clip(np.asarray(g1, dtype=float), lo, hi)


@dataclass
class PropensityFit:
    """A fitted treatment model with truncated in-sample scores.

    g1 holds the truncated P(A=1 | W_i) for the rows the model was fit on;
    predictions at new rows go through ``g1_at``.  covariates records the
    column indices entering the (main terms + intercept) logistic model;
    an empty tuple is the intercept-only model.
    """

    g1: np.ndarray
    truncation_bounds: tuple
    covariates: tuple = ()
    fit: glm.LogisticFit | None = None
    marginal: float | None = None

    def g1_at(self, W) -> np.ndarray:
        """Truncated P(A=1 | W) at arbitrary covariate rows."""
        W = np.asarray(W, dtype=float)
        if self.fit is None:
            raw = np.full(W.shape[0], self.marginal)
        else:
            raw = glm.predict_proba(self.fit, W[:, list(self.covariates)])
        lo, hi = self.truncation_bounds
        return np.clip(raw, lo, hi)


def fit_propensity(W, A, covariates, truncation=DEFAULT_TRUNCATION,
                   init=None) -> PropensityFit:
    """Main-terms logistic treatment model on the given covariate columns."""
    W = np.asarray(W, dtype=float)
    cols = tuple(int(j) for j in covariates)
    fit = glm.fit_logistic(W[:, list(cols)], np.asarray(A, dtype=float), init=init)
    g1 = truncate_ps(glm.predict_proba(fit, W[:, list(cols)]), *truncation)
    return PropensityFit(g1, tuple(truncation), cols, fit)


def intercept_only_propensity(A, n=None, truncation=DEFAULT_TRUNCATION) -> PropensityFit:
    """g(1 | W) = empirical treatment share; no model fit is needed."""
    A = np.asarray(A, dtype=float)
    marginal = float(np.clip(A.mean(), *truncation))
    return PropensityFit(np.full(n or len(A), marginal), tuple(truncation),
                         (), None, marginal)


@dataclass
class OutcomeModel:
    """Main-terms logistic outcome regression of a [0, 1] outcome on (A, W).

    covariates lists the W columns included besides treatment; the design is
    [1, A, W_cols].  Fractional outcomes are handled by the quasi-binomial
    fit in :mod:`ctmle.glm`.
    """

    fit: glm.LogisticFit
    covariates: tuple

    def logit_predict(self, a, W) -> np.ndarray:
        """Clamped linear predictor logit(Qbar(a, W))."""
        W = np.asarray(W, dtype=float)
        n = W.shape[0]
        a_col = np.broadcast_to(np.asarray(a, dtype=float), (n,))
        X = np.column_stack([a_col, W[:, list(self.covariates)]])
        eta = glm._design(X, True) @ self.fit.coefficients
        return np.clip(eta, -_LOGIT_CLAMP, _LOGIT_CLAMP)

    def predict(self, a, W) -> np.ndarray:
        return expit(self.logit_predict(a, W))


def fit_outcome_model(ds: Dataset, covariates="all") -> OutcomeModel:
    """Fit the initial outcome regression Qbar0 on (A, selected W columns)."""
    if covariates == "all":
        cols = tuple(range(ds.p))
    else:
        cols = tuple(int(j) for j in covariates)
    X = np.column_stack([ds.A, ds.W[:, list(cols)]])
    fit = glm.fit_logistic(X, ds.Y)
    return OutcomeModel(fit, cols)


@dataclass
class EstimateReport:
    """Point estimate with influence-curve inference, on the raw outcome scale."""

    psi: float
    se: float
    ci: tuple
    method: str
    k_selected: int | None = None
    strategy_selected: str | None = None
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.se < 0:
            raise ValueError("standard error must be nonnegative")
        if not (self.ci[0] <= self.psi <= self.ci[1]):
            raise ValueError("confidence interval must contain the point estimate")

    def on_raw_scale(self, scaler: OutcomeScaler) -> "EstimateReport":
        """Back-transform an estimate computed on the scaled outcome."""
        s = scaler.span
        return EstimateReport(self.psi * s, self.se * s,
                              (self.ci[0] * s, self.ci[1] * s),
                              self.method, self.k_selected,
                              self.strategy_selected, dict(self.diagnostics))

    def to_json_dict(self) -> dict:
        return {
            "method": self.method,
            "psi": self.psi,
            "se": self.se,
            "ci_lower": self.ci[0],
            "ci_upper": self.ci[1],
            "k_selected": self.k_selected,
            "strategy_selected": self.strategy_selected,
            "diagnostics": self.diagnostics,
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_json_dict(), **kwargs)

    @classmethod
    def from_json_dict(cls, d: dict) -> "EstimateReport":
        return cls(d["psi"], d["se"], (d["ci_lower"], d["ci_upper"]), d["method"],
                   d.get("k_selected"), d.get("strategy_selected"),
                   d.get("diagnostics", {}))


def unadjusted(ds: Dataset) -> float:
    """Difference of arm-wise outcome means."""
    treated = ds.A == 1
    if treated.all() or not treated.any():
        raise ValueError("both treatment arms must be nonempty")
    return float(ds.Y[treated].mean() - ds.Y[~treated].mean())


def gcomp(qbar: OutcomeModel, ds: Dataset) -> float:
    """Plug-in (G-computation) estimator: mean of Qbar(1, W) - Qbar(0, W)."""
    return float(np.mean(qbar.predict(1, ds.W) - qbar.predict(0, ds.W)))


def iptw(gfit: PropensityFit, ds: Dataset) -> float:
    """Inverse probability of treatment weighted estimator of the ATE."""
    g1 = gfit.g1
    w = np.where(ds.A == 1, 1.0 / g1, -1.0 / (1.0 - g1))
    return float(np.mean(w * ds.Y))


def aiptw(qbar: OutcomeModel, gfit: PropensityFit, ds: Dataset) -> float:
    """Augmented IPTW: plug-in term plus inverse-weighted residual term."""
    g1 = gfit.g1
    h = np.where(ds.A == 1, 1.0 / g1, -1.0 / (1.0 - g1))
    resid = ds.Y - qbar.predict(ds.A, ds.W)
    return gcomp(qbar, ds) + float(np.mean(h * resid))


def eic_values(qbar_star, gfit: PropensityFit, psi: float, ds: Dataset) -> np.ndarray:
    """Efficient influence curve values D*(qbar_star, gfit) at each row."""
    g1 = gfit.g1
    h = np.where(ds.A == 1, 1.0 / g1, -1.0 / (1.0 - g1))
    resid = ds.Y - qbar_star.predict(ds.A, ds.W)
    diff = qbar_star.predict(1, ds.W) - qbar_star.predict(0, ds.W)
    return h * resid + diff - psi


def ic_inference(eic, psi: float, level: float = 0.95, method: str = "",
                 diagnostics: dict | None = None) -> EstimateReport:
    """Influence-curve variance estimate and Wald confidence interval."""
    eic = np.asarray(eic, dtype=float)
    n = len(eic)
    if n < 2:
        raise ValueError("influence-curve inference needs at least 2 observations")
    se = float(np.sqrt(np.mean(eic ** 2) / n))
    z = 1.96 if level == 0.95 else float(norm.ppf(1.0 - (1.0 - level) / 2.0))
    return EstimateReport(psi, se, (psi - z * se, psi + z * se), method,
                          diagnostics=diagnostics or {})
