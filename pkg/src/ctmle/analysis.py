"""Single entry point mapping a method name to an ATE estimate report.

Handles the outcome scaling boundary: every estimator that models the
outcome runs on the [0, 1] scale and the report is transformed back before
it is returned.  The inverse-weighted estimators operate on the raw outcome
directly, as their definitions require.
"""

from __future__ import annotations

import numpy as np

from .data import Dataset, scale_outcome
from .engine import CtmleOptions, iptw_post_selection, run_ctmle
from .estimators import (EstimateReport, aiptw, eic_values, fit_outcome_model,
                         fit_propensity, gcomp, ic_inference,
                         intercept_only_propensity, iptw, unadjusted)
from .superlearner import DEFAULT_STRATEGIES, run_sl_ctmle
from .tmle import target, tmle_ate

__all__ = ["METHODS", "estimate_ate"]

METHODS = (
    "unadjusted", "gcomp", "iptw", "aiptw", "tmle",
    "ctmle-greedy", "ctmle-logistic", "ctmle-partcorr",
    "sl-ctmle", "iptw-ctmle",
)

_CTMLE_STRATEGY = {
    "ctmle-greedy": "greedy",
    "ctmle-logistic": "logistic",
    "ctmle-partcorr": "partial-corr",
}


def _full_ps(ds: Dataset, truncation):
    if ds.p:
        return fit_propensity(ds.W, ds.A, tuple(range(ds.p)), truncation)
    return intercept_only_propensity(ds.A, truncation=truncation)


def estimate_ate(ds: Dataset, method: str, qbar_covariates="all",
                 opts: CtmleOptions | None = None, strategies=None,
                 include_scores: bool = False, y_bounds=None) -> EstimateReport:
    """Estimate the ATE with the named method, on the raw outcome scale.

    qbar_covariates selects the columns of the initial outcome model
    ("all" or a sequence of column indices); it is ignored by methods that
    do not model the outcome.  strategies only applies to "sl-ctmle";
    y_bounds overrides the empirical continuous-outcome bounds.
    """
    opts = opts or CtmleOptions()
    if method == "unadjusted":
        psi = unadjusted(ds)
        a1 = ds.A == 1
        n1, n0 = int(a1.sum()), int((~a1).sum())
        se = float(np.sqrt(ds.Y[a1].var(ddof=1) / n1 + ds.Y[~a1].var(ddof=1) / n0))
        return EstimateReport(psi, se, (psi - 1.96 * se, psi + 1.96 * se),
                              "unadjusted")

    if method == "iptw":
        gfit = _full_ps(ds, opts.truncation)
        psi = iptw(gfit, ds)
        w = np.where(ds.A == 1, 1.0 / gfit.g1, -1.0 / (1.0 - gfit.g1))
        return ic_inference(w * ds.Y - psi, psi, level=opts.level, method="iptw")

    if method == "iptw-ctmle":
        return iptw_post_selection(ds, qbar_covariates, opts, y_bounds=y_bounds)

    if method in _CTMLE_STRATEGY:
        copts = CtmleOptions(strategy=_CTMLE_STRATEGY[method], V=opts.V,
                             patience=opts.patience, step_size=opts.step_size,
                             truncation=opts.truncation, seed=opts.seed,
                             criterion=opts.criterion, level=opts.level)
        return run_ctmle(ds, qbar_covariates, copts,
                         include_scores=include_scores, y_bounds=y_bounds)

    if method == "sl-ctmle":
        return run_sl_ctmle(ds, qbar_covariates,
                            strategies or DEFAULT_STRATEGIES, opts,
                            include_scores=include_scores, y_bounds=y_bounds)

    if method not in ("gcomp", "aiptw", "tmle"):
        raise ValueError(f"unknown method {method!r}")

    ds_s, scaler = scale_outcome(ds, *(y_bounds or (None, None)))
    qbar = fit_outcome_model(ds_s, qbar_covariates)
    gfit = _full_ps(ds_s, opts.truncation)

    if method == "gcomp":
        psi = gcomp(qbar, ds_s)
        eic = eic_values(qbar, gfit, psi, ds_s)
        report = ic_inference(eic, psi, level=opts.level, method="gcomp")
    elif method == "aiptw":
        psi = aiptw(qbar, gfit, ds_s)
        eic = eic_values(qbar, gfit, psi, ds_s)
        report = ic_inference(eic, psi, level=opts.level, method="aiptw")
    else:
        model = target(qbar, gfit, ds_s)
        report = tmle_ate(model, ds_s, level=opts.level)
    return report.on_raw_scale(scaler)
