"""Discrete super-learner selection across covariate-ordering strategies.

One shared cross-validation jointly picks the ordering strategy and the
number of covariates: every strategy's candidate sequence is scored on the
identical fold assignment and the global minimizer of the penalized loss
determines both choices at once, so no nested cross-validation is needed.
"""

from __future__ import annotations

from .data import Dataset, make_folds, scale_outcome
from .engine import CtmleOptions, _final_report, _ScoredRun, _strategy_label
from .estimators import EstimateReport

__all__ = ["DEFAULT_STRATEGIES", "run_sl_ctmle"]

DEFAULT_STRATEGIES = ("logistic", "partial-corr")


def run_sl_ctmle(ds: Dataset, qbar_covariates="all",
                 strategies=DEFAULT_STRATEGIES,
                 opts: CtmleOptions | None = None,
                 include_scores: bool = False, y_bounds=None) -> EstimateReport:
    """Jointly select ordering strategy and step by one cross-validation.

    Each strategy in ``strategies`` (labels or explicit orderings) gets its
    own candidate sequence; all share the same folds.  The patience rule is
    applied within each strategy independently.  Ties in the global argmin
    break toward the smaller step, then earlier strategy.
    """
    if not strategies:
        raise ValueError("need at least one ordering strategy")
    opts = opts or CtmleOptions()
    ds_s, scaler = scale_outcome(ds, *(y_bounds or (None, None)))
    folds = make_folds(ds.n, opts.V, opts.seed)

    runs = [_ScoredRun(ds_s, qbar_covariates, opts, folds, s) for s in strategies]
    for run in runs:
        run.run_selection()

    best = None
    for m, run in enumerate(runs):
        for s in run.scores:
            key = (s.total, s.k, m)
            if best is None or key < best[0]:
                best = (key, m, s.k)
    _, m_star, k_star = best

    label = _strategy_label(strategies[m_star])
    report = _final_report(runs[m_star], k_star, "sl-ctmle", scaler,
                           include_scores)
    report.strategy_selected = label
    per_strategy = {
        f"{m}:{_strategy_label(s)}": runs[m].ps_fit_counts()
        for m, s in enumerate(strategies)
    }
    report.diagnostics["per_strategy_ps_fits"] = per_strategy
    report.diagnostics["ps_fits_total"] = sum(
        c["full"] + c["folds"] for c in per_strategy.values())
    return report
