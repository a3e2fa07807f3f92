"""Collaborative targeted estimation of the ATE.

Builds a nested sequence of treatment models — by greedy forward search or
by walking a pre-computed covariate ordering — fluctuating the outcome model
against each one, then picks the sequence element whose cross-validated
penalized loss is smallest.  The selected candidate's substitution estimate
is reported with influence-curve inference.

The candidate construction keeps the empirical loss monotone: whenever a
step's best fluctuation would raise the loss, the current initial outcome
model is replaced by the previous step's targeted model and the step is
redone, which caps the loss at the previous value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from . import glm
from .data import Dataset, FoldAssignment, make_folds, scale_outcome
from .estimators import (DEFAULT_TRUNCATION, EstimateReport, OutcomeModel,
                         PropensityFit, fit_outcome_model, fit_propensity,
                         ic_inference, intercept_only_propensity, iptw)
from .preorder import (CovariateOrdering, logistic_preorder,
                       partial_corr_preorder)

__all__ = [
    "CandidateTriplet",
    "SelectionScore",
    "CtmleOptions",
    "SequenceBuilder",
    "build_sequence",
    "cv_scores",
    "select_candidate",
    "run_ctmle",
    "iptw_post_selection",
]


@dataclass
class CtmleOptions:
    """Knobs for the collaborative estimators.

    strategy is "greedy", "logistic", "partial-corr", or an explicit
    :class:`CovariateOrdering`.  step_size > 1 adds several ordered
    covariates per step and applies to pre-ordered strategies only.
    patience stops the cross-validated scoring after that many consecutive
    steps without improvement.
    """

    strategy: object = "greedy"
    V: int = 5
    patience: int | None = None
    step_size: int = 1
    truncation: tuple = DEFAULT_TRUNCATION
    seed: int = 0
    criterion: str = "rss"
    level: float = 0.95

    def __post_init__(self):
        if self.step_size < 1:
            raise ValueError("step_size must be >= 1")
        if self.patience is not None and self.patience < 1:
            raise ValueError("patience must be >= 1 when given")
        if self.criterion not in ("rss", "nll"):
            raise ValueError("criterion must be 'rss' or 'nll'")
        lo, hi = self.truncation
        if not (0.0 < lo <= hi < 1.0):
            raise ValueError("invalid truncation bounds")


@dataclass
class CandidateTriplet:
    """One element of the candidate sequence.

    g_fit's scores cover every row of the reference dataset (fold builders
    fit on their training rows but predict everywhere).  empirical_loss is
    the summed negative log-likelihood of the targeted outcome model over
    the fitting rows.  The logit arrays cache the targeted model's
    predictions for all rows under observed / treated / control assignment.
    """

    k: int
    covariate_set: tuple
    g_fit: PropensityFit
    qbar_init_version: int
    epsilon: float
    empirical_loss: float
    logits_obs: np.ndarray = field(repr=False, default=None)
    logits_treated: np.ndarray = field(repr=False, default=None)
    logits_control: np.ndarray = field(repr=False, default=None)

    def plugin_ate(self, rows=None) -> float:
        d = expit(self.logits_treated) - expit(self.logits_control)
        return float(np.mean(d if rows is None else d[rows]))

    def eic(self, A, Y, psi: float, rows=None, g1=None) -> np.ndarray:
        """Influence-curve values; g1 overrides the candidate's own scores."""
        g = self.g_fit.g1 if g1 is None else g1
        h = np.where(np.asarray(A) == 1, 1.0 / g, -1.0 / (1.0 - g))
        vals = (h * (np.asarray(Y) - expit(self.logits_obs))
                + expit(self.logits_treated) - expit(self.logits_control) - psi)
        return vals if rows is None else vals[rows]


@dataclass
class SelectionScore:
    """Cross-validated penalized loss for one candidate index."""

    k: int
    cv_rss: float
    cv_var: float
    cv_bias: float
    total: float

    @classmethod
    def combine(cls, k, cv_rss, cv_var, cv_bias, n) -> "SelectionScore":
        return cls(k, cv_rss, cv_var, cv_bias,
                   cv_rss + cv_var + n * cv_bias ** 2)


class SequenceBuilder:
    """Lazy constructor of the candidate sequence for one data split.

    Fits happen on ``fit_rows``; predictions are maintained for every row of
    ``ds`` so validation rows can be scored.  ``ordering`` of None means
    greedy forward search.
    """

    def __init__(self, ds: Dataset, qbar0: OutcomeModel, opts: CtmleOptions,
                 ordering: CovariateOrdering | None = None, fit_rows=None):
        self.ds = ds
        self.opts = opts
        self.ordering = ordering
        self.fit_rows = np.arange(ds.n) if fit_rows is None else np.asarray(fit_rows)
        self._all_rows = self.fit_rows.shape[0] == ds.n
        self.ps_fit_count = 0
        self.reset_count = 0
        self.failures = []

        self._W_fit = ds.W[self.fit_rows]
        self._A_fit = ds.A[self.fit_rows]
        self._Y_fit = ds.Y[self.fit_rows]
        self._init_obs = qbar0.logit_predict(ds.A, ds.W)
        self._init_t1 = qbar0.logit_predict(1, ds.W)
        self._init_t0 = qbar0.logit_predict(0, ds.W)
        self._version = 0
        self._selected = []
        self._remaining = list(range(ds.p))
        self._last_beta = None
        self._candidates: list[CandidateTriplet] = []

        step = 1 if ordering is None else opts.step_size
        self.n_candidates = math.ceil(ds.p / step) + 1 if ds.p else 1

    # -- construction ------------------------------------------------------

    def _fit_ps(self, cols, init=None) -> PropensityFit:
        self.ps_fit_count += 1
        pf = fit_propensity(self._W_fit, self._A_fit, cols,
                            self.opts.truncation, init=init)
        if not self._all_rows:
            pf = PropensityFit(pf.g1_at(self.ds.W), pf.truncation_bounds,
                               pf.covariates, pf.fit)
        return pf

    def _fluctuate(self, gfit: PropensityFit):
        """Fit epsilon against the current initial model; return pieces."""
        g1 = gfit.g1
        h_obs = np.where(self.ds.A == 1, 1.0 / g1, -1.0 / (1.0 - g1))
        h_fit = h_obs[self.fit_rows] if not self._all_rows else h_obs
        off_fit = (self._init_obs[self.fit_rows]
                   if not self._all_rows else self._init_obs)
        eps = glm.fit_epsilon(self._Y_fit, off_fit, h_fit)
        loss = glm.bernoulli_nll(self._Y_fit, off_fit + eps * h_fit)
        return eps, loss, h_obs, g1

    def _absorb(self, cand: CandidateTriplet):
        """Reset: the previous targeted model becomes the current initial."""
        self._init_obs = cand.logits_obs
        self._init_t1 = cand.logits_treated
        self._init_t0 = cand.logits_control
        self._version += 1
        self.reset_count += 1

    def _store(self, k, cols, gfit, eps, loss, h_obs, g1):
        ht1 = 1.0 / g1
        ht0 = -1.0 / (1.0 - g1)
        cand = CandidateTriplet(
            k, tuple(cols), gfit, self._version, eps, loss,
            self._init_obs + eps * h_obs,
            self._init_t1 + eps * ht1,
            self._init_t0 + eps * ht0,
        )
        self._candidates.append(cand)
        return cand

    def _build_step0(self):
        gfit = intercept_only_propensity(self._A_fit, n=self.ds.n,
                                         truncation=self.opts.truncation)
        eps, loss, h_obs, g1 = self._fluctuate(gfit)
        self._store(0, (), gfit, eps, loss, h_obs, g1)

    def _greedy_trials(self):
        best = None
        for j in self._remaining:
            cols = self._selected + [j]
            init = None
            if self._last_beta is not None:
                init = np.append(self._last_beta, 0.0)
            try:
                gfit = self._fit_ps(cols, init=init)
                eps, loss, h_obs, g1 = self._fluctuate(gfit)
            except (glm.GlmError, np.linalg.LinAlgError) as exc:
                self.failures.append((len(self._selected) + 1, j, str(exc)))
                continue
            if best is None or loss < best[0]:
                best = (loss, j, gfit, eps, h_obs, g1)
        if best is None:
            raise glm.GlmError("every candidate covariate failed at this step")
        return best

    def _build_next(self):
        k = len(self._candidates)
        prev = self._candidates[-1]
        if self.ordering is None:
            loss, j, gfit, eps, h_obs, g1 = self._greedy_trials()
            if loss > prev.empirical_loss:
                self._absorb(prev)
                loss, j, gfit, eps, h_obs, g1 = self._greedy_trials()
            self._selected.append(j)
            self._remaining.remove(j)
        else:
            take = self.opts.step_size
            perm = list(self.ordering.permutation)
            new_cols = perm[len(self._selected):len(self._selected) + take]
            cols = self._selected + new_cols
            init = None
            if self._last_beta is not None:
                init = np.append(self._last_beta, np.zeros(len(new_cols)))
            gfit = self._fit_ps(cols, init=init)
            eps, loss, h_obs, g1 = self._fluctuate(gfit)
            if loss > prev.empirical_loss:
                self._absorb(prev)
                gfit = self._fit_ps(cols, init=gfit.fit.coefficients)
                eps, loss, h_obs, g1 = self._fluctuate(gfit)
            self._selected = cols
        self._last_beta = gfit.fit.coefficients
        self._store(k, self._selected, gfit, eps, loss, h_obs, g1)

    def candidate(self, k: int) -> CandidateTriplet:
        if k >= self.n_candidates:
            raise IndexError(f"candidate {k} beyond sequence length {self.n_candidates}")
        while len(self._candidates) <= k:
            if not self._candidates:
                self._build_step0()
            else:
                self._build_next()
        return self._candidates[k]

    def all(self) -> list:
        return [self.candidate(k) for k in range(self.n_candidates)]


def build_sequence(ds: Dataset, qbar0: OutcomeModel,
                   opts: CtmleOptions) -> list:
    """Full-data candidate sequence (expects an already scaled outcome)."""
    ordering = _resolve_ordering(opts.strategy, ds, qbar0, opts)
    return SequenceBuilder(ds, qbar0, opts, ordering).all()


def _resolve_ordering(strategy, ds, qbar0, opts):
    if strategy == "greedy":
        return None
    if isinstance(strategy, CovariateOrdering):
        return strategy
    if strategy == "logistic":
        return logistic_preorder(ds, qbar0, opts.truncation)
    if strategy == "partial-corr":
        return partial_corr_preorder(ds, qbar0)
    raise ValueError(f"unknown strategy {strategy!r}")


def _strategy_label(strategy) -> str:
    if isinstance(strategy, CovariateOrdering):
        return strategy.strategy
    return str(strategy)


def _method_name(strategy) -> str:
    label = _strategy_label(strategy)
    return "ctmle-" + {"partial-corr": "partcorr"}.get(label, label)


class _ScoredRun:
    """Builders plus incremental scoring for one strategy."""

    def __init__(self, ds: Dataset, qbar_covariates, opts: CtmleOptions,
                 folds: FoldAssignment, strategy):
        self.ds = ds
        self.opts = opts
        self.folds = folds
        self.qbar0 = fit_outcome_model(ds, qbar_covariates)
        self.ordering = _resolve_ordering(strategy, ds, self.qbar0, opts)
        self.full = SequenceBuilder(ds, self.qbar0, opts, self.ordering)
        self.fold_builders = []
        for v in range(1, folds.V + 1):
            rows = folds.train_indices(v)
            qb_v = fit_outcome_model(ds.subset(rows), qbar_covariates)
            self.fold_builders.append(
                SequenceBuilder(ds, qb_v, opts, self.ordering, fit_rows=rows))
        self.scores: list[SelectionScore] = []

    @property
    def n_candidates(self) -> int:
        return self.full.n_candidates

    def score(self, k: int) -> SelectionScore:
        while len(self.scores) <= k:
            self.scores.append(self._score_next())
        return self.scores[k]

    def _score_next(self) -> SelectionScore:
        k = len(self.scores)
        ds, opts = self.ds, self.opts
        full_cand = self.full.candidate(k)
        psi_full = full_cand.plugin_ate()
        g1_full = full_cand.g_fit.g1
        rss = var = 0.0
        fold_psis = []
        for v, fb in enumerate(self.fold_builders, start=1):
            val = self.folds.val_indices(v)
            cand = fb.candidate(k)
            q_obs = expit(cand.logits_obs[val])
            y_val = ds.Y[val]
            if opts.criterion == "nll":
                rss += glm.bernoulli_nll(y_val, cand.logits_obs[val])
            else:
                rss += float(np.sum((y_val - q_obs) ** 2))
            psi_v = cand.plugin_ate(rows=val)
            fold_psis.append(psi_v)
            eic_val = cand.eic(ds.A, ds.Y, psi_v, rows=val, g1=g1_full)
            var += float(np.sum(eic_val ** 2))
        bias = float(np.mean(fold_psis) - psi_full)
        return SelectionScore.combine(k, rss, var, bias, ds.n)

    def run_selection(self):
        """Score candidates under the patience rule; return scores computed."""
        best_total = np.inf
        stale = 0
        for k in range(self.n_candidates):
            s = self.score(k)
            if s.total < best_total:
                best_total = s.total
                stale = 0
            else:
                stale += 1
            if self.opts.patience is not None and stale >= self.opts.patience:
                break
        return self.scores

    def ps_fit_counts(self) -> dict:
        return {
            "full": self.full.ps_fit_count,
            "folds": sum(fb.ps_fit_count for fb in self.fold_builders),
            "resets_full": self.full.reset_count,
        }


def cv_scores(ds: Dataset, qbar0: OutcomeModel, opts: CtmleOptions,
              folds: FoldAssignment) -> list:
    """Penalized cross-validated scores for every candidate index.

    ds must carry the scaled outcome.  qbar0 is refit inside each training
    fold from the same covariate set; the variance penalty pairs each
    fold-trained outcome model with the full-data treatment model, as the
    selection criterion prescribes.
    """
    run = _ScoredRun(ds, qbar0.covariates, opts, folds, opts.strategy)
    return [run.score(k) for k in range(run.n_candidates)]


def select_candidate(scores) -> int:
    """Index of the smallest total; ties go to the smaller index."""
    if not scores:
        raise ValueError("no candidate scores to select from")
    best = min(range(len(scores)), key=lambda i: (scores[i].total, scores[i].k))
    return scores[best].k


def _final_report(run: _ScoredRun, k_n: int, method: str,
                  scaler, include_scores: bool) -> EstimateReport:
    cand = run.full.candidate(k_n)
    psi = cand.plugin_ate()
    eic = cand.eic(run.ds.A, run.ds.Y, psi)
    counts = run.ps_fit_counts()
    diag = {
        "covariates_selected": [run.ds.covariate_names[j] for j in cand.covariate_set],
        "epsilon": cand.epsilon,
        "qbar_resets": counts["resets_full"],
        "ps_fits_full": counts["full"],
        "ps_fits_folds": counts["folds"],
        "scored_candidates": len(run.scores),
        "criterion": run.opts.criterion,
    }
    if include_scores:
        diag["scores"] = [
            {"k": s.k, "cv_rss": s.cv_rss, "cv_var": s.cv_var,
             "cv_bias": s.cv_bias, "total": s.total}
            for s in run.scores
        ]
    report = ic_inference(eic, psi, level=run.opts.level, method=method,
                          diagnostics=diag)
    report.k_selected = k_n
    return report.on_raw_scale(scaler)


def run_ctmle(ds: Dataset, qbar_covariates="all",
              opts: CtmleOptions | None = None,
              include_scores: bool = False, y_bounds=None) -> EstimateReport:
    """Collaborative targeted estimate of the ATE on a raw-scale dataset.

    Scales the outcome, fits the initial outcome model on the given
    covariate columns, builds the candidate sequence under opts.strategy,
    scores candidates by cross-validation (stopping early under the
    patience rule), and reports the selected candidate's substitution
    estimate with influence-curve inference on the raw outcome scale.
    y_bounds overrides the empirical continuous-outcome bounds.
    """
    opts = opts or CtmleOptions()
    ds_s, scaler = scale_outcome(ds, *(y_bounds or (None, None)))
    folds = make_folds(ds.n, opts.V, opts.seed)
    run = _ScoredRun(ds_s, qbar_covariates, opts, folds, opts.strategy)
    scores = run.run_selection()
    k_n = select_candidate(scores)
    return _final_report(run, k_n, _method_name(opts.strategy), scaler,
                         include_scores)


def iptw_post_selection(ds: Dataset, qbar_covariates="all",
                        opts: CtmleOptions | None = None,
                        y_bounds=None) -> EstimateReport:
    """IPTW with the treatment model refit on the covariates a collaborative
    run selected.

    The selection step follows opts.strategy (greedy by default, matching
    the procedure this composition comes from); the final weighting uses the
    raw-scale outcome.  The reported standard error treats the weights as
    known.
    """
    opts = opts or CtmleOptions()
    selection = run_ctmle(ds, qbar_covariates, opts, y_bounds=y_bounds)
    names = selection.diagnostics["covariates_selected"]
    cols = tuple(ds.covariate_names.index(c) for c in names)
    if cols:
        gfit = fit_propensity(ds.W, ds.A, cols, opts.truncation)
    else:
        gfit = intercept_only_propensity(ds.A, truncation=opts.truncation)
    psi = iptw(gfit, ds)
    w = np.where(ds.A == 1, 1.0 / gfit.g1, -1.0 / (1.0 - gfit.g1))
    ic = w * ds.Y - psi
    report = ic_inference(ic, psi, level=opts.level, method="iptw-ctmle",
                          diagnostics={"covariates_selected": list(names),
                                       "k_selected": selection.k_selected})
    report.k_selected = selection.k_selected
    return report
